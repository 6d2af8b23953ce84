//! Per-feature gradient histograms and the second-order split search.

use rayon::prelude::*;

use crate::data::BinMap;

/// Summed gradient statistics for one node, one entry per tree output.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NodeStats {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub count: usize,
}

impl NodeStats {
    pub fn zeros(width: usize) -> Self {
        NodeStats { grad: vec![0.0; width], hess: vec![0.0; width], count: 0 }
    }

    /// Sums in row order so the result does not depend on scheduling.
    pub fn collect(rows: &[u32], grad: &[f64], hess: &[f64], stride: usize, outputs: &[usize]) -> Self {
        let mut s = NodeStats::zeros(outputs.len());
        for &r in rows {
            let base = r as usize * stride;
            for (j, &k) in outputs.iter().enumerate() {
                s.grad[j] += grad[base + k];
                s.hess[j] += hess[base + k];
            }
        }
        s.count = rows.len();
        s
    }
}

/// `sign(g) * max(|g| - alpha, 0)`.
#[inline]
pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        g
    } else if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// Half the reduction in regularised objective obtained by a leaf with
/// summed statistics `(g, h)` at its optimal weight.
#[inline]
pub(crate) fn leaf_score(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let t = soft_threshold(g, alpha);
    t * t / (h + lambda)
}

#[inline]
pub(crate) fn leaf_weight(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    -soft_threshold(g, alpha) / (h + lambda)
}

pub(crate) fn stats_score(s: &NodeStats, lambda: f64, alpha: f64) -> f64 {
    s.grad.iter().zip(&s.hess).map(|(&g, &h)| leaf_score(g, h, lambda, alpha)).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct SplitCandidate {
    pub gain: f64,
    pub feature: usize,
    /// Rows whose bin is `<= bin` go left.
    pub bin: u16,
    pub default_left: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SplitRules {
    pub lambda: f64,
    pub alpha: f64,
    pub min_samples_leaf: usize,
}

/// Best split of the rows `rows` over all features, or `None` when no split
/// has positive gain. Ties go to the lowest feature and then the lowest bin.
#[allow(clippy::too_many_arguments)]
pub(crate) fn best_split(
    bins: &BinMap,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    stride: usize,
    outputs: &[usize],
    total: &NodeStats,
    rules: SplitRules,
) -> Option<SplitCandidate> {
    if rows.len() < 2 * rules.min_samples_leaf.max(1) {
        return None;
    }
    let parent = stats_score(total, rules.lambda, rules.alpha);
    let per_feature: Vec<Option<SplitCandidate>> = (0..bins.n_features())
        .into_par_iter()
        .map(|f| feature_best(bins, f, rows, grad, hess, stride, outputs, total, parent, rules))
        .collect();
    let mut best: Option<SplitCandidate> = None;
    for cand in per_feature.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| cand.gain > b.gain) {
            best = Some(cand);
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn feature_best(
    bins: &BinMap,
    feature: usize,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    stride: usize,
    outputs: &[usize],
    total: &NodeStats,
    parent: f64,
    rules: SplitRules,
) -> Option<SplitCandidate> {
    let n_bins = bins.n_bins(feature);
    let width = outputs.len();
    // one slot past the regular bins holds the missing values
    let slots = n_bins + 1;
    let mut g_hist = vec![0.0; slots * width];
    let mut h_hist = vec![0.0; slots * width];
    let mut counts = vec![0usize; slots];
    let column = bins.column(feature);
    for &r in rows {
        let b = column[r as usize] as usize;
        let base = r as usize * stride;
        counts[b] += 1;
        for (j, &k) in outputs.iter().enumerate() {
            g_hist[b * width + j] += grad[base + k];
            h_hist[b * width + j] += hess[base + k];
        }
    }
    let missing = n_bins;
    let n_missing = counts[missing];
    let miss_g = &g_hist[missing * width..(missing + 1) * width];
    let miss_h = &h_hist[missing * width..(missing + 1) * width];

    let mut left = NodeStats::zeros(width);
    let mut best: Option<SplitCandidate> = None;
    let directions: &[bool] = if n_missing > 0 { &[true, false] } else { &[true] };
    for b in 0..n_bins {
        left.count += counts[b];
        for j in 0..width {
            left.grad[j] += g_hist[b * width + j];
            left.hess[j] += h_hist[b * width + j];
        }
        for &default_left in directions {
            let n_left = left.count + if default_left { n_missing } else { 0 };
            let n_right = total.count - n_left;
            if n_left < rules.min_samples_leaf.max(1) || n_right < rules.min_samples_leaf.max(1) {
                continue;
            }
            let mut gain = -parent;
            for j in 0..width {
                let (gl, hl) = if default_left {
                    (left.grad[j] + miss_g[j], left.hess[j] + miss_h[j])
                } else {
                    (left.grad[j], left.hess[j])
                };
                let (gr, hr) = (total.grad[j] - gl, total.hess[j] - hl);
                gain += leaf_score(gl, hl, rules.lambda, rules.alpha) + leaf_score(gr, hr, rules.lambda, rules.alpha);
            }
            gain *= 0.5;
            // gains within rounding of the parent score are not improvements
            if gain > 1e-12 * parent && best.as_ref().is_none_or(|c| gain > c.gain) {
                best = Some(SplitCandidate { gain, feature, bin: b as u16, default_left });
            }
        }
    }
    best
}
