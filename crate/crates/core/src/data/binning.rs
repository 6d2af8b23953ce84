use rayon::prelude::*;

use super::Dataset;
use crate::error::{Error, Result};

/// Per-feature thresholds and the resulting bin index of every row.
///
/// A value `x` falls in bin `#{t : t < x}`, so `bin(x) <= b` exactly when
/// `x <= thresholds[b]`. Missing values get the extra bin `n_bins(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMap {
    thresholds: Vec<Vec<f64>>,
    /// Column-major: `bins[f][row]`.
    bins: Vec<Vec<u16>>,
    max_bin: usize,
}

impl BinMap {
    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn max_bin(&self) -> usize {
        self.max_bin
    }

    pub fn thresholds(&self, feature: usize) -> &[f64] {
        &self.thresholds[feature]
    }

    pub fn all_thresholds(&self) -> &[Vec<f64>] {
        &self.thresholds
    }

    /// Number of value bins for `feature`, not counting the missing bin.
    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn missing_bin(&self, feature: usize) -> u16 {
        self.n_bins(feature) as u16
    }

    pub fn column(&self, feature: usize) -> &[u16] {
        &self.bins[feature]
    }

    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[feature][row]
    }

    pub fn bin_value(&self, feature: usize, value: Option<f64>) -> u16 {
        match value {
            Some(x) => self.thresholds[feature].partition_point(|&t| t < x) as u16,
            None => self.missing_bin(feature),
        }
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    // adjacent floats: the midpoint may round up onto `hi`
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn feature_thresholds(mut values: Vec<f64>, max_bin: usize) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    values.sort_unstable_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() <= max_bin {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    // equal-frequency cuts; a cut inside a run of ties moves to the end of
    // the run, and cuts that collide are merged
    let n = values.len();
    let mut out: Vec<f64> = Vec::with_capacity(max_bin - 1);
    for q in 1..max_bin {
        let mut pos = q * n / max_bin;
        if pos == 0 {
            continue;
        }
        while pos < n && values[pos - 1] == values[pos] {
            pos += 1;
        }
        if pos >= n {
            break;
        }
        let t = midpoint(values[pos - 1], values[pos]);
        if out.last().is_none_or(|&last| t > last) {
            out.push(t);
        }
    }
    out
}

/// Quantile thresholds from `train_rows`, applied to every row of `d`.
pub fn build_bins(d: &Dataset, train_rows: &[usize], max_bin: usize) -> Result<BinMap> {
    if !(2..=u16::MAX as usize - 1).contains(&max_bin) {
        return Err(Error::Param(format!("max_bin must be in [2, 65534], got {max_bin}")));
    }
    let x = &d.features;
    let thresholds: Vec<Vec<f64>> = (0..x.n_cols())
        .into_par_iter()
        .map(|f| {
            let vals = train_rows.iter().filter_map(|&r| x.get(r, f)).collect();
            feature_thresholds(vals, max_bin)
        })
        .collect();
    let bins = thresholds
        .par_iter()
        .enumerate()
        .map(|(f, th)| {
            let missing = th.len() as u16 + 1;
            (0..x.n_rows())
                .map(|r| match x.get(r, f) {
                    Some(v) => th.partition_point(|&t| t < v) as u16,
                    None => missing,
                })
                .collect()
        })
        .collect();
    Ok(BinMap {
        thresholds,
        bins,
        max_bin,
    })
}
