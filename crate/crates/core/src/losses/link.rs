//! Link functions and their numerically stable logs.

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(z) = -softplus(-z)`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

pub fn logsumexp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = logsumexp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

/// Softmax probabilities with accurate complements and logs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClassProb {
    pub p: f64,
    pub q: f64,
    pub log_p: f64,
    pub log_q: f64,
}

pub(crate) fn softmax_parts(z: &[f64], out: &mut Vec<ClassProb>) {
    out.clear();
    let lse = logsumexp(z);
    let probs: Vec<f64> = z.iter().map(|&v| (v - lse).exp()).collect();
    for (j, (&zj, &p)) in z.iter().zip(&probs).enumerate() {
        let log_p = zj - lse;
        let (q, log_q) = if p < 0.5 {
            (1.0 - p, (-p).ln_1p())
        } else {
            // sum the other classes directly; 1 - p would cancel
            let q: f64 = probs.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).sum();
            let others: Vec<f64> = z.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).collect();
            (q, logsumexp(&others) - lse)
        };
        out.push(ClassProb { p, q, log_p, log_q });
    }
}
