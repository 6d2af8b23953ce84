use super::link::ClassProb;

/// Unified parameterisation of the positive/negative loss parts.
///
/// `-l_pos = -w_pos (1-p)^gamma_pos log p` and
/// `-l_neg = -p_m^gamma_neg log(1-p_m)`, `p_m = max(p - margin, 0)`.
/// Every loss kind maps onto one point of this family, so the reduction
/// identities between kinds hold exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PartParams {
    pub w_pos: f64,
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub margin: f64,
}

impl PartParams {
    pub const CROSS_ENTROPY: PartParams = PartParams {
        w_pos: 1.0,
        gamma_pos: 0.0,
        gamma_neg: 0.0,
        margin: 0.0,
    };
}

/// One part evaluated at `p`: its value, `phi' * pq` and `phi'' * (pq)^2`
/// where `phi` is the part as a function of `p`. Both scaled derivatives
/// stay finite as `p -> 0` or `p -> 1`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Part {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[inline]
fn pow(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        x.powf(gamma)
    }
}

pub(crate) fn positive_part(params: &PartParams, cp: &ClassProb) -> Part {
    let PartParams { w_pos: w, gamma_pos: g, .. } = *params;
    let ClassProb { p, q, log_p, .. } = *cp;
    let qg = pow(q, g);
    Part {
        value: -w * qg * log_p,
        d1: w * qg * (g * p * log_p - q),
        d2: w * qg * (-g * (g - 1.0) * p * p * log_p + 2.0 * g * p * q + q * q),
    }
}

pub(crate) fn negative_part(params: &PartParams, cp: &ClassProb) -> Part {
    let PartParams { gamma_neg: g, margin: m, .. } = *params;
    let ClassProb { p, q, log_q, .. } = *cp;
    if m > 0.0 && p <= m {
        return Part { value: 0.0, d1: 0.0, d2: 0.0 };
    }
    // u = p_m, r = 1 - p_m = q + m; rho = p/u and sigma = q/r are exactly 1
    // without a margin
    let (u, log_r, rho, sigma) = if m == 0.0 {
        (p, log_q, 1.0, 1.0)
    } else {
        let u = p - m;
        let r = q + m;
        (u, r.ln(), p / u, q / r)
    };
    let ug = pow(u, g);
    Part {
        value: -ug * log_r,
        d1: ug * (-g * rho * q * log_r + p * sigma),
        d2: ug
            * (-g * (g - 1.0) * rho * rho * q * q * log_r
                + 2.0 * g * rho * p * q * sigma
                + p * p * sigma * sigma),
    }
}
