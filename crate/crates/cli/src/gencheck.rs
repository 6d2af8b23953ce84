use imbaboost::losses::check::{finite_difference_suite, identity_suite, Analytic, CheckOutcome, Derivatives};
use imbaboost::{LossKind, LossSpec};

/// Analytic derivatives with one loss's gradient scaled, to prove the
/// checks catch a wrong implementation.
pub struct ScaledGradient {
    pub kind: LossKind,
    pub factor: f64,
}

impl Derivatives for ScaledGradient {
    fn grad_hess(&self, spec: &LossSpec, y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut g, h) = Analytic.grad_hess(spec, y, z);
        if spec.kind() == self.kind {
            for v in &mut g {
                *v *= self.factor;
            }
        }
        (g, h)
    }
}

pub struct GencheckReport {
    pub finite_difference: Vec<CheckOutcome>,
    pub identities: Vec<CheckOutcome>,
}

impl GencheckReport {
    pub fn passed(&self) -> bool {
        self.finite_difference.iter().chain(&self.identities).all(|c| c.passed)
    }

    /// Losses with at least one failing finite-difference check.
    pub fn failing_losses(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.finite_difference.iter().filter(|c| !c.passed) {
            let kind = c.name.split_whitespace().next().unwrap_or(&c.name).to_string();
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
        out
    }

    pub fn lines(&self) -> Vec<String> {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        let mut lines = Vec::new();
        for c in &self.finite_difference {
            lines.push(format!(
                "{} finite-difference {:<24} checked {:>5} skipped {:>3}  {}",
                mark(c.passed),
                c.name,
                c.checked,
                c.skipped,
                c.detail
            ));
        }
        for c in &self.identities {
            lines.push(format!("{} identity {:<44} {}", mark(c.passed), c.name, c.detail));
        }
        let total = self.finite_difference.len() + self.identities.len();
        if self.passed() {
            lines.push(format!("all {total} checks passed ({} identities)", self.identities.len()));
        } else {
            let ids: Vec<&str> = self.identities.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            let mut msg = format!("failed: {}", self.failing_losses().join(", "));
            if !ids.is_empty() {
                msg.push_str(&format!("; identities: {}", ids.join("; ")));
            }
            lines.push(msg);
        }
        lines
    }
}

pub fn gencheck(draws: usize, seed: u64, deriv: &dyn Derivatives) -> GencheckReport {
    GencheckReport {
        finite_difference: finite_difference_suite(draws, seed, deriv),
        identities: identity_suite(draws, seed, deriv),
    }
}
