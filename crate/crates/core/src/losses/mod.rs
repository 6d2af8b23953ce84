//! Class-balanced loss family with analytic gradients and Hessians.
//!
//! Every loss is written per label as `l = -y*l_pos(p) - (1-y)*l_neg(p)`:
//!
//! | kind | `l_pos`                | `l_neg`                    |
//! |------|------------------------|----------------------------|
//! | CE   | `log p`                | `log(1-p)`                 |
//! | WCE  | `w log p`              | `log(1-p)`                 |
//! | FL   | `(1-p)^g log p`        | `p^g log(1-p)`             |
//! | ASL  | `(1-p)^g+ log p`       | `p_m^g- log(1-p_m)`        |
//! | ACE  | `log p`                | `log(1-p_m)`               |
//! | AWE  | `w log p`              | `log(1-p_m)`               |
//! | CBCE | CE scaled by the class weight of the true class      ||
//!
//! with `p_m = max(p - m, 0)`. Binary and multi-label outputs use the
//! sigmoid link (multi-label sums independent per-label terms). Multi-class
//! outputs apply the same per-class decomposition to softmax probabilities
//! under one-hot targets, with a diagonal Hessian.

pub mod check;
mod link;
mod parts;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};

pub use link::{log_sigmoid, logsumexp, sigmoid, softmax, softplus};
use link::{softmax_parts, ClassProb};
use parts::{negative_part, positive_part, PartParams};

/// Lower bound applied to every per-sample Hessian entry.
pub const DEFAULT_H_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Wce,
    Fl,
    Asl,
    Ace,
    Awe,
    Cbce,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Ce,
        LossKind::Wce,
        LossKind::Fl,
        LossKind::Asl,
        LossKind::Ace,
        LossKind::Awe,
        LossKind::Cbce,
    ];

    /// Everything except plain cross-entropy.
    pub fn is_class_balanced(self) -> bool {
        self != LossKind::Ce
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Wce => "wce",
            LossKind::Fl => "fl",
            LossKind::Asl => "asl",
            LossKind::Ace => "ace",
            LossKind::Awe => "awe",
            LossKind::Cbce => "cbce",
        }
    }

    /// Parameter names this kind accepts, as used in config files.
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            LossKind::Ce => &[],
            LossKind::Wce => &["w"],
            LossKind::Fl => &["gamma"],
            LossKind::Asl => &["gamma_pos", "gamma_neg", "margin"],
            LossKind::Ace => &["margin"],
            LossKind::Awe => &["w", "margin"],
            LossKind::Cbce => &["beta"],
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_ascii_uppercase())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param(format!("unknown loss kind `{s}`")))
    }
}

/// Capability table: CBCE has no multi-label form, everything else
/// supports all three tasks.
pub fn supports(kind: LossKind, task: Task) -> bool {
    !(kind == LossKind::Cbce && matches!(task, Task::MultiLabel(_)))
}

/// Class-balanced weights `(1-beta)/(1-beta^n_k)`, scaled to sum to K.
pub fn cbce_weights(counts: &[usize], beta: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Param(format!("beta must be in [0, 1), got {beta}")));
    }
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Param("class-balanced weights need every count >= 1".into()));
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| {
            // 1 - beta^n, accurate when beta^n is close to 1
            let denom = -(n as f64 * beta.ln()).exp_m1();
            (1.0 - beta) / denom
        })
        .collect();
    let scale = counts.len() as f64 / raw.iter().sum::<f64>();
    Ok(raw.into_iter().map(|w| w * scale).collect())
}

/// Loss kind plus its parameters, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_pos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_neg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            w: None,
            gamma: None,
            gamma_pos: None,
            gamma_neg: None,
            margin: None,
            beta: None,
        }
    }

    pub fn ce() -> Self {
        Self::new(LossKind::Ce)
    }

    pub fn wce(w: f64) -> Self {
        Self { w: Some(w), ..Self::new(LossKind::Wce) }
    }

    pub fn fl(gamma: f64) -> Self {
        Self { gamma: Some(gamma), ..Self::new(LossKind::Fl) }
    }

    pub fn asl(gamma_pos: f64, gamma_neg: f64, margin: f64) -> Self {
        Self {
            gamma_pos: Some(gamma_pos),
            gamma_neg: Some(gamma_neg),
            margin: Some(margin),
            ..Self::new(LossKind::Asl)
        }
    }

    pub fn ace(margin: f64) -> Self {
        Self { margin: Some(margin), ..Self::new(LossKind::Ace) }
    }

    pub fn awe(w: f64, margin: f64) -> Self {
        Self {
            w: Some(w),
            margin: Some(margin),
            ..Self::new(LossKind::Awe)
        }
    }

    pub fn cbce(beta: f64) -> Self {
        Self { beta: Some(beta), ..Self::new(LossKind::Cbce) }
    }

    /// Sets a parameter by its config name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "w" => &mut self.w,
            "gamma" => &mut self.gamma,
            "gamma_pos" => &mut self.gamma_pos,
            "gamma_neg" => &mut self.gamma_neg,
            "margin" => &mut self.margin,
            "beta" => &mut self.beta,
            other => return Err(Error::Param(format!("unknown loss parameter `{other}`"))),
        };
        *slot = Some(value);
        Ok(())
    }

    fn entries(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("w", self.w),
            ("gamma", self.gamma),
            ("gamma_pos", self.gamma_pos),
            ("gamma_neg", self.gamma_neg),
            ("margin", self.margin),
            ("beta", self.beta),
        ]
    }

    fn require(&self, name: &str, value: Option<f64>) -> Result<f64> {
        let v = value.ok_or_else(|| {
            Error::Param(format!("loss.{name} is required for {}", self.kind))
        })?;
        if !v.is_finite() {
            return Err(Error::Param(format!("loss.{name} must be finite, got {v}")));
        }
        Ok(v)
    }

    fn validate(&self) -> Result<PartParams> {
        let allowed = self.kind.parameter_names();
        for (name, value) in self.entries() {
            if value.is_some() && !allowed.contains(&name) {
                return Err(Error::Param(format!(
                    "loss.{name} does not apply to {}",
                    self.kind
                )));
            }
        }
        let weight = |v: f64| {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::Param(format!("loss.w must be > 0, got {v}")))
            }
        };
        let exponent = |name: &str, v: f64| {
            if v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::Param(format!("loss.{name} must be >= 0, got {v}")))
            }
        };
        let margin = |v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::Param(format!("loss.margin must be in [0, 1), got {v}")))
            }
        };
        let mut params = PartParams::CROSS_ENTROPY;
        match self.kind {
            LossKind::Ce => {}
            LossKind::Wce => params.w_pos = weight(self.require("w", self.w)?)?,
            LossKind::Fl => {
                let g = exponent("gamma", self.require("gamma", self.gamma)?)?;
                params.gamma_pos = g;
                params.gamma_neg = g;
            }
            LossKind::Asl => {
                let gp = exponent("gamma_pos", self.require("gamma_pos", self.gamma_pos)?)?;
                let gn = exponent("gamma_neg", self.require("gamma_neg", self.gamma_neg)?)?;
                if gn < gp {
                    return Err(Error::Param(format!(
                        "ASL needs gamma_neg >= gamma_pos, got {gn} < {gp}"
                    )));
                }
                params.gamma_pos = gp;
                params.gamma_neg = gn;
                params.margin = margin(self.require("margin", self.margin)?)?;
            }
            LossKind::Ace => params.margin = margin(self.require("margin", self.margin)?)?,
            LossKind::Awe => {
                params.w_pos = weight(self.require("w", self.w)?)?;
                params.margin = margin(self.require("margin", self.margin)?)?;
            }
            LossKind::Cbce => {
                let beta = self.require("beta", self.beta)?;
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::Param(format!("loss.beta must be in [0, 1), got {beta}")));
                }
            }
        }
        Ok(params)
    }

    /// Binds the config to a task. CBCE additionally needs the per-class
    /// training counts (`[neg, pos]` for binary).
    pub fn resolve(&self, task: Task, class_counts: Option<&[usize]>) -> Result<LossSpec> {
        LossSpec::new(self.clone(), task, class_counts.map(<[usize]>::to_vec))
    }
}

/// Per-sample, per-output first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// A validated loss bound to a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossSpecRepr", into = "LossSpecRepr")]
pub struct LossSpec {
    config: LossConfig,
    task: Task,
    class_counts: Option<Vec<usize>>,
    class_weights: Option<Vec<f64>>,
    params: PartParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSpecRepr {
    config: LossConfig,
    task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_counts: Option<Vec<usize>>,
}

impl TryFrom<LossSpecRepr> for LossSpec {
    type Error = Error;

    fn try_from(r: LossSpecRepr) -> Result<Self> {
        LossSpec::new(r.config, r.task, r.class_counts)
    }
}

impl From<LossSpec> for LossSpecRepr {
    fn from(s: LossSpec) -> Self {
        Self {
            config: s.config,
            task: s.task,
            class_counts: s.class_counts,
        }
    }
}

impl LossSpec {
    pub fn new(config: LossConfig, task: Task, class_counts: Option<Vec<usize>>) -> Result<Self> {
        if !supports(config.kind, task) {
            return Err(Error::Capability { kind: config.kind, task });
        }
        let params = config.validate()?;
        let (class_counts, class_weights) = match config.kind {
            LossKind::Cbce => {
                let counts = class_counts.ok_or_else(|| {
                    Error::Param("CBCE needs per-class training counts".into())
                })?;
                if counts.len() != task.n_classes() {
                    return Err(Error::Param(format!(
                        "CBCE got {} class counts for a {} task",
                        counts.len(),
                        task
                    )));
                }
                let weights = cbce_weights(&counts, config.beta.expect("validated"))?;
                (Some(counts), Some(weights))
            }
            _ => (None, None),
        };
        Ok(Self {
            config,
            task,
            class_counts,
            class_weights,
            params,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.config.kind
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn class_weights(&self) -> Option<&[f64]> {
        self.class_weights.as_deref()
    }

    pub fn n_outputs(&self) -> usize {
        self.task.n_outputs()
    }

    fn check_shapes(&self, y: &[f64], z: &[f64]) {
        let k = self.n_outputs();
        assert_eq!(y.len(), k, "target length must match the task's output count");
        assert_eq!(z.len(), k, "score length must match the task's output count");
    }

    /// Weight of the true class under CBCE, 1 otherwise.
    fn sample_weight(&self, y: &[f64]) -> f64 {
        let Some(w) = &self.class_weights else { return 1.0 };
        match self.task {
            Task::Binary => w[usize::from(y[0] > 0.5)],
            _ => {
                let class = y.iter().position(|&t| t > 0.5).expect("one-hot target");
                w[class]
            }
        }
    }

    /// Exact per-sample loss.
    pub fn value(&self, y: &[f64], z: &[f64]) -> f64 {
        self.check_shapes(y, z);
        let s = self.sample_weight(y);
        match self.task {
            Task::Binary | Task::MultiLabel(_) => {
                y.iter().zip(z).map(|(&t, &zk)| binary_term(&self.params, t, zk).0).sum::<f64>() * s
            }
            Task::MultiClass(_) => {
                let mut probs = Vec::with_capacity(z.len());
                softmax_parts(z, &mut probs);
                y.iter()
                    .zip(&probs)
                    .map(|(&t, cp)| class_part(&self.params, t, cp).value)
                    .sum::<f64>()
                    * s
            }
        }
    }

    /// Analytic gradient and Hessian before flooring.
    pub fn grad_hess_raw(&self, y: &[f64], z: &[f64], grad: &mut [f64], hess: &mut [f64]) {
        self.check_shapes(y, z);
        let s = self.sample_weight(y);
        match self.task {
            Task::Binary | Task::MultiLabel(_) => {
                for k in 0..z.len() {
                    let (_, g, h) = binary_term(&self.params, y[k], z[k]);
                    grad[k] = s * g;
                    hess[k] = s * h;
                }
            }
            Task::MultiClass(_) => {
                let mut probs = Vec::with_capacity(z.len());
                softmax_parts(z, &mut probs);
                multiclass_grad_hess(&self.params, y, &probs, grad, hess);
                for k in 0..z.len() {
                    grad[k] *= s;
                    hess[k] *= s;
                }
            }
        }
    }

    /// Gradient and Hessian with every Hessian entry floored at `h_floor`.
    pub fn grad_hess_floored(&self, y: &[f64], z: &[f64], h_floor: f64) -> GradHess {
        let k = self.n_outputs();
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k];
        self.grad_hess_raw(y, z, &mut grad, &mut hess);
        for h in &mut hess {
            *h = h.max(h_floor);
        }
        GradHess { grad, hess }
    }

    pub fn grad_hess(&self, y: &[f64], z: &[f64]) -> GradHess {
        self.grad_hess_floored(y, z, DEFAULT_H_FLOOR)
    }
}

/// Loss value for one sample.
pub fn loss_value(spec: &LossSpec, y: &[f64], z: &[f64]) -> f64 {
    spec.value(y, z)
}

/// Floored gradient/Hessian for one sample.
pub fn loss_grad_hess(spec: &LossSpec, y: &[f64], z: &[f64]) -> GradHess {
    spec.grad_hess(y, z)
}

/// Value, gradient and Hessian of one sigmoid-linked label.
#[inline]
fn binary_term(params: &PartParams, y: f64, z: f64) -> (f64, f64, f64) {
    let cp = ClassProb {
        p: sigmoid(z),
        q: sigmoid(-z),
        log_p: log_sigmoid(z),
        log_q: log_sigmoid(-z),
    };
    let part = class_part(params, y, &cp);
    // d2p/dz2 = pq(q - p), so the second chain-rule term is g1*(q - p)
    (part.value, part.d1, part.d2 + part.d1 * (cp.q - cp.p))
}

#[inline]
fn class_part(params: &PartParams, y: f64, cp: &ClassProb) -> parts::Part {
    if y > 0.5 {
        positive_part(params, cp)
    } else {
        negative_part(params, cp)
    }
}

/// Softmax chain rule. With `D1_j = phi_j' p_j q_j` and
/// `D2_j = phi_j'' p_j^2 q_j^2` (all finite even as `q_j -> 0`),
/// `dp_j/dz_k = p_j (d_jk - p_k)` gives
/// `g_k = sum_j D1_j t_jk` and
/// `h_k = sum_j D2_j t_jk^2 + D1_j (t_jk (d_jk - p_k) - p_k q_k / q_j)`
/// where `t_jk = (d_jk - p_k) / q_j`.
fn multiclass_grad_hess(
    params: &PartParams,
    y: &[f64],
    probs: &[ClassProb],
    grad: &mut [f64],
    hess: &mut [f64],
) {
    let parts: Vec<parts::Part> = y.iter().zip(probs).map(|(&t, cp)| class_part(params, t, cp)).collect();
    for k in 0..probs.len() {
        let pk = probs[k].p;
        let qk = probs[k].q;
        let mut g = 0.0;
        let mut h = 0.0;
        for (j, part) in parts.iter().enumerate() {
            let (t, delta_minus_p, e) = if j == k {
                (1.0, qk, pk)
            } else if probs[j].q > 0.0 {
                (-pk / probs[j].q, -pk, pk * qk / probs[j].q)
            } else {
                (0.0, -pk, 0.0)
            };
            g += part.d1 * t;
            h += part.d2 * t * t + part.d1 * (t * delta_minus_p - e);
        }
        grad[k] = g;
        hess[k] = h;
    }
}
