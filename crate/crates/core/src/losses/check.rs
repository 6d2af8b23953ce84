//! Self-checks for the loss layer: central finite differences against the
//! analytic derivatives, and the exact reductions between loss kinds.
//!
//! The derivative under test is pluggable so that a deliberately broken
//! implementation can be fed through the same harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, softmax, LossConfig, LossKind, LossSpec};
use crate::data::Task;

/// Central-difference step in raw-score space.
pub const FD_STEP: f64 = 1e-6;
/// `|g - FD| <= GRAD_TOL * max(1, |g|)`.
pub const GRAD_TOL: f64 = 1e-6;
/// `|h - FD| <= HESS_TOL * max(1, |h|)`.
pub const HESS_TOL: f64 = 1e-5;
/// Draws with any probability this close to the margin are skipped.
pub const CLIP_BAND: f64 = 1e-4;
/// Reduction identities must agree to this absolute/relative tolerance.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Computes the unfloored gradient and Hessian of a spec at one sample.
pub trait Derivatives: Sync {
    fn grad_hess(&self, spec: &LossSpec, y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// The library's analytic derivatives.
pub struct Analytic;

impl Derivatives for Analytic {
    fn grad_hess(&self, spec: &LossSpec, y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = vec![0.0; z.len()];
        let mut h = vec![0.0; z.len()];
        spec.grad_hess_raw(y, z, &mut g, &mut h);
        (g, h)
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    /// Largest observed error as a multiple of its tolerance.
    pub worst: f64,
    pub detail: String,
}

/// Tasks used by the conformance grid.
pub fn check_tasks() -> [Task; 3] {
    [Task::Binary, Task::MultiClass(4), Task::MultiLabel(4)]
}

fn choose<R: Rng>(rng: &mut R, values: &[f64]) -> f64 {
    values[rng.random_range(0..values.len())]
}

/// Random loss parameters from the tuning grids.
pub fn random_config<R: Rng>(kind: LossKind, rng: &mut R) -> LossConfig {
    match kind {
        LossKind::Ce => LossConfig::ce(),
        LossKind::Wce => LossConfig::wce(choose(rng, &[2.0, 3.0, 5.0])),
        LossKind::Fl => LossConfig::fl(choose(rng, &[0.5, 1.0, 2.0])),
        LossKind::Asl => LossConfig::asl(
            choose(rng, &[0.0, 0.1]),
            choose(rng, &[0.5, 1.0, 2.0]),
            choose(rng, &[0.05, 0.2]),
        ),
        LossKind::Ace => LossConfig::ace(choose(rng, &[0.05, 0.2])),
        LossKind::Awe => LossConfig::awe(choose(rng, &[2.0, 3.0, 5.0]), choose(rng, &[0.05, 0.2])),
        LossKind::Cbce => LossConfig::cbce(choose(rng, &[0.9, 0.99, 0.999, 0.9999])),
    }
}

fn random_counts<R: Rng>(task: Task, rng: &mut R) -> Vec<usize> {
    (0..task.n_classes()).map(|_| rng.random_range(1..2000)).collect()
}

fn random_target<R: Rng>(task: Task, rng: &mut R) -> Vec<f64> {
    match task {
        Task::Binary => vec![f64::from(u8::from(rng.random_bool(0.5)))],
        Task::MultiClass(k) => {
            let c = rng.random_range(0..k);
            (0..k).map(|j| f64::from(u8::from(j == c))).collect()
        }
        Task::MultiLabel(k) => (0..k).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect(),
    }
}

fn probabilities(task: Task, z: &[f64]) -> Vec<f64> {
    match task {
        Task::MultiClass(_) => softmax(z),
        _ => z.iter().map(|&v| sigmoid(v)).collect(),
    }
}

fn scaled_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}

/// Finite-difference conformance of one (kind, task) pair over `draws`
/// random samples. The gradient is checked against differences of the
/// loss value, the Hessian against differences of the gradient.
pub fn finite_difference_check(
    kind: LossKind,
    task: Task,
    draws: usize,
    seed: u64,
    deriv: &dyn Derivatives,
) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((kind as u64) << 32) ^ task.n_outputs() as u64);
    let mut worst_g: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let mut skipped = 0;
    let mut checked = 0;
    let mut failure = None;
    while checked < draws {
        let config = random_config(kind, &mut rng);
        let counts = (kind == LossKind::Cbce).then(|| random_counts(task, &mut rng));
        let spec = config
            .resolve(task, counts.as_deref())
            .expect("grid parameters are valid");
        let y = random_target(task, &mut rng);
        let z: Vec<f64> = (0..task.n_outputs()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let margin = config.margin.unwrap_or(0.0);
        if margin > 0.0 && probabilities(task, &z).iter().any(|&p| (p - margin).abs() < CLIP_BAND) {
            skipped += 1;
            continue;
        }
        checked += 1;

        let (g, h) = deriv.grad_hess(&spec, &y, &z);
        for k in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += FD_STEP;
            zm[k] -= FD_STEP;
            let fd_g = (spec.value(&y, &zp) - spec.value(&y, &zm)) / (2.0 * FD_STEP);
            let fd_h = (deriv.grad_hess(&spec, &y, &zp).0[k] - deriv.grad_hess(&spec, &y, &zm).0[k])
                / (2.0 * FD_STEP);
            let eg = scaled_err(g[k], fd_g);
            let eh = scaled_err(h[k], fd_h);
            worst_g = worst_g.max(eg);
            worst_h = worst_h.max(eh);
            if failure.is_none() && (eg > GRAD_TOL || eh > HESS_TOL || !eg.is_finite() || !eh.is_finite()) {
                failure = Some(format!(
                    "{config:?} y={y:?} z={z:?} output {k}: g={} fd={fd_g}, h={} fd={fd_h}",
                    g[k], h[k]
                ));
            }
        }
    }
    CheckOutcome {
        name: format!("{kind} {task}"),
        passed: failure.is_none(),
        checked,
        skipped,
        worst: (worst_g / GRAD_TOL).max(worst_h / HESS_TOL),
        detail: failure.unwrap_or_else(|| {
            format!("max scaled error g {worst_g:.2e}, h {worst_h:.2e}")
        }),
    }
}

/// Runs the finite-difference check over every supported (kind, task).
pub fn finite_difference_suite(draws: usize, seed: u64, deriv: &dyn Derivatives) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for kind in LossKind::ALL {
        for task in check_tasks() {
            if super::supports(kind, task) {
                out.push(finite_difference_check(kind, task, draws, seed, deriv));
            }
        }
    }
    out
}

/// A reduction identity: a family of configs that must equal a reference.
struct Identity {
    name: &'static str,
    tasks: &'static [Task],
    pairs: fn(&mut ChaCha8Rng) -> (LossConfig, LossConfig),
}

const ALL_TASKS: &[Task] = &[Task::Binary, Task::MultiClass(4), Task::MultiLabel(4)];
const SINGLE_LABEL_TASKS: &[Task] = &[Task::Binary, Task::MultiClass(4)];

fn identities() -> [Identity; 6] {
    [
        Identity {
            name: "FL(gamma=0) == CE",
            tasks: ALL_TASKS,
            pairs: |_| (LossConfig::fl(0.0), LossConfig::ce()),
        },
        Identity {
            name: "WCE(w=1) == CE",
            tasks: ALL_TASKS,
            pairs: |_| (LossConfig::wce(1.0), LossConfig::ce()),
        },
        Identity {
            name: "ACE(m=0) == CE",
            tasks: ALL_TASKS,
            pairs: |_| (LossConfig::ace(0.0), LossConfig::ce()),
        },
        Identity {
            name: "AWE(m=0, w) == WCE(w)",
            tasks: ALL_TASKS,
            pairs: |rng| {
                let w = choose(rng, &[2.0, 3.0, 5.0]);
                (LossConfig::awe(w, 0.0), LossConfig::wce(w))
            },
        },
        Identity {
            name: "ASL(gamma+=gamma-=gamma, m=0) == FL(gamma)",
            tasks: ALL_TASKS,
            pairs: |rng| {
                let g = choose(rng, &[0.5, 1.0, 2.0]);
                (LossConfig::asl(g, g, 0.0), LossConfig::fl(g))
            },
        },
        Identity {
            name: "CBCE(beta=0) == CE",
            tasks: SINGLE_LABEL_TASKS,
            pairs: |_| (LossConfig::cbce(0.0), LossConfig::ce()),
        },
    ]
}

/// Checks every reduction identity on value, gradient and unfloored
/// Hessian over `draws` random samples per task.
pub fn identity_suite(draws: usize, seed: u64, deriv: &dyn Derivatives) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    identities()
        .iter()
        .map(|id| {
            let mut worst: f64 = 0.0;
            let mut failure = None;
            let mut checked = 0;
            for &task in id.tasks {
                for _ in 0..draws {
                    let (lhs, rhs) = (id.pairs)(&mut rng);
                    let counts = random_counts(task, &mut rng);
                    let counts_for = |c: &LossConfig| (c.kind == LossKind::Cbce).then_some(counts.as_slice());
                    let a = lhs.resolve(task, counts_for(&lhs)).expect("valid identity config");
                    let b = rhs.resolve(task, counts_for(&rhs)).expect("valid identity config");
                    let y = random_target(task, &mut rng);
                    let z: Vec<f64> = (0..task.n_outputs()).map(|_| rng.random_range(-8.0..8.0)).collect();
                    let (ga, ha) = deriv.grad_hess(&a, &y, &z);
                    let (gb, hb) = deriv.grad_hess(&b, &y, &z);
                    let mut errs = vec![scaled_err(a.value(&y, &z), b.value(&y, &z))];
                    errs.extend(ga.iter().zip(&gb).map(|(x, y)| scaled_err(*x, *y)));
                    errs.extend(ha.iter().zip(&hb).map(|(x, y)| scaled_err(*x, *y)));
                    let e = errs.into_iter().fold(0.0, f64::max);
                    worst = worst.max(e);
                    if failure.is_none() && (e.is_nan() || e > IDENTITY_TOL) {
                        failure = Some(format!("{task} y={y:?} z={z:?}: scaled difference {e:.3e}"));
                    }
                    checked += 1;
                }
            }
            CheckOutcome {
                name: id.name.to_string(),
                passed: failure.is_none(),
                checked,
                skipped: 0,
                worst: worst / IDENTITY_TOL,
                detail: failure.unwrap_or_else(|| format!("max scaled difference {worst:.2e}")),
            }
        })
        .collect()
}
