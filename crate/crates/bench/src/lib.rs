//! Synthetic inputs shared by the benchmarks.

use imbaboost::{Dataset, FeatureMatrix, LabelBlock, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear-threshold labels over uniform features; about one row in
/// `ir + 1` is positive for binary tasks.
pub fn synthetic(n: usize, n_features: usize, task: Task, ir: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * n_features).map(|_| rng.random_range(-1.0..1.0)).collect();
    let score = |i: usize, j: usize, rng: &mut ChaCha8Rng| {
        x[i * n_features + j % n_features] + 0.5 * x[i * n_features + (j + 1) % n_features] + rng.random_range(-0.3..0.3)
    };
    let cut = 1.5 - 3.0 / (ir + 1.0);
    let labels = match task {
        Task::Binary => LabelBlock::binary((0..n).map(|i| u32::from(score(i, 0, &mut rng) > cut)).collect()),
        Task::MultiClass(k) => LabelBlock::multi_class(
            k,
            (0..n)
                .map(|i| {
                    let s = score(i, 0, &mut rng);
                    (((s + 1.5) / 3.0 * k as f64).floor() as i64).clamp(0, k as i64 - 1) as u32
                })
                .collect(),
        ),
        Task::MultiLabel(k) => LabelBlock::multi_label(
            k,
            (0..n).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| u32::from(score(i, 2 * j, &mut rng) > cut)).collect(),
        ),
    };
    Dataset::new(FeatureMatrix::new(n, n_features, x).unwrap(), labels.unwrap()).unwrap()
}

/// Random targets and raw scores for the loss kernels, one-hot for
/// multi-class tasks.
pub fn label_score_pairs(rows: usize, task: Task, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = task.n_outputs();
    (0..rows)
        .map(|_| {
            let y = match task {
                Task::MultiClass(_) => {
                    let c = rng.random_range(0..k);
                    (0..k).map(|j| f64::from(u8::from(j == c))).collect()
                }
                _ => (0..k).map(|_| f64::from(rng.random_bool(0.2))).collect(),
            };
            let z = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
            (y, z)
        })
        .collect()
}
