use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fold {
    pub fit: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Train/test partition plus k cross-validation folds over the train part.
/// All index lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub seed: u64,
    pub stratified: bool,
    pub test_fraction: f64,
    pub k: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Splits `total` into integer parts proportional to `weights` by the
/// largest-remainder rule; ties go to the lower index.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rest = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // remainder of total*w/sum, compared as integers
    order.sort_by_key(|&i| std::cmp::Reverse((total * weights[i]) % sum));
    for i in order {
        if rest == 0 {
            break;
        }
        parts[i] += 1;
        rest -= 1;
    }
    parts
}

/// Deterministic train/test/fold plan.
///
/// Stratified binary and multi-class plans keep each class's test count
/// within one sample of its global share, and deal each class's training
/// rows evenly over the folds. Multi-label plans use iterative
/// stratification, rarest label first.
pub fn make_split_plan(
    d: &Dataset,
    seed: u64,
    test_fraction: f64,
    k: usize,
    stratify: bool,
) -> Result<SplitPlan> {
    let n = d.n_rows();
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!("test_fraction must be in (0, 1), got {test_fraction}")));
    }
    if k < 2 {
        return Err(Error::Split(format!("need at least 2 folds, got {k}")));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).max(1);
    if n < n_test + k {
        return Err(Error::Split(format!(
            "{n} samples cannot provide {n_test} test rows and {k} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (test, mut fold_of): (Vec<usize>, Vec<(usize, usize)>) = match (stratify, d.task()) {
        (false, _) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let test = idx[..n_test].to_vec();
            let fold_of = idx[n_test..].iter().enumerate().map(|(i, &r)| (r, i % k)).collect();
            (test, fold_of)
        }
        (true, Task::Binary | Task::MultiClass(_)) => {
            let n_classes = d.task().n_classes();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for r in 0..n {
                groups[d.labels.class_of(r).expect("single-label task")].push(r);
            }
            if let Some((c, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < k) {
                return Err(Error::Split(format!(
                    "class {c} has {} samples, fewer than the {k} folds; use non-stratified mode",
                    g.len()
                )));
            }
            for g in &mut groups {
                g.shuffle(&mut rng);
            }
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            let quotas = apportion(n_test, &sizes);
            let mut test = Vec::with_capacity(n_test);
            let mut train_order = Vec::with_capacity(n - n_test);
            for (g, q) in groups.iter().zip(quotas) {
                test.extend_from_slice(&g[..q]);
                train_order.extend_from_slice(&g[q..]);
            }
            // dealing the class-ordered train list round-robin balances every
            // class across folds and keeps fold sizes within one of each other
            let fold_of = train_order.iter().enumerate().map(|(i, &r)| (r, i % k)).collect();
            (test, fold_of)
        }
        (true, Task::MultiLabel(n_labels)) => {
            let all: Vec<usize> = (0..n).collect();
            let sets = iterative_stratify(d, n_labels, &all, &[n_test, n - n_test], &mut rng);
            let train = &sets[1];
            let sizes = apportion(train.len(), &vec![1; k]);
            let folds = iterative_stratify(d, n_labels, train, &sizes, &mut rng);
            let fold_of = folds
                .iter()
                .enumerate()
                .flat_map(|(f, rows)| rows.iter().map(move |&r| (r, f)))
                .collect();
            (sets[0].clone(), fold_of)
        }
    };

    let mut test = test;
    test.sort_unstable();
    fold_of.sort_unstable();
    let train: Vec<usize> = fold_of.iter().map(|&(r, _)| r).collect();
    let folds = (0..k)
        .map(|f| {
            let (valid, fit): (Vec<_>, Vec<_>) = fold_of.iter().partition(|&&(_, g)| g == f);
            Fold {
                fit: fit.into_iter().map(|(r, _)| r).collect(),
                valid: valid.into_iter().map(|(r, _)| r).collect(),
            }
        })
        .collect();

    Ok(SplitPlan {
        seed,
        stratified: stratify,
        test_fraction,
        k,
        train,
        test,
        folds,
    })
}

/// Iterative stratification: samples carrying the rarest remaining label
/// are placed first, each into the subset that still wants that label most.
fn iterative_stratify(
    d: &Dataset,
    n_labels: usize,
    rows: &[usize],
    sizes: &[usize],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let total = rows.len() as f64;
    let mut rows = rows.to_vec();
    rows.shuffle(rng);
    let ratios: Vec<f64> = sizes.iter().map(|&s| s as f64 / total).collect();

    let label_counts = d.labels.class_counts(rows.iter().copied());
    let mut want_label: Vec<Vec<f64>> = ratios
        .iter()
        .map(|&r| label_counts.iter().map(|&c| r * c as f64).collect())
        .collect();
    let mut want_size: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];

    let mut pending = rows;
    let mut remaining = label_counts;
    loop {
        let rarest = (0..n_labels)
            .filter(|&l| remaining[l] > 0)
            .min_by_key(|&l| (remaining[l], l));
        let Some(label) = rarest else { break };
        let (with, without): (Vec<usize>, Vec<usize>) = pending
            .into_iter()
            .partition(|&r| d.labels.target(r, label) > 0.0);
        for r in with {
            let best = (0..sizes.len())
                .max_by(|&a, &b| {
                    want_label[a][label]
                        .total_cmp(&want_label[b][label])
                        .then(want_size[a].total_cmp(&want_size[b]))
                        .then(b.cmp(&a))
                })
                .expect("at least one subset");
            out[best].push(r);
            want_size[best] -= 1.0;
            for l in 0..n_labels {
                if d.labels.target(r, l) > 0.0 {
                    want_label[best][l] -= 1.0;
                    remaining[l] -= 1;
                }
            }
        }
        pending = without;
    }
    for r in pending {
        let best = (0..sizes.len())
            .max_by(|&a, &b| want_size[a].total_cmp(&want_size[b]).then(b.cmp(&a)))
            .expect("at least one subset");
        out[best].push(r);
        want_size[best] -= 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{FeatureMatrix, LabelBlock};

    fn ds_with_classes(labels: Vec<u32>, k: usize) -> Dataset {
        let n = labels.len();
        let x = FeatureMatrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let y = if k == 2 {
            LabelBlock::binary(labels).unwrap()
        } else {
            LabelBlock::multi_class(k, labels).unwrap()
        };
        Dataset::new(x, y).unwrap()
    }

    fn check_partition(plan: &SplitPlan, n: usize) {
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        let mut valid: Vec<usize> = plan.folds.iter().flat_map(|f| f.valid.clone()).collect();
        valid.sort_unstable();
        assert_eq!(valid, plan.train);
        for f in &plan.folds {
            let mut joined: Vec<usize> = f.fit.iter().chain(&f.valid).copied().collect();
            joined.sort_unstable();
            assert_eq!(joined, plan.train);
        }
    }

    #[test]
    fn hundred_rows_split_sizes() {
        let d = ds_with_classes((0..100).map(|i| u32::from(i % 4 == 0)).collect(), 2);
        for stratify in [true, false] {
            let plan = make_split_plan(&d, 7, 0.2, 5, stratify).unwrap();
            assert_eq!(plan.test.len(), 20);
            assert!(plan.folds.iter().all(|f| f.valid.len() == 16 && f.fit.len() == 64));
            check_partition(&plan, 100);
        }
    }

    #[test]
    fn plans_are_deterministic() {
        let d = ds_with_classes((0..57).map(|i| (i % 3) as u32).collect(), 3);
        let a = make_split_plan(&d, 11, 0.2, 5, true).unwrap();
        let b = make_split_plan(&d, 11, 0.2, 5, true).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = make_split_plan(&d, 12, 0.2, 5, true).unwrap();
        assert_ne!(a.test, c.test);
        assert_eq!(SplitPlan::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    #[test]
    fn singleton_class_fails_stratified() {
        let d = ds_with_classes(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 2], 3);
        let err = make_split_plan(&d, 0, 0.2, 5, true).unwrap_err();
        assert!(err.to_string().contains("non-stratified"), "{err}");
        assert!(make_split_plan(&d, 0, 0.2, 2, false).is_ok());
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(20, &[80, 20]), vec![16, 4]);
        assert_eq!(apportion(3, &[1, 1, 1, 1]), vec![1, 1, 1, 0]);
        assert_eq!(apportion(5, &[3, 3]).iter().sum::<usize>(), 5);
    }

    #[test]
    fn multi_label_plan_partitions() {
        let n = 60;
        let mut bits = Vec::new();
        for i in 0..n {
            bits.extend([u32::from(i % 2 == 0), u32::from(i % 7 == 0), u32::from(i % 3 == 1)]);
        }
        let x = FeatureMatrix::new(n, 1, vec![0.0; n]).unwrap();
        let d = Dataset::new(x, LabelBlock::multi_label(3, bits).unwrap()).unwrap();
        let plan = make_split_plan(&d, 3, 0.2, 5, true).unwrap();
        check_partition(&plan, n);
        // the rare label (9 positives) lands in the test set about 20% of the time
        let rare_test = plan.test.iter().filter(|&&r| r % 7 == 0).count();
        assert!((1..=3).contains(&rare_test), "{rare_test}");
    }

    proptest! {
        #[test]
        fn stratified_folds_track_class_shares(
            counts in prop::collection::vec(5usize..40, 2..5),
            seed in any::<u64>(),
        ) {
            let k = counts.len();
            let labels: Vec<u32> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &m)| std::iter::repeat_n(c as u32, m))
                .collect();
            let n = labels.len();
            let d = ds_with_classes(labels, k.max(2));
            let plan = make_split_plan(&d, seed, 0.2, 5, true).unwrap();
            check_partition(&plan, n);
            for (c, &n_c) in counts.iter().enumerate() {
                let share = n_c as f64 / n as f64;
                let in_test = plan.test.iter().filter(|&&r| d.labels.class_of(r) == Some(c)).count();
                prop_assert!((in_test as f64 - share * plan.test.len() as f64).abs() <= 1.0);
                // each fold holds its even share of the class's training rows, within one sample
                let in_train = plan.train.iter().filter(|&&r| d.labels.class_of(r) == Some(c)).count();
                let expected = in_train as f64 / plan.k as f64;
                for f in &plan.folds {
                    let in_fold = f.valid.iter().filter(|&&r| d.labels.class_of(r) == Some(c)).count();
                    prop_assert!((in_fold as f64 - expected).abs() < 1.0,
                        "class {} fold count {} expected {}", c, in_fold, expected);
                }
            }
        }
    }
}
