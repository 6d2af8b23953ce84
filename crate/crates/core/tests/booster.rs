use imbaboost::booster::{base_score, fit, fit_all, soft_threshold, Node, StopReason};
use imbaboost::{BoostParams, Dataset, Ensemble, Error, FeatureMatrix, LabelBlock, LossConfig, LossSpec, MultiOutput, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binary(x: Vec<f64>, n_cols: usize, y: Vec<u32>) -> Dataset {
    let n = y.len();
    Dataset::new(FeatureMatrix::new(n, n_cols, x).unwrap(), LabelBlock::binary(y).unwrap()).unwrap()
}

fn ce(task: Task) -> LossSpec {
    LossConfig::ce().resolve(task, None).unwrap()
}

fn stump(lambda: f64) -> BoostParams {
    BoostParams {
        n_rounds: 1,
        learning_rate: 1.0,
        max_depth: Some(1),
        max_leaves: None,
        lambda_l2: lambda,
        ..BoostParams::default()
    }
}

fn random_binary(n: usize, n_cols: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * n_cols).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = (0..n)
        .map(|i| {
            let s: f64 = x[i * n_cols..(i + 1) * n_cols].iter().sum::<f64>() + rng.random_range(-1.5..1.5);
            u32::from(s > 0.5)
        })
        .collect();
    binary(x, n_cols, y)
}

#[test]
fn newton_step_on_four_samples() {
    let d = binary(vec![1.0, 2.0, 3.0, 4.0], 1, vec![0, 0, 1, 1]);
    let e = fit_all(&d, &ce(Task::Binary), &stump(0.0)).unwrap();
    assert_eq!(e.base_score, vec![0.0]);
    assert_eq!(e.trees.len(), 1);
    match &e.trees[0].nodes[0] {
        Node::Split { threshold, .. } => assert_eq!(*threshold, 2.5),
        other => panic!("expected a split, got {other:?}"),
    }
    let z = e.predict_raw(&d.features).unwrap();
    assert_eq!(z.values, vec![-2.0, -2.0, 2.0, 2.0]);
}

/// Exhaustive search over cut points of one feature for the split that
/// minimises the regularised second-order objective.
fn brute_force(x: &[f64], g: &[f64], h: &[f64], lambda: f64) -> (f64, f64, f64) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let obj = |gs: f64, hs: f64| -0.5 * gs * gs / (hs + lambda);
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for cut in 1..x.len() {
        let (lo, hi) = (x[order[cut - 1]], x[order[cut]]);
        if lo == hi {
            continue;
        }
        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
        for &i in &order[..cut] {
            gl += g[i];
            hl += h[i];
        }
        for &i in &order[cut..] {
            gr += g[i];
            hr += h[i];
        }
        let o = obj(gl, hl) + obj(gr, hr);
        if o < best.0 {
            best = (o, lo + (hi - lo) / 2.0, -gl / (hl + lambda), -gr / (hr + lambda));
        }
    }
    (best.1, best.2, best.3)
}

#[test]
fn chosen_split_matches_exhaustive_search() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.random_range(8..=32);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<u32> = x.iter().map(|&v| u32::from(v + rng.random_range(-3.0..3.0) > 0.0)).collect();
        let d = binary(x.clone(), 1, y.clone());
        let spec = ce(Task::Binary);
        for lambda in [0.0, 1.0] {
            let e = fit_all(&d, &spec, &stump(lambda)).unwrap();
            let z0 = e.base_score[0];
            let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                let gh = spec.grad_hess(&[y[i] as f64], &[z0]);
                g[i] = gh.grad[0];
                h[i] = gh.hess[0];
            }
            let (threshold, left, right) = brute_force(&x, &g, &h, lambda);
            let t = &e.trees[0];
            let Node::Split { threshold: got, left: l, right: r, .. } = &t.nodes[0] else {
                panic!("seed {seed}: no split")
            };
            assert_eq!(*got, threshold, "seed {seed}");
            assert!((t.leaf_value(*l)[0] - left).abs() < 1e-9, "seed {seed}");
            assert!((t.leaf_value(*r)[0] - right).abs() < 1e-9, "seed {seed}");
        }
    }
}

/// Recomputes every leaf from the gradients at the scores before its round.
fn assert_leaves_optimal(d: &Dataset, spec: &LossSpec, e: &Ensemble, params: &BoostParams) {
    let k = e.n_outputs;
    let rounds = e.history.rounds_trained;
    assert!(rounds > 1);
    for round in 0..rounds {
        let z = e.truncated(round).predict_raw(&d.features).unwrap();
        let mut y = vec![0.0; k];
        let grads: Vec<_> = (0..d.n_rows())
            .map(|r| {
                d.labels.fill_targets(r, &mut y);
                spec.grad_hess_floored(&y, z.row(r), params.h_floor)
            })
            .collect();
        for t in e.trees.iter().filter(|t| t.round == round) {
            let outputs: Vec<usize> = match t.output {
                Some(o) => vec![o],
                None => (0..k).collect(),
            };
            for (leaf, node) in t.nodes.iter().enumerate() {
                if !matches!(node, Node::Leaf { .. }) {
                    continue;
                }
                let members: Vec<usize> = (0..d.n_rows()).filter(|&r| t.leaf_index(&d.features, r) == leaf).collect();
                assert!(!members.is_empty());
                for (j, &o) in outputs.iter().enumerate() {
                    let gs: f64 = members.iter().map(|&r| grads[r].grad[o]).sum();
                    let hs: f64 = members.iter().map(|&r| grads[r].hess[o]).sum();
                    let want = soft_threshold(-gs, params.alpha_l1) / (hs + params.lambda_l2);
                    let got = t.leaf_value(leaf)[j];
                    assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "round {round} leaf {leaf}: {got} vs {want}");
                }
            }
        }
    }
}

fn random_multiclass(n: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<u32> = (0..n)
        .map(|i| {
            let s = x[i * 3] + 0.5 * x[i * 3 + 1] + rng.random_range(-1.0..1.0);
            (((s + 3.0) / 6.0 * k as f64).floor() as i64).clamp(0, k as i64 - 1) as u32
        })
        .collect();
    Dataset::new(FeatureMatrix::new(n, 3, x).unwrap(), LabelBlock::multi_class(k, y).unwrap()).unwrap()
}

fn random_multilabel(n: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 2 * k;
    let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut bits = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            let s = x[i * m + 2 * j] - 0.5 * x[i * m + 2 * j + 1] + rng.random_range(-1.0..1.0);
            bits.push(u32::from(s > 0.8));
        }
    }
    Dataset::new(FeatureMatrix::new(n, m, x).unwrap(), LabelBlock::multi_label(k, bits).unwrap()).unwrap()
}

#[test]
fn leaf_weights_are_regularised_newton_steps() {
    let params = BoostParams {
        n_rounds: 6,
        learning_rate: 0.3,
        max_depth: Some(3),
        max_leaves: Some(6),
        lambda_l2: 0.7,
        alpha_l1: 0.05,
        ..BoostParams::default()
    };
    let d = random_binary(120, 3, 1);
    let spec = LossConfig::fl(2.0).resolve(Task::Binary, None).unwrap();
    assert_leaves_optimal(&d, &spec, &fit_all(&d, &spec, &params).unwrap(), &params);

    let d = random_multiclass(150, 3, 2);
    let spec = LossConfig::asl(0.1, 2.0, 0.05).resolve(d.task(), None).unwrap();
    assert_leaves_optimal(&d, &spec, &fit_all(&d, &spec, &params).unwrap(), &params);

    let d = random_multilabel(150, 3, 3);
    let spec = LossConfig::awe(3.0, 0.2).resolve(d.task(), None).unwrap();
    let per_output = BoostParams { multi_output: MultiOutput::PerOutput, ..params.clone() };
    assert_leaves_optimal(&d, &spec, &fit_all(&d, &spec, &per_output).unwrap(), &per_output);
    assert_leaves_optimal(&d, &spec, &fit_all(&d, &spec, &params).unwrap(), &params);
}

#[test]
fn convex_losses_never_increase_training_loss() {
    let d = random_binary(300, 4, 7);
    let params = BoostParams { n_rounds: 40, learning_rate: 0.3, ..BoostParams::default() };
    for cfg in [LossConfig::ce(), LossConfig::wce(5.0)] {
        let spec = cfg.resolve(Task::Binary, None).unwrap();
        let e = fit_all(&d, &spec, &params).unwrap();
        let h = &e.history.train_loss;
        assert_eq!(h.len(), 41);
        for w in h.windows(2) {
            assert!(w[1] <= w[0], "{:?}: {} -> {}", spec.kind(), w[0], w[1]);
        }
    }
    let spec = LossConfig::fl(1.0).resolve(Task::Binary, None).unwrap();
    let e = fit_all(&d, &spec, &params).unwrap();
    for w in e.history.train_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-8);
    }
}

#[test]
fn training_is_independent_of_thread_count() {
    let d = random_multiclass(400, 4, 11);
    let spec = LossConfig::fl(1.0).resolve(d.task(), None).unwrap();
    let params = BoostParams { n_rounds: 15, subsample: 0.7, seed: 5, ..BoostParams::default() };
    let valid: Vec<usize> = (300..400).collect();
    let train: Vec<usize> = (0..300).collect();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit(&d, &spec, &params, &train, Some(&valid)).unwrap().to_json().unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn per_output_trees_match_independent_binary_models() {
    // label j depends only on features 2j and 2j+1
    let d = random_multilabel(300, 4, 21);
    let params = BoostParams {
        n_rounds: 25,
        learning_rate: 0.2,
        max_leaves: Some(8),
        lambda_l2: 0.5,
        multi_output: MultiOutput::PerOutput,
        ..BoostParams::default()
    };
    let spec = ce(d.task());
    let joint = fit_all(&d, &spec, &params).unwrap().predict_raw(&d.features).unwrap();
    for j in 0..4 {
        let y: Vec<u32> = (0..d.n_rows()).map(|r| d.labels.target(r, j) as u32).collect();
        let single = Dataset::new(d.features.clone(), LabelBlock::binary(y).unwrap()).unwrap();
        let p = fit_all(&single, &ce(Task::Binary), &params).unwrap().predict_raw(&single.features).unwrap();
        for r in 0..d.n_rows() {
            assert!((joint.get(r, j) - p.get(r, 0)).abs() < 1e-9);
        }
    }
}

#[test]
fn multilabel_loss_is_sum_of_binary_losses() {
    let spec = LossConfig::asl(0.1, 2.0, 0.05).resolve(Task::MultiLabel(4), None).unwrap();
    let single = LossConfig::asl(0.1, 2.0, 0.05).resolve(Task::Binary, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let y: Vec<f64> = (0..4).map(|_| f64::from(rng.random_bool(0.3))).collect();
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-6.0..6.0)).collect();
        let sum: f64 = (0..4).map(|j| single.value(&y[j..j + 1], &z[j..j + 1])).sum();
        assert_eq!(spec.value(&y, &z), sum);
    }
}

#[test]
fn base_scores() {
    let balanced = binary(vec![0.0; 4], 1, vec![0, 1, 0, 1]);
    assert_eq!(base_score(&balanced, &[0, 1, 2, 3]).unwrap(), vec![0.0]);
    let y: Vec<u32> = (0..10).map(|i| u32::from(i == 0)).collect();
    let tenth = binary(vec![0.0; 10], 1, y);
    let rows: Vec<usize> = (0..10).collect();
    assert!((base_score(&tenth, &rows).unwrap()[0] - (1.0f64 / 9.0).ln()).abs() < 1e-12);
    let ones = binary(vec![0.0; 3], 1, vec![1, 1, 1]);
    assert_eq!(base_score(&ones, &[0, 1, 2]).unwrap(), vec![10.0]);
    assert!(base_score(&ones, &[]).unwrap_err().to_string().contains("empty"));

    let d = Dataset::new(
        FeatureMatrix::new(4, 1, vec![0.0; 4]).unwrap(),
        LabelBlock::multi_class(3, vec![0, 1, 1, 2]).unwrap(),
    )
    .unwrap();
    let z = base_score(&d, &[0, 1, 2, 3]).unwrap();
    assert!(z.iter().sum::<f64>().abs() < 1e-15);
    assert!((z[1] - z[0] - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn constant_labels_give_a_trivial_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
    let d = binary(x, 1, vec![1; 200]);
    let train: Vec<usize> = (0..150).collect();
    let valid: Vec<usize> = (150..200).collect();
    let e = fit(&d, &ce(Task::Binary), &BoostParams::default(), &train, Some(&valid)).unwrap();
    assert_eq!(e.base_score, vec![10.0]);
    assert!(e.history.rounds_trained < 1000);
    let p = e.predict_proba(&d.features).unwrap();
    assert!(p.values.iter().all(|&v| v > 0.9999));
}

#[test]
fn unsplittable_data_keeps_only_the_base_score() {
    let d = binary(vec![1.0; 6], 1, vec![0, 1, 0, 1, 1, 1]);
    let e = fit_all(&d, &ce(Task::Binary), &BoostParams::default()).unwrap();
    assert!(e.trees.is_empty());
    assert_eq!(e.history.stop_reason, StopReason::NoSplit);
    let z = e.predict_raw(&d.features).unwrap();
    assert!(z.values.iter().all(|&v| v == e.base_score[0]));
}

#[test]
fn early_stopping_reports_the_validation_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 600;
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<u32> = (0..n).map(|_| u32::from(rng.random_bool(0.3))).collect();
    let d = binary(x, 3, y);
    let train: Vec<usize> = (0..400).collect();
    let valid: Vec<usize> = (400..600).collect();
    let params = BoostParams { learning_rate: 0.3, ..BoostParams::default() };
    let e = fit(&d, &ce(Task::Binary), &params, &train, Some(&valid)).unwrap();
    let h = e.history.valid_loss.as_ref().unwrap();
    assert_eq!(e.history.stop_reason, StopReason::EarlyStopping);
    assert_eq!(e.history.rounds_trained, e.best_iteration + 50);
    assert_eq!(h.len(), e.history.rounds_trained + 1);
    let argmin = (0..h.len()).fold(0, |b, i| if h[i] < h[b] { i } else { b });
    assert_eq!(e.best_iteration, argmin);
    assert_eq!(e.active_trees().count(), e.best_iteration);
}

#[test]
fn missing_values_follow_the_default_direction() {
    let x = vec![
        Some(1.0), Some(2.0), None, Some(3.0), Some(4.0), None, Some(1.5), Some(3.5),
    ];
    let y = vec![0, 0, 1, 1, 1, 1, 0, 1];
    let d = Dataset::new(FeatureMatrix::from_options(8, 1, x).unwrap(), LabelBlock::binary(y).unwrap()).unwrap();
    let e = fit_all(&d, &ce(Task::Binary), &stump(0.0)).unwrap();
    let Node::Split { default_left, .. } = e.trees[0].nodes[0] else { panic!("no split") };
    assert!(!default_left);
    let z = e.predict_raw(&d.features).unwrap();
    assert_eq!(z.get(2, 0), z.get(3, 0));
    assert_eq!(z.get(5, 0), z.get(4, 0));
    let probe = FeatureMatrix::from_options(1, 1, vec![None]).unwrap();
    assert_eq!(e.predict_raw(&probe).unwrap().get(0, 0), z.get(3, 0));
}

#[test]
fn multiclass_probabilities_sum_to_one() {
    let d = random_multiclass(200, 4, 5);
    let spec = LossConfig::cbce(0.99).resolve(d.task(), Some(&d.labels.class_counts(0..200))).unwrap();
    let e = fit_all(&d, &spec, &BoostParams { n_rounds: 10, ..BoostParams::default() }).unwrap();
    let p = e.predict_proba(&d.features).unwrap();
    for r in 0..p.n_rows {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn save_and_load_round_trip() {
    let d = random_multilabel(200, 6, 4);
    let spec = LossConfig::fl(2.0).resolve(d.task(), None).unwrap();
    let e = fit_all(&d, &spec, &BoostParams { n_rounds: 8, ..BoostParams::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    e.save(&path).unwrap();
    let back = Ensemble::load(&path).unwrap();
    assert_eq!(back, e);
    let a = e.predict_raw(&d.features).unwrap();
    let b = back.predict_raw(&d.features).unwrap();
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(back.to_json().unwrap(), e.to_json().unwrap());

    let wrong = FeatureMatrix::new(2, 5, vec![0.0; 10]).unwrap();
    assert!(matches!(e.predict_raw(&wrong), Err(Error::Shape(_))));

    let json = e.to_json().unwrap();
    assert!(matches!(Ensemble::from_json(&json[..json.len() / 2]), Err(Error::Model(_))));
    let bumped = json.replacen("\"format_version\":1", "\"format_version\":99", 1);
    let err = Ensemble::from_json(&bumped).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
    let broken = json.replacen("\"left\":1", "\"left\":999", 1);
    assert!(matches!(Ensemble::from_json(&broken), Err(Error::Model(_))));
}

#[test]
fn rejects_bad_inputs() {
    let d = random_binary(20, 2, 1);
    let spec = ce(Task::Binary);
    let p = BoostParams::default();
    assert!(fit(&d, &spec, &p, &[], None).is_err());
    assert!(fit(&d, &spec, &p, &[0, 1, 2], Some(&[2, 3])).is_err());
    let bad = BoostParams { learning_rate: 0.0, ..p.clone() };
    assert!(matches!(fit_all(&d, &spec, &bad), Err(Error::Param(_))));
    let bad = BoostParams { max_depth: None, max_leaves: None, ..p.clone() };
    assert!(fit_all(&d, &spec, &bad).is_err());
    assert!(fit_all(&d, &ce(Task::MultiLabel(2)), &p).is_err());
}
