use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use imbaboost::booster::fit_all;
use imbaboost::{BoostParams, LossConfig, MultiOutput, Task};
use imbaboost_bench::{label_score_pairs, synthetic};

fn fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    let params = BoostParams { n_rounds: 50, ..BoostParams::default() };
    let cases = [
        ("binary_wce", Task::Binary, LossConfig::wce(5.0), MultiOutput::Shared),
        ("multiclass_fl", Task::MultiClass(4), LossConfig::fl(2.0), MultiOutput::Shared),
        ("multilabel_asl_shared", Task::MultiLabel(4), LossConfig::asl(0.0, 2.0, 0.05), MultiOutput::Shared),
        ("multilabel_asl_per_output", Task::MultiLabel(4), LossConfig::asl(0.0, 2.0, 0.05), MultiOutput::PerOutput),
    ];
    for (name, task, loss, mode) in cases {
        let d = synthetic(20_000, 16, task, 20.0, 1);
        let spec = loss.resolve(d.task(), None).unwrap();
        let p = BoostParams { multi_output: mode, ..params.clone() };
        g.bench_function(BenchmarkId::new(name, "20k x 16"), |b| b.iter(|| fit_all(black_box(&d), &spec, &p).unwrap()));
    }
    g.finish();
}

fn grad_hess(c: &mut Criterion) {
    let mut g = c.benchmark_group("grad_hess");
    let losses = [
        LossConfig::ce(),
        LossConfig::wce(3.0),
        LossConfig::fl(2.0),
        LossConfig::asl(0.1, 2.0, 0.05),
        LossConfig::ace(0.2),
        LossConfig::awe(3.0, 0.2),
        LossConfig::cbce(0.99),
    ];
    for task in [Task::Binary, Task::MultiClass(4), Task::MultiLabel(4)] {
        let pairs = label_score_pairs(10_000, task, 2);
        let counts = vec![100; task.n_classes()];
        for loss in &losses {
            let Ok(spec) = loss.resolve(task, Some(&counts)) else { continue };
            g.bench_function(BenchmarkId::new(spec.kind().as_str(), task), |b| {
                b.iter(|| {
                    for (y, z) in &pairs {
                        black_box(spec.grad_hess(y, z));
                    }
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, fit, grad_hess);
criterion_main!(benches);
