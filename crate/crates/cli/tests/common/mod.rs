#![allow(dead_code)]

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imbaboost::data::write_csv;
use imbaboost::{Dataset, FeatureMatrix, LabelBlock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

/// Two isotropic 2-D Gaussians whose means are `separation` apart, with
/// `n / (ir + 1)` positives.
pub fn two_gaussians(n: usize, ir: f64, separation: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n_pos = (n as f64 / (ir + 1.0)).round() as usize;
    let shift = separation / 2f64.sqrt();
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let pos = i < n_pos;
        let m = if pos { shift } else { 0.0 };
        x.push(m + normal.sample(&mut rng));
        x.push(m + normal.sample(&mut rng));
        y.push(u32::from(pos));
    }
    Dataset::with_names(
        FeatureMatrix::new(n, 2, x).unwrap(),
        LabelBlock::binary(y).unwrap(),
        vec!["x0".into(), "x1".into()],
        vec!["label".into()],
    )
    .unwrap()
}

/// Binary labels that ignore the features, so validation loss stops
/// improving within a few rounds.
pub fn noise(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<u32> = (0..n).map(|_| u32::from(rng.random_bool(0.3))).collect();
    Dataset::with_names(
        FeatureMatrix::new(n, 3, x).unwrap(),
        LabelBlock::binary(y).unwrap(),
        vec!["a".into(), "b".into(), "c".into()],
        vec!["label".into()],
    )
    .unwrap()
}

pub fn write_dataset(d: &Dataset, path: &Path) {
    write_csv(d, File::create(path).unwrap()).unwrap();
}

pub fn dataset_entry(path: &Path, name: &str) -> Value {
    json!({"name": name, "path": path, "task": "binary", "labels": {"names": ["label"]}})
}

pub fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

pub fn imbaboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imbaboost")).args(args).output().unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Reads a CSV into a header and string records.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}
