use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use imbaboost::{Ensemble, FeatureMatrix, Task};

use crate::config::Format;
use crate::error::{CliError, CliResult};
use crate::output::write_csv_rows;

/// Reads the model's feature columns by header name; other columns are
/// ignored and empty cells are missing values.
fn read_csv_features(path: &Path, names: &[String]) -> CliResult<FeatureMatrix> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| CliError::Runtime(format!("{}: missing feature column `{n}`", path.display())))
        })
        .collect::<CliResult<_>>()?;
    let mut cells = Vec::new();
    let mut n_rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for (&c, name) in cols.iter().zip(names) {
            let raw = rec.get(c).unwrap_or("");
            cells.push(if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| {
                    CliError::Runtime(format!("{}: row {}, column {name}: not a number: {raw}", path.display(), i + 2))
                })?)
            });
        }
        n_rows += 1;
    }
    Ok(FeatureMatrix::from_options(n_rows, names.len(), cells)?)
}

/// Reads LibSVM feature pairs, skipping any label token. Absent entries
/// are zero.
fn read_libsvm_features(path: &Path, n_features: usize) -> CliResult<FeatureMatrix> {
    let mut values = Vec::new();
    let mut n_rows = 0;
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut row = vec![0.0; n_features];
        for tok in body.split_whitespace() {
            let Some((idx, val)) = tok.split_once(':') else { continue };
            let bad = || CliError::Runtime(format!("{}: line {}: bad entry `{tok}`", path.display(), i + 1));
            let idx: usize = idx.parse().map_err(|_| bad())?;
            let val: f64 = val.parse().map_err(|_| bad())?;
            if idx == 0 || idx > n_features {
                return Err(CliError::Runtime(format!(
                    "{}: line {}: feature {idx} outside 1..={n_features}",
                    path.display(),
                    i + 1
                )));
            }
            row[idx - 1] = val;
        }
        values.extend(row);
        n_rows += 1;
    }
    Ok(FeatureMatrix::new(n_rows, n_features, values)?)
}

/// Writes `id,p_0..p_{K-1}`. Binary models emit both class probabilities.
pub fn predict(model_path: &Path, data: &Path, format: Option<Format>, out: &Path) -> CliResult<usize> {
    let model = Ensemble::load(model_path)?;
    let format = format.unwrap_or_else(|| {
        if data.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Format::Csv
        } else {
            Format::Libsvm
        }
    });
    let x = match format {
        Format::Csv => read_csv_features(data, &model.feature_names)?,
        Format::Libsvm => read_libsvm_features(data, model.n_features)?,
    };
    let p = model.predict_proba(&x)?;
    let binary = model.task == Task::Binary;
    let width = if binary { 2 } else { p.n_cols };
    let header: Vec<String> = std::iter::once("id".to_string()).chain((0..width).map(|j| format!("p_{j}"))).collect();
    let rows: Vec<Vec<String>> = (0..p.n_rows)
        .map(|i| {
            let mut row = vec![i.to_string()];
            if binary {
                let q = p.get(i, 0);
                row.push((1.0 - q).to_string());
                row.push(q.to_string());
            } else {
                row.extend(p.row(i).iter().map(f64::to_string));
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_rows(out, &header, &rows)?;
    Ok(p.n_rows)
}
