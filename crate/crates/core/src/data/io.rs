use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMatrix, LabelBlock, Task, TaskKind};
use crate::error::{Error, Result};

/// Which CSV columns hold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelColumns {
    /// Explicit header names.
    Names(Vec<String>),
    /// Zero-based column positions.
    Indices(Vec<usize>),
    /// Every column whose header starts with this prefix.
    Prefix(String),
}

impl LabelColumns {
    fn resolve(&self, header: &[String]) -> Result<Vec<usize>> {
        let cols: Vec<usize> = match self {
            LabelColumns::Names(names) => names
                .iter()
                .map(|name| {
                    header.iter().position(|h| h == name).ok_or_else(|| Error::Load {
                        row: 0,
                        column: name.clone(),
                        message: "label column not found in header".into(),
                    })
                })
                .collect::<Result<_>>()?,
            LabelColumns::Indices(idx) => {
                if let Some(&bad) = idx.iter().find(|&&i| i >= header.len()) {
                    return Err(Error::Load {
                        row: 0,
                        column: bad.to_string(),
                        message: format!("label column index out of range ({} columns)", header.len()),
                    });
                }
                idx.clone()
            }
            LabelColumns::Prefix(prefix) => header
                .iter()
                .enumerate()
                .filter(|(_, h)| h.starts_with(prefix.as_str()))
                .map(|(i, _)| i)
                .collect(),
        };
        if cols.is_empty() {
            return Err(Error::Load {
                row: 0,
                column: format!("{self:?}"),
                message: "no label columns matched".into(),
            });
        }
        let mut sorted = cols.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != cols.len() {
            return Err(Error::Load {
                row: 0,
                column: format!("{self:?}"),
                message: "label column listed twice".into(),
            });
        }
        Ok(cols)
    }
}

fn parse_label(cell: &str, row: usize, column: &str) -> Result<u32> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Load {
        row,
        column: column.to_string(),
        message: format!("cannot parse label `{cell}`"),
    })?;
    if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
        return Err(Error::Label(format!(
            "row {row}, column {column}: label `{cell}` is not a non-negative integer"
        )));
    }
    Ok(v as u32)
}

fn build_labels(kind: TaskKind, raw: Vec<u32>, n_label_cols: usize) -> Result<LabelBlock> {
    match kind {
        TaskKind::Binary => {
            if n_label_cols != 1 {
                return Err(Error::Task(format!(
                    "binary task needs exactly one label column, got {n_label_cols}"
                )));
            }
            LabelBlock::binary(raw)
        }
        TaskKind::MultiClass => {
            if n_label_cols != 1 {
                return Err(Error::Task(format!(
                    "multi-class task needs exactly one label column, got {n_label_cols}"
                )));
            }
            let k = raw.iter().max().map_or(0, |&m| m as usize + 1);
            let block = LabelBlock::multi_class(k, raw)?;
            let counts = block.class_counts(0..block.len());
            if let Some(empty) = counts.iter().position(|&c| c == 0) {
                return Err(Error::Label(format!("class {empty} has no samples")));
            }
            Ok(block)
        }
        TaskKind::MultiLabel => LabelBlock::multi_label(n_label_cols, raw),
    }
}

/// Loads a headered, comma-separated file. Empty feature cells are missing.
pub fn load_csv(path: impl AsRef<Path>, labels: &LabelColumns, kind: TaskKind) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_cols = labels.resolve(&header)?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|c| !label_cols.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(Error::Shape("file has no feature columns".into()));
    }

    let mut cells = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n_rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is row 1 in the file, so data rows are reported 1-based after it
        let row = i + 2;
        if record.len() != header.len() {
            return Err(Error::Load {
                row,
                column: String::new(),
                message: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        for &c in &feature_cols {
            let cell = &record[c];
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Load {
                row,
                column: header[c].clone(),
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Load {
                    row,
                    column: header[c].clone(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            cells.push(Some(v));
        }
        for &c in &label_cols {
            if record[c].is_empty() {
                return Err(Error::Label(format!("row {row}, column {}: empty label", header[c])));
            }
            raw_labels.push(parse_label(&record[c], row, &header[c])?);
        }
        n_rows += 1;
    }
    let features = FeatureMatrix::from_options(n_rows, feature_cols.len(), cells)?;
    let block = build_labels(kind, raw_labels, label_cols.len())?;
    Dataset::with_names(
        features,
        block,
        feature_cols.iter().map(|&c| header[c].clone()).collect(),
        label_cols.iter().map(|&c| header[c].clone()).collect(),
    )
}

/// Loads `<label(s)> <idx>:<val> ...` lines with 1-based, strictly
/// increasing feature indices. Multi-label lines carry comma-separated
/// label indices; absent features read as 0.
pub fn load_libsvm(path: impl AsRef<Path>, kind: TaskKind) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut row_labels: Vec<Vec<u32>> = Vec::new();
    let mut n_features = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace().peekable();
        let label_token = match tokens.peek() {
            Some(t) if !t.contains(':') => tokens.next(),
            _ => None,
        };
        let labels = match (label_token, kind) {
            (None, TaskKind::MultiLabel) => Vec::new(),
            (None, _) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "missing label".into(),
                })
            }
            (Some(tok), TaskKind::MultiLabel) => tok
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| parse_label(s, line_no, "label"))
                .collect::<Result<_>>()?,
            (Some(tok), _) => vec![parse_label(tok, line_no, "label")?],
        };

        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("feature index {idx} does not increase (previous {last})"),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value `{val}`"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite feature value `{val}`"),
                });
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        n_features = n_features.max(last);
        rows.push(entries);
        row_labels.push(labels);
    }

    let n_rows = rows.len();
    if n_features == 0 {
        // every row empty: keep a single all-zero column
        n_features = 1;
    }
    let mut values = vec![0.0; n_rows * n_features];
    for (r, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            values[r * n_features + j] = v;
        }
    }
    let features = FeatureMatrix::new(n_rows, n_features, values)?;

    let block = match kind {
        TaskKind::MultiLabel => {
            let k = row_labels.iter().flatten().max().map_or(0, |&m| m as usize + 1);
            let mut bits = vec![0u32; n_rows * k];
            for (r, labels) in row_labels.iter().enumerate() {
                for &l in labels {
                    bits[r * k + l as usize] = 1;
                }
            }
            LabelBlock::multi_label(k, bits)?
        }
        _ => build_labels(kind, row_labels.into_iter().map(|l| l[0]).collect(), 1)?,
    };
    let feature_names = (1..=n_features).map(|j| format!("f{j}")).collect();
    let label_names = match block.task() {
        Task::MultiLabel(k) => (0..k).map(|j| format!("label_{j}")).collect(),
        _ => vec!["label".into()],
    };
    Dataset::with_names(features, block, feature_names, label_names)
}

/// Writes features then label columns. Values use the shortest decimal
/// form that parses back to the same `f64`; missing cells are empty.
pub fn write_csv(d: &Dataset, mut out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(d.feature_names.iter().chain(&d.label_names))?;
    let n_label_cols = d.label_names.len();
    let mut record = Vec::with_capacity(d.n_features() + n_label_cols);
    for r in 0..d.n_rows() {
        record.clear();
        for c in 0..d.n_features() {
            record.push(d.features.get(r, c).map(|v| v.to_string()).unwrap_or_default());
        }
        match d.task() {
            Task::MultiLabel(k) => {
                for j in 0..k {
                    record.push((d.labels.target(r, j) as u32).to_string());
                }
            }
            _ => record.push(d.labels.raw()[r].to_string()),
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
