use std::path::{Path, PathBuf};

use imbaboost::metrics::improvement;
use imbaboost::Improvement;

use crate::error::{CliError, CliResult};
use crate::output::{pct, write_csv_rows};
use crate::sweep::{SummaryRow, SUMMARY_HEADER};

pub const IMPROVEMENT_HEADER: [&str; 8] =
    ["dataset", "bmp", "cmp", "delta", "bmp_profile", "bmp_loss", "cmp_profile", "cmp_loss"];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetImprovement {
    pub dataset: String,
    pub improvement: Improvement,
    /// First cell reaching the baseline maximum, as (profile, loss).
    pub bmp_cell: (String, String),
    pub cmp_cell: (String, String),
}

pub fn read_summary(path: &Path) -> CliResult<Vec<SummaryRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != SUMMARY_HEADER {
        return Err(CliError::Runtime(format!(
            "{}: expected header {}, got {}",
            path.display(),
            SUMMARY_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

fn best(cells: &[&SummaryRow]) -> (String, String) {
    let mut top = cells[0];
    for c in cells {
        if c.f1_mean > top.f1_mean {
            top = c;
        }
    }
    (top.profile.clone(), top.loss.clone())
}

/// Best baseline (cross-entropy) cell against best class-balanced cell,
/// per dataset in order of first appearance. Failed cells are ignored.
pub fn improvements(rows: &[SummaryRow]) -> CliResult<Vec<DatasetImprovement>> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.dataset.as_str()) {
            names.push(&r.dataset);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let ok: Vec<&SummaryRow> =
                rows.iter().filter(|r| r.dataset == name && r.status == "ok" && r.f1_mean.is_some()).collect();
            let (base, balanced): (Vec<&SummaryRow>, Vec<&SummaryRow>) =
                ok.into_iter().partition(|r| r.loss.eq_ignore_ascii_case("ce"));
            if balanced.is_empty() {
                return Err(CliError::Runtime(format!("{name}: no class-balanced cells")));
            }
            if base.is_empty() {
                return Err(CliError::Runtime(format!("{name}: no baseline cells")));
            }
            let f1 = |v: &[&SummaryRow]| v.iter().map(|r| r.f1_mean.unwrap()).collect::<Vec<f64>>();
            Ok(DatasetImprovement {
                dataset: name.to_string(),
                improvement: improvement(&f1(&base), &f1(&balanced))?,
                bmp_cell: best(&base),
                cmp_cell: best(&balanced),
            })
        })
        .collect()
}

pub struct ReportOutput {
    pub improvement_path: PathBuf,
    pub deltas_path: PathBuf,
    pub datasets: Vec<DatasetImprovement>,
}

/// Writes `improvement.csv` and the plot-ready `deltas.csv`
/// (`dataset,delta`), both with two-decimal percentages.
pub fn report(summaries: &[PathBuf], out: &Path) -> CliResult<ReportOutput> {
    if summaries.is_empty() {
        return Err(CliError::Config("report: no summary files given".into()));
    }
    let mut rows = Vec::new();
    for p in summaries {
        rows.extend(read_summary(p)?);
    }
    let datasets = improvements(&rows)?;
    let full: Vec<Vec<String>> = datasets
        .iter()
        .map(|d| {
            vec![
                d.dataset.clone(),
                pct(d.improvement.bmp),
                pct(d.improvement.cmp),
                pct(d.improvement.delta),
                d.bmp_cell.0.clone(),
                d.bmp_cell.1.clone(),
                d.cmp_cell.0.clone(),
                d.cmp_cell.1.clone(),
            ]
        })
        .collect();
    let deltas: Vec<Vec<String>> = datasets.iter().map(|d| vec![d.dataset.clone(), pct(d.improvement.delta)]).collect();
    let improvement_path = out.join("improvement.csv");
    let deltas_path = out.join("deltas.csv");
    write_csv_rows(&improvement_path, &IMPROVEMENT_HEADER, &full)?;
    write_csv_rows(&deltas_path, &["dataset", "delta"], &deltas)?;
    Ok(ReportOutput { improvement_path, deltas_path, datasets })
}
