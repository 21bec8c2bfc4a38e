use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::results::{MethodOutcome, ResultsTree, SeedOutcome};
use super::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStyle {
    Table,
    Csv,
}

impl FromStr for ReportStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportStyle::Table),
            "csv" => Ok(ReportStyle::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "unknown report style `{s}` (expected table or csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Also emit the `initial` and `retrained` reference rows.
    pub include_references: bool,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

const COLUMNS: [&str; 6] = [
    "KL_t",
    "KL_last",
    "KL_f",
    "Acc_t (%)",
    "Acc_f (%)",
    "RTE (%)",
];

fn columns(m: &MetricsReport) -> [Option<f64>; 6] {
    [
        Some(m.kl_t),
        m.kl_last,
        Some(m.kl_f),
        Some(100.0 * m.acc_t),
        Some(100.0 * m.acc_f),
        m.rte.and_then(|r| r.normalized).map(|v| 100.0 * v),
    ]
}

/// One aggregated row: a method within one (file, sub_key) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub arch_kind: String,
    pub scenario: String,
    pub arch: String,
    pub sub_key: String,
    pub method: String,
    pub n_seeds: usize,
    /// `(mean, std)` per column, `None` where no seed has the value.
    pub stats: [Option<(f64, f64)>; 6],
}

fn aggregate(reports: &[&MetricsReport]) -> [Option<(f64, f64)>; 6] {
    std::array::from_fn(|c| {
        let vals: Vec<f64> = reports.iter().filter_map(|r| columns(r)[c]).collect();
        mean_std(&vals)
    })
}

/// Rows in tree order; methods sorted by name within a cell, after the
/// reference rows when requested.
pub fn report_rows(tree: &ResultsTree, opts: ReportOptions) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (dataset, kinds) in &tree.datasets {
        for (kind, files) in kinds {
            for (stem, file) in files {
                let scenario = stem.split_once('_').map_or(stem.as_str(), |(s, _)| s);
                for (arch, body) in file {
                    for (sub_key, seeds) in body.results() {
                        let done: Vec<_> = seeds
                            .iter()
                            .filter_map(|s| match s {
                                SeedOutcome::Done(e) => Some(e),
                                SeedOutcome::Failed(_) => None,
                            })
                            .collect();
                        let methods: BTreeSet<&String> =
                            done.iter().flat_map(|e| e.methods.keys()).collect();
                        let mut push = |method: &str, reports: Vec<&MetricsReport>| {
                            rows.push(ReportRow {
                                dataset: dataset.clone(),
                                arch_kind: kind.clone(),
                                scenario: scenario.to_string(),
                                arch: arch.clone(),
                                sub_key: sub_key.clone(),
                                method: method.to_string(),
                                n_seeds: reports.len(),
                                stats: aggregate(&reports),
                            })
                        };
                        if opts.include_references && !methods.is_empty() {
                            push("initial", done.iter().map(|e| &e.initial).collect());
                            push("retrained", done.iter().map(|e| &e.retrained).collect());
                        }
                        for m in methods {
                            let reports = done
                                .iter()
                                .filter_map(|e| match e.methods.get(m) {
                                    Some(MethodOutcome::Done(entry)) => Some(&entry.best),
                                    _ => None,
                                })
                                .collect();
                            push(m, reports);
                        }
                    }
                }
            }
        }
    }
    rows
}

fn cell_text((mean, std): (f64, f64)) -> String {
    format!("{mean:.2} ± {std:.2}")
}

/// Per-method "mean ± std" over seeds, as an aligned table or as CSV.
pub fn report(tree: &ResultsTree, style: ReportStyle, opts: ReportOptions) -> String {
    let rows = report_rows(tree, opts);
    match style {
        ReportStyle::Csv => {
            let mut out = String::from("dataset,arch_kind,scenario,arch,sub_key,method,n_seeds");
            for c in ["kl_t", "kl_last", "kl_f", "acc_t", "acc_f", "rte"] {
                let _ = write!(out, ",{c}_mean,{c}_std");
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.dataset, r.arch_kind, r.scenario, r.arch, r.sub_key, r.method, r.n_seeds
                );
                for s in &r.stats {
                    match s {
                        Some((m, sd)) => {
                            let _ = write!(out, ",{m:?},{sd:?}");
                        }
                        None => out.push_str(",,"),
                    }
                }
                out.push('\n');
            }
            out
        }
        ReportStyle::Table => {
            let mut grid: Vec<Vec<String>> = vec![["cell", "method", "n"]
                .iter()
                .chain(COLUMNS.iter())
                .map(|s| s.to_string())
                .collect()];
            for r in &rows {
                let mut line = vec![
                    format!(
                        "{}/{}/{}_{}:{}",
                        r.dataset, r.arch_kind, r.scenario, r.arch, r.sub_key
                    ),
                    r.method.clone(),
                    r.n_seeds.to_string(),
                ];
                line.extend(
                    r.stats
                        .iter()
                        .map(|s| s.map_or("--".to_string(), cell_text)),
                );
                grid.push(line);
            }
            let widths: Vec<usize> = (0..grid[0].len())
                .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for (i, line) in grid.iter().enumerate() {
                let cells: Vec<String> = line
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                    .collect();
                out.push_str(cells.join("  ").trim_end());
                out.push('\n');
                if i == 0 {
                    out.push_str(
                        &widths
                            .iter()
                            .map(|w| "-".repeat(*w))
                            .collect::<Vec<_>>()
                            .join("  "),
                    );
                    out.push('\n');
                }
            }
            out
        }
    }
}
