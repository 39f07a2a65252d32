//! Horizontal error against ground truth, summary statistics, empirical
//! CDFs and the back-end × scenario comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{BackendKind, EstimatorOutput};
use crate::sim::GroundTruth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("estimates do not overlap the ground-truth time span")]
    NoOverlap,
    #[error("error series is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSeries {
    /// `(t, horizontal error m)`.
    pub samples: Vec<(f64, f64)>,
}

impl ErrorSeries {
    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// East/north distance to linearly interpolated truth. Estimates outside
/// the truth span are dropped.
pub fn horizontal_error(
    est: &[EstimatorOutput],
    gt: &GroundTruth,
) -> Result<ErrorSeries, EvalError> {
    let samples: Vec<(f64, f64)> = est
        .iter()
        .filter_map(|o| {
            gt.position_at(o.t)
                .map(|p| (o.t, o.pos.horizontal_distance(&p)))
        })
        .collect();
    if samples.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok(ErrorSeries { samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub median: f64,
    pub rmse: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub n: usize,
}

impl MetricSummary {
    pub const CSV_HEADER: &'static str = "mean,median,rmse,std,max,n";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.mean, self.median, self.rmse, self.std, self.max, self.n
        )
    }

    /// `(mean, median, rmse, std, max)` to three decimals.
    pub fn tuple(&self) -> String {
        format!(
            "({:.3}, {:.3}, {:.3}, {:.3}, {:.3})",
            self.mean, self.median, self.rmse, self.std, self.max
        )
    }
}

fn sorted(errs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = errs.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean, lower median, RMSE, population std and max.
pub fn summarize(errs: &[f64]) -> Result<MetricSummary, EvalError> {
    if errs.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let ms = errs.iter().map(|e| e * e).sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let s = sorted(errs.iter().copied());
    Ok(MetricSummary {
        mean,
        median: s[(s.len() - 1) / 2],
        rmse: ms.sqrt(),
        std: var.sqrt(),
        max: s[s.len() - 1],
        n: errs.len(),
    })
}

pub fn summarize_series(errs: &ErrorSeries) -> Result<MetricSummary, EvalError> {
    summarize(&errs.errors().collect::<Vec<_>>())
}

/// Empirical CDF at `n_points` evenly spaced quantiles: `(error, fraction of
/// errors ≤ error)`. The last point is always `(max, 1.0)`.
pub fn cdf(errs: &ErrorSeries, n_points: usize) -> Result<Vec<(f64, f64)>, EvalError> {
    if errs.is_empty() {
        return Err(EvalError::Empty);
    }
    let s = sorted(errs.errors());
    let n = s.len();
    let points = n_points.max(1);
    let mut out: Vec<(f64, f64)> = (1..=points)
        .map(|i| {
            let idx = ((i * n).div_ceil(points)).clamp(1, n) - 1;
            let value = s[idx];
            let count = s.partition_point(|&e| e <= value);
            (value, count as f64 / n as f64)
        })
        .collect();
    out.dedup();
    Ok(out)
}

pub fn cdf_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("error,fraction\n");
    for (e, f) in points {
        let _ = writeln!(s, "{e:.6},{f:.6}");
    }
    s
}

/// Fixed column order; other scenario names follow alphabetically.
pub const SCENARIO_COLUMNS: [(&str, &str); 3] = [
    ("indoor", "Indoor"),
    ("outdoor", "Outdoor"),
    ("seamless", "Outdoor-Indoor"),
];
pub const BACKEND_ROWS: [BackendKind; 3] = [BackendKind::Fgo, BackendKind::Pf, BackendKind::Eskf];
pub const MISSING: &str = "—";

pub type Results = BTreeMap<String, BTreeMap<BackendKind, MetricSummary>>;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub columns: Vec<String>,
    /// `(row label, cells)`.
    pub rows: Vec<(String, Vec<String>)>,
}

pub fn compare_table(results: &Results) -> CompareTable {
    let mut keys: Vec<(String, String)> = SCENARIO_COLUMNS
        .iter()
        .map(|(k, label)| (k.to_string(), label.to_string()))
        .collect();
    for k in results.keys() {
        if !SCENARIO_COLUMNS.iter().any(|(known, _)| known == k) {
            keys.push((k.clone(), k.clone()));
        }
    }
    let rows = BACKEND_ROWS
        .iter()
        .map(|b| {
            let cells = keys
                .iter()
                .map(|(k, _)| {
                    results
                        .get(k)
                        .and_then(|m| m.get(b))
                        .map_or_else(|| MISSING.to_string(), MetricSummary::tuple)
                })
                .collect();
            (b.label().to_string(), cells)
        })
        .collect();
    CompareTable {
        columns: keys.into_iter().map(|(_, l)| l).collect(),
        rows,
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Method");
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (label, cells) in &self.rows {
            out.push_str(&csv_field(label));
            for c in cells {
                out.push(',');
                out.push_str(&csv_field(c));
            }
            out.push('\n');
        }
        out
    }

    /// Space-aligned text rendering.
    pub fn to_text(&self) -> String {
        let ncol = self.columns.len() + 1;
        let mut widths = vec![0usize; ncol];
        let header: Vec<&str> = std::iter::once("Method")
            .chain(self.columns.iter().map(String::as_str))
            .collect();
        let mut all: Vec<Vec<&str>> = vec![header];
        for (label, cells) in &self.rows {
            all.push(
                std::iter::once(label.as_str())
                    .chain(cells.iter().map(String::as_str))
                    .collect(),
            );
        }
        for row in &all {
            for (i, c) in row.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in &all {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c}{}", " ".repeat(widths[i] - c.chars().count())))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
