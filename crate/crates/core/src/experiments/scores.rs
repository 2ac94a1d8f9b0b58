// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::AnnotationDb;
use crate::error::{Error, Result};
use crate::metrics::{score, Metric, MetricConfig};
use crate::synth::is_quality_control;

use super::{DetectionRecord, Status};

/// Series × method table of scores for one metric. `None` marks a cell with
/// no usable run (every configuration skipped).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub metric: Metric,
    pub methods: Vec<String>,
    pub series: Vec<String>,
    /// `cells[row][column]`, rows following `series`.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ScoreMatrix {
    pub fn new(metric: Metric, methods: Vec<String>) -> Self {
        Self {
            metric,
            methods,
            series: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn push_row(&mut self, series: impl Into<String>, row: Vec<Option<f64>>) -> Result<()> {
        if row.len() != self.methods.len() {
            return Err(Error::LengthMismatch {
                expected: self.methods.len(),
                actual: row.len(),
            });
        }
        self.series.push(series.into());
        self.cells.push(row);
        Ok(())
    }

    pub fn get(&self, series: &str, method: &str) -> Option<f64> {
        let r = self.series.iter().position(|s| s == series)?;
        let c = self.methods.iter().position(|m| m == method)?;
        self.cells[r][c]
    }

    fn filter_rows(&self, keep: impl Fn(&str, &[Option<f64>]) -> bool) -> Self {
        let mut out = Self::new(self.metric, self.methods.clone());
        for (s, row) in self.series.iter().zip(&self.cells) {
            if keep(s, row) {
                out.series.push(s.clone());
                out.cells.push(row.clone());
            }
        }
        out
    }

    /// Drops every row with at least one absent cell.
    pub fn complete_rows(&self) -> Self {
        self.filter_rows(|_, row| row.iter().all(Option::is_some))
    }

    /// Splits into (benchmark rows, quality-control rows).
    pub fn split_quality_control(&self) -> (Self, Self) {
        (
            self.filter_rows(|s, _| !is_quality_control(s)),
            self.filter_rows(|s, _| is_quality_control(s)),
        )
    }

    /// Keeps only the named methods, in the given order.
    pub fn select_methods(&self, methods: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = methods
            .iter()
            .map(|m| {
                self.methods
                    .iter()
                    .position(|x| x == m)
                    .ok_or_else(|| Error::invalid_input(format!("unknown method {m:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            metric: self.metric,
            methods: methods.iter().map(|m| m.to_string()).collect(),
            series: self.series.clone(),
            cells: self
                .cells
                .iter()
                .map(|row| idx.iter().map(|&i| row[i]).collect())
                .collect(),
        })
    }

    /// Complete rows as dense vectors.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        self.complete_rows()
            .cells
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.expect("complete row")).collect())
            .collect()
    }

    /// CSV with header `metric,series,<methods...>`; absent cells are empty.
    pub fn to_csv(matrices: &[ScoreMatrix]) -> Result<String> {
        let Some(first) = matrices.first() else {
            return Ok(String::new());
        };
        if matrices.iter().any(|m| m.methods != first.methods) {
            return Err(Error::invalid_input("score matrices have different methods"));
        }
        let mut out = String::from("metric,series");
        for m in &first.methods {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for sm in matrices {
            for (s, row) in sm.series.iter().zip(&sm.cells) {
                let _ = write!(out, "{},{}", sm.metric, s);
                for c in row {
                    out.push(',');
                    if let Some(v) = c {
                        let _ = write!(out, "{v}");
                    }
                }
                out.push('\n');
            }
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Vec<ScoreMatrix>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid_input("empty score CSV"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "metric" || cols[1] != "series" {
            return Err(Error::invalid_input("score CSV header must be metric,series,<methods>"));
        }
        let methods: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
        let mut by_metric: BTreeMap<Metric, ScoreMatrix> = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::invalid_input(format!(
                    "score CSV row {} has {} fields, expected {}",
                    i + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            let metric: Metric = fields[0].parse()?;
            let row = fields[2..]
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::invalid_input(format!("bad score {f:?}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            by_metric
                .entry(metric)
                .or_insert_with(|| ScoreMatrix::new(metric, methods.clone()))
                .push_row(fields[1], row)?;
        }
        Ok(by_metric.into_values().collect())
    }
}

/// Scores every record and reduces them to one matrix per metric.
///
/// A cell is the maximum score over that detector's records for the series.
/// Failures and timeouts score 0; skips contribute nothing, so a cell whose
/// records were all skipped is absent.
pub fn score_records(
    records: &[DetectionRecord],
    annotations: &AnnotationDb,
    cfg: &MetricConfig,
) -> Result<Vec<ScoreMatrix>> {
    let mut methods: Vec<String> = Vec::new();
    let mut series: Vec<String> = Vec::new();
    for r in records {
        if !methods.iter().any(|m| m == r.detector.as_str()) {
            methods.push(r.detector.as_str().to_owned());
        }
        if !series.contains(&r.series) {
            series.push(r.series.clone());
        }
    }
    series.sort();

    let mut out = Vec::with_capacity(Metric::ALL.len());
    for metric in Metric::ALL {
        let mut cells = vec![vec![None::<f64>; methods.len()]; series.len()];
        for r in records {
            let row = series.binary_search(&r.series).expect("collected above");
            let col = methods
                .iter()
                .position(|m| m == r.detector.as_str())
                .expect("collected above");
            let value = match r.status {
                Status::Skip => continue,
                Status::Failure | Status::Timeout => 0.0,
                Status::Success => {
                    let anns = annotations.annotations(&r.series).ok_or_else(|| {
                        Error::invalid_input(format!("no annotations for series {:?}", r.series))
                    })?;
                    let locs = r.locations.as_ref().ok_or_else(|| {
                        Error::invalid_input(format!(
                            "successful record without locations ({} {})",
                            r.series, r.detector
                        ))
                    })?;
                    score(metric, &anns, locs, r.length, cfg)?
                }
            };
            let cell = &mut cells[row][col];
            *cell = Some(cell.map_or(value, |v: f64| v.max(value)));
        }
        out.push(ScoreMatrix {
            metric,
            methods: methods.clone(),
            series: series.clone(),
            cells,
        });
    }
    Ok(out)
}

/// Per-method mean over the rows where no method is absent.
pub fn aggregate(sm: &ScoreMatrix) -> Result<Vec<(String, f64)>> {
    let rows = sm.dense_rows();
    if rows.is_empty() {
        return Err(Error::invalid_input(format!(
            "no complete rows to aggregate for {}",
            sm.metric
        )));
    }
    let n = rows.len() as f64;
    Ok(sm
        .methods
        .iter()
        .enumerate()
        .map(|(j, m)| (m.clone(), rows.iter().map(|r| r[j]).sum::<f64>() / n))
        .collect())
}

/// Markdown table of per-method means, one column per labelled matrix.
pub fn summary_markdown(columns: &[(&str, &ScoreMatrix)]) -> Result<String> {
    let Some((_, first)) = columns.first() else {
        return Ok(String::new());
    };
    let means: Vec<Vec<(String, f64)>> = columns
        .iter()
        .map(|(_, sm)| aggregate(sm))
        .collect::<Result<_>>()?;
    let mut out = String::from("| method |");
    for (label, _) in columns {
        let _ = write!(out, " {label} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(columns.len()));
    out.push('\n');
    for method in &first.methods {
        let _ = write!(out, "| {method} |");
        for col in &means {
            match col.iter().find(|(m, _)| m == method) {
                Some((_, v)) => {
                    let _ = write!(out, " {v:.3} |");
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}
