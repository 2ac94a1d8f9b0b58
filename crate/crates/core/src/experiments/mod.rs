// SPDX-License-Identifier: MIT OR Apache-2.0

//! Default and Oracle experiments over a set of series.
//!
//! A plan lists detectors with their configurations. Every
//! (series, detector, config) triple produces exactly one
//! [`DetectionRecord`]; detector errors become record statuses rather than
//! errors of the run.

mod scores;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bocpd::BocpdParams;
use crate::costs::{manual_penalty_grid, CostKind, Penalty};
use crate::data::{ChangePointSet, TimeSeries};
use crate::detect::{
    segneigh_table, Budget, DetectorKind, DetectorSpec, MaxChangePoints, OfflineConfig,
    SegNeighTable,
};
use crate::error::{Error, Result};
use crate::metrics::MetricConfig;

pub use scores::{aggregate, score_records, summary_markdown, ScoreMatrix};

/// Default timeout of one oracle configuration, in seconds.
pub const ORACLE_TIMEOUT_SECS: f64 = 1800.0;

pub const BOCPD_INTENSITIES: [f64; 4] = [10.0, 50.0, 100.0, 200.0];
pub const BOCPD_PRIOR_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Default,
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Mode::Default),
            "oracle" => Ok(Mode::Oracle),
            other => Err(Error::invalid_input(format!("unknown mode {other:?}"))),
        }
    }
}

/// Hyperparameter grid searched in the Oracle experiment.
pub fn oracle_grid(kind: DetectorKind) -> Vec<DetectorSpec> {
    let penalties: Vec<Penalty> = Penalty::NAMED
        .into_iter()
        .chain(manual_penalty_grid().into_iter().map(Penalty::Manual))
        .collect();
    let offline = || {
        CostKind::ALL.into_iter().flat_map(|cost| {
            penalties.iter().map(move |&penalty| OfflineConfig::new(cost, penalty))
        })
    };
    let max_cps = [MaxChangePoints::Fixed(5), MaxChangePoints::Max];
    match kind {
        DetectorKind::Amoc => offline().map(|config| DetectorSpec::Amoc { config }).collect(),
        DetectorKind::Pelt => offline().map(|config| DetectorSpec::Pelt { config }).collect(),
        DetectorKind::OracleDp => offline().map(|config| DetectorSpec::OracleDp { config }).collect(),
        DetectorKind::Binseg => offline()
            .flat_map(|config| max_cps.map(|max_cp| DetectorSpec::Binseg { config, max_cp }))
            .collect(),
        DetectorKind::Segneigh => offline()
            .flat_map(|config| max_cps.map(|max_cp| DetectorSpec::Segneigh { config, max_cp }))
            .collect(),
        DetectorKind::Bocpd => {
            let mut out = Vec::with_capacity(500);
            for intensity in BOCPD_INTENSITIES {
                for a in BOCPD_PRIOR_GRID {
                    for b in BOCPD_PRIOR_GRID {
                        for k in BOCPD_PRIOR_GRID {
                            out.push(DetectorSpec::Bocpd {
                                params: BocpdParams::new(intensity, a, b, k),
                            });
                        }
                    }
                }
            }
            out
        }
        DetectorKind::Zero => vec![DetectorSpec::Zero],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorGrid {
    pub detector: DetectorKind,
    pub configs: Vec<DetectorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub mode: Mode,
    pub grids: Vec<DetectorGrid>,
    /// Per-configuration wall-clock limit in seconds.
    pub timeout: Option<f64>,
    pub metric: MetricConfig,
    pub seed: u64,
    /// Store wall-clock runtimes in records. Off gives byte-identical output
    /// across runs.
    pub record_runtime: bool,
}

impl ExperimentPlan {
    pub fn new(mode: Mode, detectors: &[DetectorKind]) -> Self {
        let grids = detectors
            .iter()
            .map(|&detector| DetectorGrid {
                detector,
                configs: match mode {
                    Mode::Default => vec![detector.default_spec()],
                    Mode::Oracle => oracle_grid(detector),
                },
            })
            .collect();
        Self {
            mode,
            grids,
            timeout: match mode {
                Mode::Default => None,
                Mode::Oracle => Some(ORACLE_TIMEOUT_SECS),
            },
            metric: MetricConfig::default(),
            seed: 0,
            record_runtime: true,
        }
    }

    pub fn default_mode() -> Self {
        Self::new(Mode::Default, &DetectorKind::BENCHMARK)
    }

    pub fn oracle() -> Self {
        Self::new(Mode::Oracle, &DetectorKind::BENCHMARK)
    }

    pub fn with_timeout(mut self, secs: Option<f64>) -> Self {
        self.timeout = secs;
        self
    }

    pub fn with_runtime(mut self, record: bool) -> Self {
        self.record_runtime = record;
        self
    }

    /// Number of records a run over `series_count` series produces.
    pub fn cardinality(&self, series_count: usize) -> usize {
        series_count * self.grids.iter().map(|g| g.configs.len()).sum::<usize>()
    }

    fn budget(&self) -> Budget {
        Budget::from_secs(self.timeout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Failure,
    Timeout,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub series: String,
    pub length: usize,
    pub detector: DetectorKind,
    pub config_id: usize,
    pub params: DetectorSpec,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<ChangePointSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Cost, MBIC flag and minimum segment length.
type TableKey = (CostKind, bool, usize);
type CachedTable = std::result::Result<Arc<SegNeighTable>, (Status, String)>;

/// Per-series state shared by all configurations run on that series.
struct SeriesContext {
    series: TimeSeries,
    dense: Option<Vec<f64>>,
    segneigh: Mutex<HashMap<TableKey, Arc<OnceLock<CachedTable>>>>,
}

impl SeriesContext {
    fn new(raw: &TimeSeries) -> Self {
        let series = raw.standardize();
        let dense = if series.dim() == 1 && !series.has_missing() {
            series.dense_univariate().ok()
        } else {
            None
        };
        Self {
            series,
            dense,
            segneigh: Mutex::new(HashMap::new()),
        }
    }

    /// SegNeigh for a grid member, reusing one DP table per cost function.
    fn shared_segneigh(
        &self,
        config: &OfflineConfig,
        max_cp: MaxChangePoints,
        budget: &Budget,
    ) -> std::result::Result<ChangePointSet, (Status, String)> {
        let data = self.dense.as_deref().expect("univariate context");
        let pc = config.penalized_cost(data).map_err(classify)?;
        let min_seg = config.effective_min_seg_len();
        let key = (config.cost, pc.has_length_term(), min_seg);
        let cell = {
            let mut map = self.segneigh.lock().expect("segneigh cache poisoned");
            Arc::clone(map.entry(key).or_default())
        };
        let table = cell.get_or_init(|| {
            segneigh_table(&pc, MaxChangePoints::Max.resolve(data.len()), min_seg, budget)
                .map(Arc::new)
                .map_err(classify)
        });
        let table = table.clone()?;
        Ok(table
            .select(pc.beta(), max_cp.resolve(data.len()).min(table.max_cp()))
            .change_points)
    }
}

fn classify(err: Error) -> (Status, String) {
    match err {
        Error::Timeout => (Status::Timeout, "timeout".to_owned()),
        other => (Status::Failure, other.to_string()),
    }
}

fn skip_reason(kind: DetectorKind, series: &TimeSeries) -> Option<&'static str> {
    if kind == DetectorKind::Zero && !series.has_missing() {
        return None;
    }
    if series.has_missing() {
        Some("series has missing values")
    } else if series.dim() > 1 && !kind.supports_multivariate() {
        Some("univariate detector on multivariate series")
    } else {
        None
    }
}

fn run_one(
    plan: &ExperimentPlan,
    ctx: &SeriesContext,
    detector: DetectorKind,
    config_id: usize,
    spec: &DetectorSpec,
    share: bool,
) -> DetectionRecord {
    let start = Instant::now();
    let (status, locations, message) = match skip_reason(detector, &ctx.series) {
        Some(reason) => (Status::Skip, None, Some(reason.to_owned())),
        None => {
            let budget = plan.budget();
            let outcome = match spec {
                DetectorSpec::Segneigh { config, max_cp } if share => {
                    ctx.shared_segneigh(config, *max_cp, &budget)
                }
                _ => spec.detect(&ctx.series, &budget).map_err(classify),
            };
            match outcome {
                Ok(cps) => (Status::Success, Some(cps), None),
                Err((status, msg)) => (status, None, Some(msg)),
            }
        }
    };
    log::debug!(
        "{} {}#{}: {:?}",
        ctx.series.name(),
        detector,
        config_id,
        status
    );
    DetectionRecord {
        series: ctx.series.name().to_owned(),
        length: ctx.series.len(),
        detector,
        config_id,
        params: spec.clone(),
        status,
        locations,
        runtime: plan.record_runtime.then(|| start.elapsed().as_secs_f64()),
        message,
    }
}

/// Runs every configuration of the plan on every series (standardized
/// first). Records come back ordered by series, detector and config id.
pub fn run_experiment(plan: &ExperimentPlan, series: &[TimeSeries]) -> Vec<DetectionRecord> {
    let contexts: Vec<SeriesContext> = series.par_iter().map(SeriesContext::new).collect();
    let tasks: Vec<(usize, usize, usize)> = (0..series.len())
        .flat_map(|s| {
            plan.grids.iter().enumerate().flat_map(move |(g, grid)| {
                (0..grid.configs.len()).map(move |c| (s, g, c))
            })
        })
        .collect();
    tasks
        .into_par_iter()
        .map(|(s, g, c)| {
            let grid = &plan.grids[g];
            let share = grid.configs.len() > 1;
            run_one(plan, &contexts[s], grid.detector, c, &grid.configs[c], share)
        })
        .collect()
}

pub fn write_records<W: Write>(mut out: W, records: &[DetectionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<records>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("record on line {}", i + 1), e))?;
        out.push(rec);
    }
    Ok(out)
}
