// SPDX-License-Identifier: MIT OR Apache-2.0

//! Change point detectors.
//!
//! The offline detectors minimize the penalized objective of
//! [`PenalizedCost`] either exactly (PELT, optimal partitioning, segment
//! neighbourhoods) or greedily (AMOC, binary segmentation). Argmin scans
//! break ties towards the smallest index so results are reproducible.

mod partition;
mod segneigh;
mod split;

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bocpd::{self, BocpdParams};
use crate::costs::{CostKind, PenalizedCost, Penalty};
use crate::data::{ChangePointSet, TimeSeries};
use crate::error::{Error, Result};

pub use partition::{optimal_partitioning, pelt, Solution};
pub use segneigh::{segneigh, segneigh_table, SegNeighTable};
pub use split::{amoc, binseg};

/// Wall-clock allowance for one detector run, checked cooperatively.
#[derive(Clone, Copy, Debug, Default)]
pub struct Budget {
    deadline: Option<Instant>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Self { deadline: None }
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        Self {
            deadline: Instant::now().checked_add(timeout),
        }
    }

    pub fn from_secs(secs: Option<f64>) -> Self {
        match secs {
            Some(s) if s.is_finite() && s >= 0.0 => Self::with_timeout(Duration::from_secs_f64(s)),
            _ => Self::unlimited(),
        }
    }

    #[inline]
    pub fn check(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Error::Timeout),
            _ => Ok(()),
        }
    }
}

/// Upper bound on the number of change points for BinSeg and SegNeigh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxChangePoints {
    Fixed(usize),
    /// `T/2 + 1`.
    Max,
}

impl MaxChangePoints {
    pub fn resolve(self, length: usize) -> usize {
        match self {
            MaxChangePoints::Fixed(q) => q,
            MaxChangePoints::Max => length / 2 + 1,
        }
    }
}

impl Default for MaxChangePoints {
    fn default() -> Self {
        MaxChangePoints::Fixed(5)
    }
}

/// Cost, penalty and minimum segment length shared by the offline methods.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineConfig {
    pub cost: CostKind,
    pub penalty: Penalty,
    pub min_seg_len: usize,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            cost: CostKind::Mean,
            penalty: Penalty::Mbic,
            min_seg_len: 1,
        }
    }
}

impl OfflineConfig {
    pub fn new(cost: CostKind, penalty: Penalty) -> Self {
        Self {
            cost,
            penalty,
            min_seg_len: 1,
        }
    }

    /// The configured minimum raised to what the cost needs.
    pub fn effective_min_seg_len(&self) -> usize {
        self.min_seg_len.max(self.cost.min_segment_len()).max(1)
    }

    pub fn penalized_cost(&self, data: &[f64]) -> Result<PenalizedCost> {
        if self.min_seg_len == 0 {
            return Err(Error::invalid_input("min_seg_len must be >= 1"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite observation".into()));
        }
        PenalizedCost::from_data(data, self.cost, self.penalty)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DetectorSpec {
    Amoc {
        #[serde(flatten)]
        config: OfflineConfig,
    },
    Binseg {
        #[serde(flatten)]
        config: OfflineConfig,
        max_cp: MaxChangePoints,
    },
    Segneigh {
        #[serde(flatten)]
        config: OfflineConfig,
        max_cp: MaxChangePoints,
    },
    Pelt {
        #[serde(flatten)]
        config: OfflineConfig,
    },
    OracleDp {
        #[serde(flatten)]
        config: OfflineConfig,
    },
    Bocpd {
        #[serde(flatten)]
        params: BocpdParams,
    },
    Zero,
}

/// Names of the built-in detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Amoc,
    Binseg,
    Bocpd,
    OracleDp,
    Pelt,
    Segneigh,
    Zero,
}

impl DetectorKind {
    /// The six methods of the benchmark (the DP oracle is test-only).
    pub const BENCHMARK: [DetectorKind; 6] = [
        DetectorKind::Amoc,
        DetectorKind::Binseg,
        DetectorKind::Bocpd,
        DetectorKind::Pelt,
        DetectorKind::Segneigh,
        DetectorKind::Zero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Amoc => "amoc",
            DetectorKind::Binseg => "binseg",
            DetectorKind::Bocpd => "bocpd",
            DetectorKind::OracleDp => "oracle_dp",
            DetectorKind::Pelt => "pelt",
            DetectorKind::Segneigh => "segneigh",
            DetectorKind::Zero => "zero",
        }
    }

    pub fn supports_multivariate(self) -> bool {
        matches!(self, DetectorKind::Bocpd | DetectorKind::Zero)
    }

    /// The package-default configuration used in the Default experiment.
    pub fn default_spec(self) -> DetectorSpec {
        let config = OfflineConfig::default();
        match self {
            DetectorKind::Amoc => DetectorSpec::Amoc { config },
            DetectorKind::Binseg => DetectorSpec::Binseg {
                config,
                max_cp: MaxChangePoints::default(),
            },
            DetectorKind::Segneigh => DetectorSpec::Segneigh {
                config,
                max_cp: MaxChangePoints::default(),
            },
            DetectorKind::Pelt => DetectorSpec::Pelt { config },
            DetectorKind::OracleDp => DetectorSpec::OracleDp { config },
            DetectorKind::Bocpd => DetectorSpec::Bocpd {
                params: BocpdParams::default(),
            },
            DetectorKind::Zero => DetectorSpec::Zero,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "amoc" => DetectorKind::Amoc,
            "binseg" => DetectorKind::Binseg,
            "bocpd" => DetectorKind::Bocpd,
            "oracle_dp" | "op" => DetectorKind::OracleDp,
            "pelt" => DetectorKind::Pelt,
            "segneigh" => DetectorKind::Segneigh,
            "zero" => DetectorKind::Zero,
            other => return Err(Error::invalid_input(format!("unknown detector {other:?}"))),
        })
    }
}

impl DetectorSpec {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorSpec::Amoc { .. } => DetectorKind::Amoc,
            DetectorSpec::Binseg { .. } => DetectorKind::Binseg,
            DetectorSpec::Segneigh { .. } => DetectorKind::Segneigh,
            DetectorSpec::Pelt { .. } => DetectorKind::Pelt,
            DetectorSpec::OracleDp { .. } => DetectorKind::OracleDp,
            DetectorSpec::Bocpd { .. } => DetectorKind::Bocpd,
            DetectorSpec::Zero => DetectorKind::Zero,
        }
    }

    /// Runs the detector on a series. Offline detectors need a fully
    /// observed univariate series; BOCPD accepts any dimension.
    pub fn detect(&self, series: &TimeSeries, budget: &Budget) -> Result<ChangePointSet> {
        if let DetectorSpec::Zero = self {
            return Ok(ChangePointSet::empty());
        }
        if series.has_missing() {
            return Err(Error::MissingValues);
        }
        match self {
            DetectorSpec::Bocpd { params } => {
                let columns = series.dense_columns()?;
                bocpd::detect(&columns, params, budget)
            }
            _ => self.detect_univariate(&series.dense_univariate()?, budget),
        }
    }

    /// Runs the detector on a dense univariate series.
    pub fn detect_univariate(&self, data: &[f64], budget: &Budget) -> Result<ChangePointSet> {
        match self {
            DetectorSpec::Zero => Ok(ChangePointSet::empty()),
            DetectorSpec::Amoc { config } => {
                let pc = config.penalized_cost(data)?;
                amoc(&pc, config.effective_min_seg_len())
            }
            DetectorSpec::Binseg { config, max_cp } => {
                let pc = config.penalized_cost(data)?;
                binseg(
                    &pc,
                    max_cp.resolve(data.len()),
                    config.effective_min_seg_len(),
                    budget,
                )
            }
            DetectorSpec::Segneigh { config, max_cp } => {
                let pc = config.penalized_cost(data)?;
                segneigh(
                    &pc,
                    max_cp.resolve(data.len()),
                    config.effective_min_seg_len(),
                    budget,
                )
                .map(|s| s.change_points)
            }
            DetectorSpec::Pelt { config } => {
                let pc = config.penalized_cost(data)?;
                pelt(&pc, config.effective_min_seg_len(), budget).map(|s| s.change_points)
            }
            DetectorSpec::OracleDp { config } => {
                let pc = config.penalized_cost(data)?;
                optimal_partitioning(&pc, config.effective_min_seg_len(), budget)
                    .map(|s| s.change_points)
            }
            DetectorSpec::Bocpd { params } => bocpd::detect(&[data.to_vec()], params, budget),
        }
    }
}

/// The ZERO baseline: never reports a change point.
pub fn zero(_series: &TimeSeries) -> ChangePointSet {
    ChangePointSet::empty()
}
