// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gaussian segment costs and change point penalties for the penalized
//! offline objective
//!
//! ```text
//! sum_j cost(segment_j) + penalty * (number of change points)
//! ```
//!
//! Costs are twice the negative maximized log-likelihood of a segment (up to
//! constants that do not depend on the segmentation) and are answered in
//! O(1) from prefix sums.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on fitted variances so constant segments keep a finite cost.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// Change in mean with unit variance: residual sum of squares.
    Mean,
    /// Change in variance about the fixed global mean.
    Var,
    /// Change in both mean and variance.
    MeanVar,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::Mean, CostKind::Var, CostKind::MeanVar];

    /// Number of segment parameters, used by the information criteria.
    pub fn params(self) -> usize {
        match self {
            CostKind::Mean | CostKind::Var => 1,
            CostKind::MeanVar => 2,
        }
    }

    /// Smallest segment on which the maximum-likelihood fit is proper.
    /// Variance fits on a single point collapse to the floor.
    pub fn min_segment_len(self) -> usize {
        match self {
            CostKind::Mean => 1,
            CostKind::Var | CostKind::MeanVar => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::Mean => "mean",
            CostKind::Var => "var",
            CostKind::MeanVar => "meanvar",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(CostKind::Mean),
            "var" | "variance" => Ok(CostKind::Var),
            "meanvar" => Ok(CostKind::MeanVar),
            other => Err(Error::invalid_input(format!("unknown cost {other:?}"))),
        }
    }
}

/// Prefix-sum backed segment cost over a univariate series.
#[derive(Clone, Debug)]
pub struct SegmentCost {
    kind: CostKind,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    global_mean: f64,
}

impl SegmentCost {
    pub fn new(kind: CostKind, data: &[f64]) -> Self {
        let n = data.len();
        let global_mean = if n == 0 {
            0.0
        } else {
            data.iter().sum::<f64>() / n as f64
        };
        let mut sum = Vec::with_capacity(n + 1);
        let mut sum_sq = Vec::with_capacity(n + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        let (mut s, mut s2) = (0.0, 0.0);
        for &y in data {
            // The variance cost is taken about the global mean.
            let y = if kind == CostKind::Var { y - global_mean } else { y };
            s += y;
            s2 += y * y;
            sum.push(s);
            sum_sq.push(s2);
        }
        Self {
            kind,
            sum,
            sum_sq,
            global_mean,
        }
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    /// Series length `T`.
    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Cost of observations `start+1..=end` (0-based half-open `[start, end)`).
    #[inline]
    pub fn segment(&self, start: usize, end: usize) -> f64 {
        debug_assert!(start < end && end <= self.len());
        let l = (end - start) as f64;
        let s = self.sum[end] - self.sum[start];
        let s2 = self.sum_sq[end] - self.sum_sq[start];
        match self.kind {
            CostKind::Mean => (s2 - s * s / l).max(0.0),
            CostKind::Var => gaussian_cost(l, s2),
            CostKind::MeanVar => gaussian_cost(l, (s2 - s * s / l).max(0.0)),
        }
    }

    /// Cost of the 1-based inclusive segment `[a, b]`.
    pub fn cost(&self, a: usize, b: usize) -> Result<f64> {
        if a == 0 || a > b || b > self.len() {
            return Err(Error::invalid_input(format!(
                "segment [{a}, {b}] invalid for length {}",
                self.len()
            )));
        }
        Ok(self.segment(a - 1, b))
    }
}

/// `-2 log L` of a zero-mean Gaussian fitted to a segment with `l` points
/// and residual sum of squares `ss`, variance constrained to the floor.
#[inline]
fn gaussian_cost(l: f64, ss: f64) -> f64 {
    let var = (ss / l).max(VARIANCE_FLOOR);
    l * ((2.0 * PI).ln() + var.ln()) + ss / var
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    Sic,
    Bic,
    Mbic,
    Aic,
    HannanQuinn,
    Manual(f64),
}

impl Penalty {
    /// The six named penalties of the oracle grid (Manual excluded).
    pub const NAMED: [Penalty; 6] = [
        Penalty::None,
        Penalty::Sic,
        Penalty::Bic,
        Penalty::Mbic,
        Penalty::Aic,
        Penalty::HannanQuinn,
    ];

    /// Per-change-point penalty for a cost with `params` segment parameters.
    ///
    /// SIC/BIC: `(p+1) ln T`, MBIC: `(p+2) ln T` (its segment-length term is
    /// applied through [`PenalizedCost`]), AIC: `2(p+1)`, Hannan-Quinn:
    /// `2(p+1) ln ln T`.
    pub fn value(&self, params: usize, length: usize) -> Result<f64> {
        let p = params as f64;
        let t = length as f64;
        let needs_log = !matches!(self, Penalty::None | Penalty::Aic | Penalty::Manual(_));
        if needs_log && length < 2 {
            return Err(Error::invalid_input(format!(
                "penalty {self} needs a series of length >= 2"
            )));
        }
        Ok(match *self {
            Penalty::None => 0.0,
            Penalty::Sic | Penalty::Bic => (p + 1.0) * t.ln(),
            Penalty::Mbic => (p + 2.0) * t.ln(),
            Penalty::Aic => 2.0 * (p + 1.0),
            // ln ln T is negative for T < e; the penalty is kept non-negative.
            Penalty::HannanQuinn => (2.0 * (p + 1.0) * t.ln().ln()).max(0.0),
            Penalty::Manual(lambda) => {
                if lambda.is_nan() || lambda < 0.0 {
                    return Err(Error::invalid_input(format!(
                        "manual penalty must be non-negative, got {lambda}"
                    )));
                }
                lambda
            }
        })
    }

    pub fn has_length_term(&self) -> bool {
        matches!(self, Penalty::Mbic)
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::None => f.write_str("none"),
            Penalty::Sic => f.write_str("sic"),
            Penalty::Bic => f.write_str("bic"),
            Penalty::Mbic => f.write_str("mbic"),
            Penalty::Aic => f.write_str("aic"),
            Penalty::HannanQuinn => f.write_str("hannan_quinn"),
            Penalty::Manual(l) => write!(f, "manual({l})"),
        }
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "none" => Penalty::None,
            "sic" => Penalty::Sic,
            "bic" => Penalty::Bic,
            "mbic" => Penalty::Mbic,
            "aic" => Penalty::Aic,
            "hannan_quinn" | "hq" => Penalty::HannanQuinn,
            _ => {
                let inner = s
                    .strip_prefix("manual(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::invalid_input(format!("unknown penalty {s:?}")))?;
                let lambda: f64 = inner
                    .parse()
                    .map_err(|_| Error::invalid_input(format!("bad manual penalty {s:?}")))?;
                Penalty::Manual(lambda)
            }
        })
    }
}

/// 101 manual penalty values evenly spaced on a log scale in `[1e-3, 1e3]`.
pub fn manual_penalty_grid() -> Vec<f64> {
    (0..=100)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 100.0))
        .collect()
}

/// A segment cost combined with its penalty, so that the offline objective
/// is `sum_j segment(j) + beta * n`.
///
/// For MBIC every segment additionally carries `ln(l_j / T)`, which keeps
/// the objective additive over segments.
#[derive(Clone, Debug)]
pub struct PenalizedCost {
    cost: SegmentCost,
    beta: f64,
    length_term: bool,
    ln_len: f64,
}

impl PenalizedCost {
    pub fn new(cost: SegmentCost, penalty: Penalty) -> Result<Self> {
        let len = cost.len();
        let beta = penalty.value(cost.kind().params(), len)?;
        Ok(Self {
            beta,
            length_term: penalty.has_length_term(),
            ln_len: (len as f64).ln(),
            cost,
        })
    }

    pub fn from_data(data: &[f64], kind: CostKind, penalty: Penalty) -> Result<Self> {
        Self::new(SegmentCost::new(kind, data), penalty)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn kind(&self) -> CostKind {
        self.cost.kind()
    }

    pub fn inner(&self) -> &SegmentCost {
        &self.cost
    }

    /// Whether segments carry the MBIC `ln(l / T)` term.
    pub fn has_length_term(&self) -> bool {
        self.length_term
    }

    /// Segment cost on the 0-based half-open range `[start, end)`.
    #[inline]
    pub fn segment(&self, start: usize, end: usize) -> f64 {
        let c = self.cost.segment(start, end);
        if self.length_term {
            c + ((end - start) as f64).ln() - self.ln_len
        } else {
            c
        }
    }

    /// Penalized objective of a set of 1-based change points.
    pub fn objective(&self, change_points: &[usize]) -> f64 {
        let mut start = 0;
        let mut total = 0.0;
        let mut n = 0;
        for &cp in change_points.iter().filter(|&&c| c > 1) {
            total += self.segment(start, cp - 1);
            start = cp - 1;
            n += 1;
        }
        total += self.segment(start, self.len());
        total + self.beta * n as f64
    }
}
