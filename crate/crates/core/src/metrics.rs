// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation metrics against one or more human annotations.
//!
//! Two views are supported: the segmentation covering metric (a clustering
//! view, averaged over annotators) and a margin-tolerant precision / recall /
//! F-beta (a classification view where precision uses the union of all
//! annotations and recall is macro-averaged over annotators).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ChangePointSet, Segmentation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub margin: usize,
    pub beta: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            margin: 5,
            beta: 1.0,
        }
    }
}

impl MetricConfig {
    pub fn new(margin: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid_input(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { margin, beta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
}

/// Which metric to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "cover")]
    Covering,
    #[serde(rename = "f1")]
    F1,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Covering, Metric::F1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Covering => "cover",
            Metric::F1 => "f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cover" | "covering" => Ok(Metric::Covering),
            "f1" | "f" => Ok(Metric::F1),
            other => Err(Error::invalid_input(format!("unknown metric {other:?}"))),
        }
    }
}

/// Intersection over union of two index sets; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard index of two inclusive intervals.
fn interval_jaccard(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo > hi {
        return 0.0;
    }
    let inter = hi - lo + 1;
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

/// Covering of the ground-truth partition `gt` by `pred`.
pub fn covering(gt: &Segmentation, pred: &Segmentation) -> Result<f64> {
    if gt.length() != pred.length() {
        return Err(Error::LengthMismatch {
            expected: gt.length(),
            actual: pred.length(),
        });
    }
    let pred_segs = pred.segments();
    let mut first = 0;
    let mut total = 0.0;
    for &seg in gt.segments() {
        while pred_segs[first].1 < seg.0 {
            first += 1;
        }
        let best = pred_segs[first..]
            .iter()
            .take_while(|p| p.0 <= seg.1)
            .map(|&p| interval_jaccard(seg, p))
            .fold(0.0, f64::max);
        total += (seg.1 - seg.0 + 1) as f64 * best;
    }
    Ok(total / gt.length() as f64)
}

/// Mean covering of `pred` over several ground-truth partitions.
pub fn covering_multi(gts: &[Segmentation], pred: &Segmentation) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::invalid_input("covering needs at least one ground truth"));
    }
    let sum = gts
        .iter()
        .map(|g| covering(g, pred))
        .sum::<Result<f64>>()?;
    Ok(sum / gts.len() as f64)
}

/// Maximum one-to-one matching between sorted `gt` and `det` locations where
/// a pair may match when `|gt - det| <= margin`. Returns `(gt, det)` pairs
/// sorted by `gt`. Found with augmenting paths, so the size does not depend
/// on scan order.
pub fn max_matching(gt: &[usize], det: &[usize], margin: usize) -> Vec<(usize, usize)> {
    // Candidate detections of each gt point form a contiguous run of `det`.
    let ranges: Vec<(usize, usize)> = gt
        .iter()
        .map(|&g| {
            let lo = det.partition_point(|&x| x + margin < g);
            let hi = det.partition_point(|&x| x <= g + margin);
            (lo, hi)
        })
        .collect();

    let mut det_owner: Vec<Option<usize>> = vec![None; det.len()];
    let mut visited = vec![usize::MAX; det.len()];
    for g in 0..gt.len() {
        augment(g, g, &ranges, &mut det_owner, &mut visited);
    }

    let mut pairs: Vec<(usize, usize)> = det_owner
        .iter()
        .enumerate()
        .filter_map(|(d, owner)| owner.map(|g| (gt[g], det[d])))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn augment(
    g: usize,
    round: usize,
    ranges: &[(usize, usize)],
    det_owner: &mut [Option<usize>],
    visited: &mut [usize],
) -> bool {
    let (lo, hi) = ranges[g];
    for d in lo..hi {
        if visited[d] == round {
            continue;
        }
        visited[d] = round;
        let free = match det_owner[d] {
            None => true,
            Some(other) => augment(other, round, ranges, det_owner, visited),
        };
        if free {
            det_owner[d] = Some(g);
            return true;
        }
    }
    false
}

/// The ground-truth locations matched by some detection within `margin`,
/// each detection used at most once.
pub fn true_positives(gt: &ChangePointSet, det: &ChangePointSet, margin: usize) -> Vec<usize> {
    max_matching(gt.locations(), det.locations(), margin)
        .into_iter()
        .map(|(g, _)| g)
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

/// Precision against the union of annotations, recall macro-averaged over
/// annotators, both after adding the trivial change point 1 to every set.
pub fn f_measure(
    annotations: &[ChangePointSet],
    det: &ChangePointSet,
    cfg: &MetricConfig,
) -> Result<Prf> {
    if annotations.is_empty() {
        return Err(Error::invalid_input("f-measure needs at least one annotator"));
    }
    let det = det.with_origin();
    let augmented: Vec<ChangePointSet> = annotations.iter().map(|a| a.with_origin()).collect();

    let union: BTreeSet<usize> = augmented
        .iter()
        .flat_map(|a| a.locations().iter().copied())
        .collect();
    let union = ChangePointSet::from_sorted(union.into_iter().collect());

    let precision = ratio(true_positives(&union, &det, cfg.margin).len(), det.len());
    let recall = augmented
        .iter()
        .map(|a| ratio(true_positives(a, &det, cfg.margin).len(), a.len()))
        .sum::<f64>()
        / augmented.len() as f64;

    Ok(Prf {
        precision,
        recall,
        f_beta: f_beta(precision, recall, cfg.beta),
    })
}

/// Scores `det` against `annotations` with the chosen metric.
pub fn score(
    metric: Metric,
    annotations: &[ChangePointSet],
    det: &ChangePointSet,
    length: usize,
    cfg: &MetricConfig,
) -> Result<f64> {
    match metric {
        Metric::Covering => {
            let gts = annotations
                .iter()
                .map(|a| a.to_partition(length))
                .collect::<Result<Vec<_>>>()?;
            covering_multi(&gts, &det.to_partition(length)?)
        }
        Metric::F1 => {
            for a in annotations {
                a.check_length(length)?;
            }
            det.check_length(length)?;
            f_measure(annotations, det, cfg).map(|p| p.f_beta)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvrScores {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// One-vs-rest agreement: each annotator is scored as if it were a detector
/// against the remaining annotators.
pub fn ovr_agreement(
    annotations: &[ChangePointSet],
    length: usize,
    metric: Metric,
    cfg: &MetricConfig,
) -> Result<OvrScores> {
    if annotations.len() < 2 {
        return Err(Error::invalid_input(format!(
            "one-vs-rest agreement needs at least 2 annotators, got {}",
            annotations.len()
        )));
    }
    let mut scores = Vec::with_capacity(annotations.len());
    let mut rest = Vec::with_capacity(annotations.len() - 1);
    for (k, own) in annotations.iter().enumerate() {
        rest.clear();
        rest.extend(
            annotations
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, a)| a.clone()),
        );
        scores.push(score(metric, &rest, own, length, cfg)?);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(OvrScores { scores, mean })
}
