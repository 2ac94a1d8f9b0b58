// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact minimization of the penalized objective over all segmentations:
//! the plain O(T^2) optimal-partitioning recursion and its pruned variant
//! (PELT).

use crate::costs::PenalizedCost;
use crate::data::ChangePointSet;
use crate::error::{Error, Result};

use super::Budget;

/// An optimal segmentation and its penalized objective value.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub change_points: ChangePointSet,
    pub objective: f64,
}

fn check_length(pc: &PenalizedCost, min_seg: usize) -> Result<()> {
    if min_seg == 0 {
        return Err(Error::invalid_input("min_seg_len must be >= 1"));
    }
    if pc.len() < min_seg {
        return Err(Error::invalid_input(format!(
            "series of length {} is shorter than the minimum segment ({min_seg})",
            pc.len()
        )));
    }
    Ok(())
}

/// `t` may end a segment prefix: either the origin or a full segment away.
#[inline]
fn admissible(t: usize, min_seg: usize) -> bool {
    t == 0 || t >= min_seg
}

fn backtrack(last: &[usize], length: usize) -> ChangePointSet {
    let mut cps = Vec::new();
    let mut s = length;
    while s > 0 {
        let t = last[s];
        if t > 0 {
            cps.push(t + 1);
        }
        s = t;
    }
    cps.reverse();
    ChangePointSet::from_sorted(cps)
}

/// Unpruned optimal partitioning. `F(s) = min_t F(t) + C(t, s) + beta` with
/// `F(0) = -beta`; the smallest minimizing `t` wins ties.
pub fn optimal_partitioning(pc: &PenalizedCost, min_seg: usize, budget: &Budget) -> Result<Solution> {
    check_length(pc, min_seg)?;
    let n = pc.len();
    let beta = pc.beta();
    let mut f = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -beta;

    for s in min_seg..=n {
        budget.check()?;
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for t in 0..=(s - min_seg) {
            if !admissible(t, min_seg) || !f[t].is_finite() {
                continue;
            }
            let v = f[t] + pc.segment(t, s) + beta;
            if v < best {
                best = v;
                arg = t;
            }
        }
        f[s] = best;
        last[s] = arg;
    }

    Ok(Solution {
        change_points: backtrack(&last, n),
        objective: f[n],
    })
}

/// PELT: optimal partitioning where a candidate `t` is discarded once
/// `F(t) + C(t, s) > F(s)`.
///
/// The rule is exact because the costs are sub-additive (splitting a segment
/// never raises its maximized likelihood cost), so the pruning constant is
/// zero. With a minimum segment length `m` a pruned candidate stays usable
/// for the next `m - 1` steps, where the dominating alternative would need a
/// segment shorter than `m`.
pub fn pelt(pc: &PenalizedCost, min_seg: usize, budget: &Budget) -> Result<Solution> {
    check_length(pc, min_seg)?;
    let n = pc.len();
    let beta = pc.beta();
    let mut f = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -beta;

    // (candidate, step at which it expires)
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    let mut values: Vec<f64> = Vec::new();

    for s in min_seg..=n {
        if s % 256 == 0 {
            budget.check()?;
        }
        let fresh = s - min_seg;
        if admissible(fresh, min_seg) && f[fresh].is_finite() {
            candidates.push((fresh, usize::MAX));
        }
        candidates.retain(|&(_, expiry)| expiry > s);

        values.clear();
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for &(t, _) in &candidates {
            let v = f[t] + pc.segment(t, s);
            values.push(v);
            if v + beta < best {
                best = v + beta;
                arg = t;
            }
        }
        f[s] = best;
        last[s] = arg;

        for (c, &v) in candidates.iter_mut().zip(&values) {
            if v > best && c.1 == usize::MAX {
                c.1 = s + min_seg;
            }
        }
    }

    Ok(Solution {
        change_points: backtrack(&last, n),
        objective: f[n],
    })
}
