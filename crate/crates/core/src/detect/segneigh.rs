// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::costs::PenalizedCost;
use crate::data::ChangePointSet;
use crate::error::{Error, Result};

use super::{Budget, Solution};

/// Segment neighbourhoods: exact dynamic programme over the number of
/// segments `k = 1..=max_cp + 1`, then the count with the lowest penalized
/// cost is selected (fewest change points on ties).
pub fn segneigh(
    pc: &PenalizedCost,
    max_cp: usize,
    min_seg: usize,
    budget: &Budget,
) -> Result<Solution> {
    Ok(segneigh_table(pc, max_cp, min_seg, budget)?.select(pc.beta(), max_cp))
}

/// Optimal costs and backpointers for every segment count.
///
/// The table depends on the penalty only through the MBIC segment term, so
/// one table answers [`SegNeighTable::select`] for any `beta` and any
/// `max_cp` up to the one it was built with.
#[derive(Clone, Debug)]
pub struct SegNeighTable {
    n: usize,
    /// `totals[k]`: minimal cost of the whole series in `k + 1` segments.
    totals: Vec<f64>,
    back: Vec<Vec<usize>>,
}

pub fn segneigh_table(
    pc: &PenalizedCost,
    max_cp: usize,
    min_seg: usize,
    budget: &Budget,
) -> Result<SegNeighTable> {
    let n = pc.len();
    if min_seg == 0 {
        return Err(Error::invalid_input("min_seg_len must be >= 1"));
    }
    if n < 2 * min_seg {
        return Err(Error::invalid_input(format!(
            "series of length {n} is shorter than two minimum segments ({min_seg})"
        )));
    }
    let max_segments = (max_cp + 1).min(n / min_seg);

    // prev[s]: minimal cost of the first s points in k segments.
    let mut prev = vec![f64::INFINITY; n + 1];
    for (s, slot) in prev.iter_mut().enumerate().skip(min_seg) {
        *slot = pc.segment(0, s);
    }
    let mut totals = vec![prev[n]];
    let mut back: Vec<Vec<usize>> = vec![Vec::new()];

    for k in 1..max_segments {
        budget.check()?;
        let mut row = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        let first = (k + 1) * min_seg;
        for s in first..=n {
            let mut b = f64::INFINITY;
            let mut a = 0;
            for t in (k * min_seg)..=(s - min_seg) {
                if !prev[t].is_finite() {
                    continue;
                }
                let v = prev[t] + pc.segment(t, s);
                if v < b {
                    b = v;
                    a = t;
                }
            }
            row[s] = b;
            arg[s] = a;
        }
        totals.push(row[n]);
        back.push(arg);
        prev = row;
    }
    Ok(SegNeighTable { n, totals, back })
}

impl SegNeighTable {
    /// Largest change point count the table covers.
    pub fn max_cp(&self) -> usize {
        self.totals.len() - 1
    }

    /// Best segmentation with at most `max_cp` change points under `beta`.
    pub fn select(&self, beta: f64, max_cp: usize) -> Solution {
        let mut chosen = 0;
        let mut objective = f64::INFINITY;
        for (k, total) in self.totals.iter().enumerate().take(max_cp + 1) {
            let v = total + beta * k as f64;
            if v < objective {
                objective = v;
                chosen = k;
            }
        }

        let mut cps = Vec::with_capacity(chosen);
        let mut s = self.n;
        for k in (1..=chosen).rev() {
            let t = self.back[k][s];
            cps.push(t + 1);
            s = t;
        }
        cps.reverse();

        Solution {
            change_points: ChangePointSet::from_sorted(cps),
            objective,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostKind, Penalty};
    use crate::detect::binseg;

    #[test]
    fn step_series() {
        let mut y = vec![0.0; 20];
        y.extend([5.0; 20]);
        let pc = PenalizedCost::from_data(&y, CostKind::Mean, Penalty::Bic).unwrap();
        let sol = segneigh(&pc, 5, 1, &Budget::unlimited()).unwrap();
        assert_eq!(sol.change_points.locations(), &[21]);
    }

    #[test]
    fn never_worse_than_binseg() {
        let y: Vec<f64> = (0..80)
            .map(|i| ((i * 131 % 17) as f64) * 0.2 + [0.0, 2.0, -1.0, 1.5][i / 20])
            .collect();
        for penalty in [Penalty::Bic, Penalty::Manual(0.5), Penalty::Mbic] {
            for q in [1, 3, 5] {
                let pc = PenalizedCost::from_data(&y, CostKind::Mean, penalty).unwrap();
                let b = Budget::unlimited();
                let sn = segneigh(&pc, q, 1, &b).unwrap();
                let bs = binseg(&pc, q, 1, &b).unwrap();
                assert!(sn.objective <= pc.objective(bs.locations()) + 1e-9);
                assert!(sn.change_points.len() <= q);
            }
        }
    }

    #[test]
    fn shared_table_matches_direct_runs() {
        let y: Vec<f64> = (0..60).map(|i| ((i * 37 % 11) as f64) * 0.3 + (i / 15) as f64).collect();
        let b = Budget::unlimited();
        let base = PenalizedCost::from_data(&y, CostKind::Mean, Penalty::None).unwrap();
        let table = segneigh_table(&base, 31, 1, &b).unwrap();
        assert_eq!(table.max_cp(), 31);
        for penalty in [Penalty::Bic, Penalty::Aic, Penalty::Manual(0.01), Penalty::Manual(30.0)] {
            let pc = PenalizedCost::from_data(&y, CostKind::Mean, penalty).unwrap();
            for q in [5, 31] {
                let direct = segneigh(&pc, q, 1, &b).unwrap();
                let shared = table.select(pc.beta(), q);
                assert_eq!(direct.change_points, shared.change_points);
                assert!((direct.objective - shared.objective).abs() < 1e-9);
            }
        }
    }
}
