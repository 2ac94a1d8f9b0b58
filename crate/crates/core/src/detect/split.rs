// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::costs::PenalizedCost;
use crate::data::ChangePointSet;
use crate::error::{Error, Result};

use super::Budget;

/// Best single split of `[start, end)` (0-based); returns the boundary `t`
/// (first index of the right part) and the cost reduction.
fn best_split(pc: &PenalizedCost, start: usize, end: usize, min_seg: usize) -> Option<(usize, f64)> {
    if end - start < 2 * min_seg {
        return None;
    }
    let whole = pc.segment(start, end);
    let mut best: Option<(usize, f64)> = None;
    for t in (start + min_seg)..=(end - min_seg) {
        let gain = whole - pc.segment(start, t) - pc.segment(t, end);
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((t, gain));
        }
    }
    best
}

fn check_length(pc: &PenalizedCost, min_seg: usize) -> Result<()> {
    if pc.len() < 2 * min_seg {
        return Err(Error::invalid_input(format!(
            "series of length {} is shorter than two minimum segments ({min_seg})",
            pc.len()
        )));
    }
    Ok(())
}

/// At most one change: the best single split is kept when it lowers the
/// cost by more than the penalty.
pub fn amoc(pc: &PenalizedCost, min_seg: usize) -> Result<ChangePointSet> {
    check_length(pc, min_seg)?;
    Ok(match best_split(pc, 0, pc.len(), min_seg) {
        Some((t, gain)) if gain > pc.beta() => ChangePointSet::from_sorted(vec![t + 1]),
        _ => ChangePointSet::empty(),
    })
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    start: usize,
    end: usize,
    split: Option<(usize, f64)>,
}

/// Greedy binary segmentation: repeatedly split the segment whose best split
/// gives the largest cost reduction, while that reduction exceeds the
/// penalty and fewer than `max_cp` change points were found.
pub fn binseg(
    pc: &PenalizedCost,
    max_cp: usize,
    min_seg: usize,
    budget: &Budget,
) -> Result<ChangePointSet> {
    check_length(pc, min_seg)?;
    let mut segments = vec![Candidate {
        start: 0,
        end: pc.len(),
        split: best_split(pc, 0, pc.len(), min_seg),
    }];
    let mut found = Vec::new();

    while found.len() < max_cp {
        budget.check()?;
        // Segments stay ordered by position, so `>` keeps the leftmost on ties.
        let mut pick: Option<(usize, usize, f64)> = None;
        for (i, seg) in segments.iter().enumerate() {
            if let Some((t, gain)) = seg.split {
                if pick.is_none_or(|(_, _, g)| gain > g) {
                    pick = Some((i, t, gain));
                }
            }
        }
        let Some((i, t, gain)) = pick else { break };
        if gain <= pc.beta() {
            break;
        }
        let seg = segments[i];
        let left = Candidate {
            start: seg.start,
            end: t,
            split: best_split(pc, seg.start, t, min_seg),
        };
        let right = Candidate {
            start: t,
            end: seg.end,
            split: best_split(pc, t, seg.end, min_seg),
        };
        segments.splice(i..=i, [left, right]);
        found.push(t + 1);
    }

    found.sort_unstable();
    Ok(ChangePointSet::from_sorted(found))
}
