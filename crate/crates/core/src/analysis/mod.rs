// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rank-based comparison of methods across datasets: fractional ranks,
//! the Friedman test, pairwise Wilcoxon signed-rank tests with Holm's
//! correction, and critical-difference diagrams.

mod cd;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::experiments::ScoreMatrix;

pub use cd::{cd_diagram, maximal_cliques};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest number of non-zero differences for the exact Wilcoxon null.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Ranks of methods per dataset; 1 is best, ties share the mean rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[dataset][method]`.
    pub ranks: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
}

impl RankTable {
    pub fn methods_len(&self) -> usize {
        self.methods.len()
    }

    pub fn datasets_len(&self) -> usize {
        self.datasets.len()
    }

    /// CSV with one row per dataset and a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for m in &self.methods {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for (d, row) in self.datasets.iter().zip(&self.ranks) {
            out.push_str(d);
            for r in row {
                let _ = write!(out, ",{r}");
            }
            out.push('\n');
        }
        out.push_str("mean");
        for r in &self.mean_ranks {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
        out
    }
}

/// Fractional ranks of `values`, highest value ranked 1.
pub fn fractional_ranks_desc(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    assign_tied_ranks(&order, |i| values[i])
}

/// Fractional ranks of `values`, smallest value ranked 1.
fn fractional_ranks_asc(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    assign_tied_ranks(&order, |i| values[i])
}

fn assign_tied_ranks(order: &[usize], key: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut ranks = vec![0.0; order.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && key(order[j]) == key(order[i]) {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

pub fn rank_scores(sm: &ScoreMatrix) -> Result<RankTable> {
    if sm.methods.is_empty() || sm.series.is_empty() {
        return Err(Error::invalid_input("cannot rank an empty score matrix"));
    }
    let mut ranks = Vec::with_capacity(sm.series.len());
    for (name, row) in sm.series.iter().zip(&sm.cells) {
        let dense: Vec<f64> = row
            .iter()
            .map(|c| {
                c.ok_or_else(|| {
                    Error::invalid_input(format!("absent score in row {name:?}; filter rows first"))
                })
            })
            .collect::<Result<_>>()?;
        ranks.push(fractional_ranks_desc(&dense));
    }
    let n = ranks.len() as f64;
    let mean_ranks = (0..sm.methods.len())
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    Ok(RankTable {
        methods: sm.methods.clone(),
        datasets: sm.series.clone(),
        ranks,
        mean_ranks,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Friedman {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Friedman statistic on mean ranks with a χ² reference distribution.
pub fn friedman(rt: &RankTable) -> Result<Friedman> {
    let l = rt.methods_len();
    let n = rt.datasets_len();
    if l < 2 || n < 2 {
        return Err(Error::invalid_input(format!(
            "friedman test needs at least 2 methods and 2 datasets, got {l} and {n}"
        )));
    }
    let (lf, nf) = (l as f64, n as f64);
    let sum_sq: f64 = rt.mean_ranks.iter().map(|r| r * r).sum();
    let statistic = (12.0 * nf / (lf * (lf + 1.0))) * (sum_sq - lf * (lf + 1.0).powi(2) / 4.0);
    // Guard against tiny negative values from rounding.
    let statistic = statistic.max(0.0);
    let chi = ChiSquared::new((l - 1) as f64).expect("positive dof");
    Ok(Friedman {
        statistic,
        dof: l - 1,
        p_value: chi.sf(statistic),
    })
}

/// Treatment of zero differences in the signed-rank test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMethod {
    /// Drop zero differences before ranking.
    #[default]
    Wilcox,
    /// Rank zero differences with the rest, then drop them.
    Pratt,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test of `a - b`.
///
/// Uses the exact permutation distribution for up to
/// [`WILCOXON_EXACT_MAX`] non-zero differences and a normal approximation
/// with tie-corrected variance beyond that.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], zeros: ZeroMethod) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let ranked: Vec<(f64, bool)> = match zeros {
        ZeroMethod::Wilcox => {
            let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
            let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
            fractional_ranks_asc(&abs)
                .into_iter()
                .zip(nz.iter().map(|d| *d > 0.0))
                .collect()
        }
        ZeroMethod::Pratt => {
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            fractional_ranks_asc(&abs)
                .into_iter()
                .zip(&diffs)
                .filter(|(_, d)| **d != 0.0)
                .map(|(r, d)| (r, *d > 0.0))
                .collect()
        }
    };
    let n = ranked.len();
    let statistic: f64 = ranked.iter().filter(|(_, pos)| *pos).map(|(r, _)| r).sum();
    if n == 0 {
        return Ok(Wilcoxon {
            statistic: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
        });
    }
    let ranks: Vec<f64> = ranked.iter().map(|(r, _)| *r).collect();
    if n <= WILCOXON_EXACT_MAX {
        Ok(Wilcoxon {
            statistic,
            n,
            p_value: exact_signed_rank_p(&ranks, statistic),
            exact: true,
        })
    } else {
        let mean = ranks.iter().sum::<f64>() / 2.0;
        let var = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
        let p_value = if var <= 0.0 {
            1.0
        } else {
            let dev = ((statistic - mean).abs() - 0.5).max(0.0);
            let z = dev / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * normal.sf(z)).min(1.0)
        };
        Ok(Wilcoxon {
            statistic,
            n,
            p_value,
            exact: false,
        })
    }
}

/// Exact two-sided p-value of the signed-rank statistic: every rank is
/// positive or negative with probability 1/2.
fn exact_signed_rank_p(ranks: &[f64], statistic: f64) -> f64 {
    // Ranks are multiples of 1/2, so doubling makes them integral.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = (2.0 * statistic).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Holm's step-down procedure. Returns one reject flag per input p-value.
pub fn holm_adjust(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut reject = vec![false; m];
    for (i, &k) in order.iter().enumerate() {
        if pvals[k] <= alpha / (m - i) as f64 {
            reject[k] = true;
        } else {
            break;
        }
    }
    reject
}

/// Bonferroni rejections, for comparison with Holm.
pub fn bonferroni(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len() as f64;
    pvals.iter().map(|&p| p <= alpha / m).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub metric: String,
    pub alpha: f64,
    pub methods: Vec<String>,
    pub mean_ranks: Vec<f64>,
    pub datasets: usize,
    pub friedman: Friedman,
    /// Symmetric matrix of raw pairwise Wilcoxon p-values (1 on the diagonal).
    pub pvalues: Vec<Vec<f64>>,
    /// Holm decisions over all pairs; symmetric, false on the diagonal.
    pub reject: Vec<Vec<bool>>,
    /// Maximal groups of mutually non-significant methods (indices).
    pub groups: Vec<Vec<usize>>,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full comparison of the methods in `sm` on its complete rows.
pub fn compare(sm: &ScoreMatrix, alpha: f64, zeros: ZeroMethod) -> Result<TestReport> {
    let complete = sm.complete_rows();
    let rt = rank_scores(&complete)?;
    let fr = friedman(&rt)?;
    let rows = complete.dense_rows();
    let l = complete.methods.len();
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();

    let mut pairs = Vec::new();
    let mut pvals = Vec::new();
    for i in 0..l {
        for j in (i + 1)..l {
            pairs.push((i, j));
            pvals.push(wilcoxon_signed_rank(&column(i), &column(j), zeros)?.p_value);
        }
    }
    let decisions = holm_adjust(&pvals, alpha);
    let mut pvalues = vec![vec![1.0; l]; l];
    let mut reject = vec![vec![false; l]; l];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        pvalues[i][j] = pvals[k];
        pvalues[j][i] = pvals[k];
        reject[i][j] = decisions[k];
        reject[j][i] = decisions[k];
    }
    let groups = maximal_cliques(&reject)
        .into_iter()
        .filter(|g| g.len() >= 2)
        .collect();
    Ok(TestReport {
        metric: sm.metric.to_string(),
        alpha,
        methods: complete.methods.clone(),
        mean_ranks: rt.mean_ranks,
        datasets: rt.datasets.len(),
        friedman: fr,
        pvalues,
        reject,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metric;
    use approx::assert_relative_eq;

    fn matrix(rows: &[&[f64]]) -> ScoreMatrix {
        let methods = (0..rows[0].len()).map(|j| format!("m{j}")).collect();
        let mut sm = ScoreMatrix::new(Metric::F1, methods);
        for (i, r) in rows.iter().enumerate() {
            sm.push_row(format!("d{i}"), r.iter().map(|&v| Some(v)).collect()).unwrap();
        }
        sm
    }

    #[test]
    fn rank_examples() {
        assert_eq!(fractional_ranks_desc(&[0.9, 0.5, 0.1]), vec![1.0, 2.0, 3.0]);
        assert_eq!(fractional_ranks_desc(&[0.9, 0.9, 0.1]), vec![1.5, 1.5, 3.0]);
        assert_eq!(fractional_ranks_desc(&[0.2; 4]), vec![2.5; 4]);
        let mut sm = matrix(&[&[1.0, 0.0]]);
        sm.push_row("x", vec![None, Some(1.0)]).unwrap();
        assert!(rank_scores(&sm).is_err());
        assert!(rank_scores(&ScoreMatrix::new(Metric::F1, vec![])).is_err());
    }

    #[test]
    fn friedman_examples() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 0.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let fr = friedman(&rank_scores(&matrix(&refs)).unwrap()).unwrap();
        assert_eq!(fr.statistic, 10.0);
        assert_eq!(fr.dof, 1);
        assert_relative_eq!(fr.p_value, 0.001_565_402_258, epsilon = 1e-9);

        let tied = friedman(&rank_scores(&matrix(&[&[0.5, 0.5, 0.5], &[0.1, 0.1, 0.1]])).unwrap()).unwrap();
        assert_eq!(tied.statistic, 0.0);
        assert_eq!(tied.p_value, 1.0);
        assert!(friedman(&rank_scores(&matrix(&[&[1.0, 0.0]])).unwrap()).is_err());
    }

    #[test]
    fn wilcoxon_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let w = wilcoxon_signed_rank(&a, &a, ZeroMethod::Wilcox).unwrap();
        assert_eq!(w.p_value, 1.0);
        let b = [0.5, 1.0, 1.5, 2.0, 2.5];
        let w = wilcoxon_signed_rank(&a, &b, ZeroMethod::Wilcox).unwrap();
        assert_eq!(w.p_value, 0.0625);
        assert_eq!(w.statistic, 15.0);
        assert_eq!(wilcoxon_signed_rank(&b, &a, ZeroMethod::Wilcox).unwrap().p_value, 0.0625);
        assert!(wilcoxon_signed_rank(&a, &b[..4], ZeroMethod::Wilcox).is_err());
    }

    #[test]
    fn wilcoxon_zero_handling() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 1.0, 1.0, 1.0];
        let w = wilcoxon_signed_rank(&a, &b, ZeroMethod::Wilcox).unwrap();
        assert_eq!((w.n, w.statistic), (3, 6.0));
        assert_eq!(w.p_value, 0.25);
        let p = wilcoxon_signed_rank(&a, &b, ZeroMethod::Pratt).unwrap();
        // Ranks 2, 3, 4 of the non-zero differences.
        assert_eq!((p.n, p.statistic), (3, 9.0));
        assert_eq!(p.p_value, 0.25);
    }

    #[test]
    fn wilcoxon_normal_matches_textbook_formula() {
        // 30 distinct differences: variance n(n+1)(2n+1)/24.
        let a: Vec<f64> = (1..=30).map(|i| i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let b = vec![0.0; 30];
        let w = wilcoxon_signed_rank(&a, &b, ZeroMethod::Wilcox).unwrap();
        assert!(!w.exact);
        let n = 30.0f64;
        let mean = n * (n + 1.0) / 4.0;
        let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt();
        let z = ((w.statistic - mean).abs() - 0.5) / sd;
        let expected = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(z);
        assert_relative_eq!(w.p_value, expected, epsilon = 1e-12);
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm_adjust(&[0.01, 0.02, 0.04], 0.05), vec![true; 3]);
        assert_eq!(holm_adjust(&[0.03, 0.5, 0.9], 0.05), vec![false; 3]);
        assert!(holm_adjust(&[], 0.05).is_empty());
        assert_eq!(holm_adjust(&[0.04, 0.01, 0.02], 0.05), vec![true; 3]);
        assert_eq!(holm_adjust(&[0.01, 0.04, 0.03], 0.05), vec![true, false, false]);
    }

    #[test]
    fn compare_report_shape() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![0.9 - 0.01 * i as f64, 0.5 + 0.01 * (i % 3) as f64, 0.1])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let rep = compare(&matrix(&refs), DEFAULT_ALPHA, ZeroMethod::Wilcox).unwrap();
        assert_eq!(rep.mean_ranks, vec![1.0, 2.0, 3.0]);
        for i in 0..3 {
            assert!(!rep.reject[i][i]);
            for j in 0..3 {
                assert_eq!(rep.reject[i][j], rep.reject[j][i]);
            }
        }
        assert!(rep.reject[0][2]);
        assert!(rep.groups.is_empty());
        let json: TestReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json, rep);
    }

    #[test]
    fn rank_csv() {
        let rt = rank_scores(&matrix(&[&[0.9, 0.1], &[0.2, 0.2]])).unwrap();
        assert_eq!(rt.to_csv(), "dataset,m0,m1\nd0,1,2\nd1,1.5,1.5\nmean,1.25,1.75\n");
    }
}
