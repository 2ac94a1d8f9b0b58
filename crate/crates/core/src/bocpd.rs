// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bayesian online change point detection with a Gaussian likelihood and a
//! Normal-Inverse-Gamma prior (prior mean 0), a constant hazard, and
//! maximum a posteriori segmentation by run-length backtracking.
//!
//! Run length convention: after observing `x_t`, `r_t` is the number of
//! earlier observations in the current segment, so `r_t = 0` means `x_t`
//! starts a new segment. Multivariate series use an independent NIG model
//! per dimension and multiply the predictive densities.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::ChangePointSet;
use crate::detect::Budget;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BocpdParams {
    /// Expected gap between change points; the hazard is `1 / intensity`.
    pub intensity: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub kappa0: f64,
    /// Keep only the most probable run lengths after each step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

impl Default for BocpdParams {
    fn default() -> Self {
        Self {
            intensity: 100.0,
            alpha0: 1.0,
            beta0: 1.0,
            kappa0: 1.0,
            truncation: None,
        }
    }
}

impl BocpdParams {
    pub fn new(intensity: f64, alpha0: f64, beta0: f64, kappa0: f64) -> Self {
        Self {
            intensity,
            alpha0,
            beta0,
            kappa0,
            truncation: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.intensity, self.alpha0, self.beta0, self.kappa0]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::invalid_input(format!(
                "bocpd parameters must be positive: {self:?}"
            )));
        }
        if self.intensity < 1.0 {
            return Err(Error::invalid_input("bocpd intensity must be >= 1"));
        }
        if self.truncation == Some(0) {
            return Err(Error::invalid_input("bocpd truncation must keep >= 1 run length"));
        }
        Ok(())
    }
}

/// Filtering distributions `p(r_t | x_1..x_t)`; column `t` (0-based) holds
/// run lengths `0..=t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLengthPosterior {
    columns: Vec<Vec<f64>>,
}

impl RunLengthPosterior {
    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Most probable run length at each step (smallest on ties).
    pub fn argmax_path(&self) -> Vec<usize> {
        self.columns.iter().map(|c| argmax(c)).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Posterior NIG parameters of one dimension, indexed by run length.
#[derive(Clone, Debug, Default)]
struct NigColumns {
    mu: Vec<f64>,
    beta: Vec<f64>,
}

struct Filter<'a> {
    data: &'a [Vec<f64>],
    params: BocpdParams,
    log_hazard: f64,
    log_growth: f64,
    /// Per observation count n: ln G(alpha_n + 1/2) - ln G(alpha_n) - ln(2 alpha_n pi) / 2.
    t_const: Vec<f64>,
    stats: Vec<NigColumns>,
    log_post: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Filter<'a> {
    fn new(data: &'a [Vec<f64>], params: BocpdParams) -> Result<Self> {
        params.validate()?;
        if data.is_empty() || data[0].is_empty() {
            return Err(Error::invalid_input("bocpd needs a non-empty series"));
        }
        let n = data[0].len();
        if data.iter().any(|c| c.len() != n) {
            return Err(Error::invalid_input("bocpd dimensions differ in length"));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite observation".into()));
        }
        let hazard = 1.0 / params.intensity;
        let t_const = (0..=n)
            .map(|k| {
                let alpha = params.alpha0 + k as f64 / 2.0;
                ln_gamma(alpha + 0.5)
                    - ln_gamma(alpha)
                    - 0.5 * (2.0 * alpha * std::f64::consts::PI).ln()
            })
            .collect();
        Ok(Self {
            data,
            params,
            log_hazard: hazard.ln(),
            log_growth: (-hazard).ln_1p(),
            t_const,
            stats: vec![NigColumns::default(); data.len()],
            log_post: Vec::with_capacity(n),
            scratch: Vec::with_capacity(n),
        })
    }

    fn len(&self) -> usize {
        self.data[0].len()
    }

    /// Student-t log predictive of `x` after `k` observations with
    /// posterior mean `mu` and scale parameter `beta`.
    #[inline]
    fn log_predictive(&self, x: f64, k: usize, mu: f64, beta: f64) -> f64 {
        let p = &self.params;
        let alpha = p.alpha0 + k as f64 / 2.0;
        let kappa = p.kappa0 + k as f64;
        let scale_sq = beta * (kappa + 1.0) / (alpha * kappa);
        let z2 = (x - mu) * (x - mu) / scale_sq;
        self.t_const[k] - 0.5 * scale_sq.ln() - (alpha + 0.5) * (z2 / (2.0 * alpha)).ln_1p()
    }

    /// Advances to observation `t`; afterwards `log_post[r]` is
    /// `ln p(r_t = r | x_1..x_t)`.
    fn step(&mut self, t: usize) {
        self.scratch.clear();
        // Growth: run length r-1 at t-1 becomes r.
        for r in 1..=t {
            let prev = self.log_post[r - 1];
            if prev == f64::NEG_INFINITY {
                self.scratch.push(f64::NEG_INFINITY);
                continue;
            }
            let mut lp = prev + self.log_growth;
            for (d, col) in self.stats.iter().enumerate() {
                lp += self.log_predictive(self.data[d][t], r, col.mu[r - 1], col.beta[r - 1]);
            }
            self.scratch.push(lp);
        }
        let mut cp = if t == 0 { 0.0 } else { self.log_hazard };
        for d in 0..self.data.len() {
            cp += self.log_predictive(self.data[d][t], 0, 0.0, self.params.beta0);
        }

        self.log_post.clear();
        self.log_post.push(cp);
        self.log_post.extend_from_slice(&self.scratch);
        normalize_log(&mut self.log_post);
        if let Some(keep) = self.params.truncation {
            truncate_log(&mut self.log_post, keep);
        }

        // Update sufficient statistics: r = 0 starts from the prior.
        for (d, col) in self.stats.iter_mut().enumerate() {
            let x = self.data[d][t];
            let kappa0 = self.params.kappa0;
            let mut mu = Vec::with_capacity(t + 1);
            let mut beta = Vec::with_capacity(t + 1);
            let mut push = |k: usize, m: f64, b: f64| {
                let kappa = kappa0 + k as f64;
                mu.push((kappa * m + x) / (kappa + 1.0));
                beta.push(b + kappa * (x - m) * (x - m) / (2.0 * (kappa + 1.0)));
            };
            push(0, 0.0, self.params.beta0);
            for r in 1..=t {
                push(r, col.mu[r - 1], col.beta[r - 1]);
            }
            col.mu = mu;
            col.beta = beta;
        }
    }
}

fn normalize_log(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    let log_z = max + sum.ln();
    for x in v.iter_mut() {
        *x -= log_z;
    }
}

fn truncate_log(v: &mut [f64], keep: usize) {
    if v.len() <= keep {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[keep - 1];
    let mut kept = 0;
    for x in v.iter_mut() {
        if *x >= threshold && kept < keep {
            kept += 1;
        } else {
            *x = f64::NEG_INFINITY;
        }
    }
    normalize_log(v);
}

fn run_filter(
    data: &[Vec<f64>],
    params: &BocpdParams,
    budget: &Budget,
    mut visit: impl FnMut(&[f64]),
) -> Result<()> {
    let mut filter = Filter::new(data, *params)?;
    for t in 0..filter.len() {
        if t % 64 == 0 {
            budget.check()?;
        }
        filter.step(t);
        if filter.log_post.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical(format!("run-length posterior is NaN at t = {}", t + 1)));
        }
        visit(&filter.log_post);
    }
    Ok(())
}

/// Runs the filter over a series given as one column per dimension.
pub fn filter(data: &[Vec<f64>], params: &BocpdParams, budget: &Budget) -> Result<RunLengthPosterior> {
    let mut columns = Vec::with_capacity(data.first().map_or(0, Vec::len));
    run_filter(data, params, budget, |lp| {
        columns.push(lp.iter().map(|v| v.exp()).collect());
    })?;
    Ok(RunLengthPosterior { columns })
}

/// Reads change points off a sequence of most probable run lengths: from
/// the last step, jump back to the start of the current run, record it, and
/// continue from the step before it.
pub fn map_from_argmax(path: &[usize]) -> ChangePointSet {
    let mut cps = Vec::new();
    let Some(mut t) = path.len().checked_sub(1) else {
        return ChangePointSet::empty();
    };
    loop {
        let start = t.saturating_sub(path[t]);
        if start == 0 {
            break;
        }
        cps.push(start + 1);
        t = start - 1;
    }
    cps.reverse();
    ChangePointSet::from_sorted(cps)
}

pub fn map_segmentation(posterior: &RunLengthPosterior) -> ChangePointSet {
    map_from_argmax(&posterior.argmax_path())
}

/// Filter and MAP segmentation in one pass, keeping only the argmax path.
pub fn detect(data: &[Vec<f64>], params: &BocpdParams, budget: &Budget) -> Result<ChangePointSet> {
    let mut path = Vec::with_capacity(data.first().map_or(0, Vec::len));
    run_filter(data, params, budget, |lp| path.push(argmax(lp)))?;
    Ok(map_from_argmax(&path))
}
