// SPDX-License-Identifier: MIT OR Apache-2.0

//! Null model for annotator agreement.
//!
//! Simulated annotators declare `Poisson(eta)` change points (capped at
//! `T - 2`) drawn uniformly without replacement from `[2, T - 1]`. The mean
//! one-vs-rest agreement of many simulated panels gives a reference
//! distribution, and the p-value of an observed panel is the fraction of
//! simulated agreements that are at least as large.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationDb, ChangePointSet};
use crate::error::{Error, Result};
use crate::metrics::{ovr_agreement, Metric, MetricConfig};

/// Iterations simulated per independent random stream.
const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub eta: f64,
    pub iterations: usize,
    pub metric: Metric,
    pub metric_config: MetricConfig,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(eta: f64, iterations: usize, metric: Metric, seed: u64) -> Self {
        Self {
            eta,
            iterations,
            metric,
            metric_config: MetricConfig::default(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid_input(format!("eta must be positive, got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid_input("iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Draws one simulated annotation for a series of length `length`.
pub fn simulate_annotator<R: Rng + ?Sized>(length: usize, eta: f64, rng: &mut R) -> Result<ChangePointSet> {
    if length < 3 {
        return Err(Error::invalid_input(format!(
            "simulation needs T >= 3, got {length}"
        )));
    }
    let poisson = Poisson::new(eta)
        .map_err(|e| Error::invalid_input(format!("poisson rate {eta}: {e}")))?;
    let count = (poisson.sample(rng) as usize).min(length - 2);
    let mut locs: Vec<usize> = index::sample(rng, length - 2, count)
        .into_iter()
        .map(|i| i + 2)
        .collect();
    locs.sort_unstable();
    Ok(ChangePointSet::new(locs, length).expect("locations within [2, T-1]"))
}

/// Sampled mean one-vs-rest agreements under the null model.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedAgreement {
    values: Vec<f64>,
}

impl SimulatedAgreement {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fraction of simulated agreements `>= observed`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let hits = self.values.iter().filter(|&&v| v >= observed).count();
        hits as f64 / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Simulates `cfg.iterations` panels of `annotators` annotators.
///
/// Iterations are split into fixed-size chunks with one ChaCha stream per
/// chunk, so the result depends only on the seed and not on thread count.
pub fn simulate_agreement(length: usize, annotators: usize, cfg: &SimConfig) -> Result<SimulatedAgreement> {
    cfg.validate()?;
    if annotators < 2 {
        return Err(Error::invalid_input("agreement needs at least 2 annotators"));
    }
    if length < 3 {
        return Err(Error::invalid_input(format!(
            "simulation needs T >= 3, got {length}"
        )));
    }
    let chunks = cfg.iterations.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk as u64);
            let todo = CHUNK.min(cfg.iterations - chunk * CHUNK);
            let mut panel = Vec::with_capacity(annotators);
            (0..todo)
                .map(|_| {
                    panel.clear();
                    for _ in 0..annotators {
                        panel.push(simulate_annotator(length, cfg.eta, &mut rng)?);
                    }
                    Ok(ovr_agreement(&panel, length, cfg.metric, &cfg.metric_config)?.mean)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(SimulatedAgreement {
        values: parts.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub series: String,
    pub observed: f64,
    pub p_hat: f64,
    pub iterations: usize,
    pub eta: f64,
    pub metric: Metric,
    pub annotators: usize,
    pub null_mean: f64,
}

/// Compares the observed one-vs-rest agreement of `annotations` with the
/// null model.
pub fn agreement_pvalue(
    series: &str,
    annotations: &[ChangePointSet],
    length: usize,
    cfg: &SimConfig,
) -> Result<AgreementReport> {
    let observed = ovr_agreement(annotations, length, cfg.metric, &cfg.metric_config)?.mean;
    let sim = simulate_agreement(length, annotations.len(), cfg)?;
    Ok(AgreementReport {
        series: series.to_owned(),
        observed,
        p_hat: sim.p_value(observed),
        iterations: cfg.iterations,
        eta: cfg.eta,
        metric: cfg.metric,
        annotators: annotations.len(),
        null_mean: sim.mean(),
    })
}

/// Mean number of change points per (series, annotator) pair.
pub fn estimate_eta(db: &AnnotationDb) -> Result<f64> {
    let (total, count) = db
        .iter()
        .flat_map(|(_, m)| m.values())
        .fold((0usize, 0usize), |(t, c), cps| (t + cps.len(), c + 1));
    if count == 0 {
        return Err(Error::invalid_input("no annotations to estimate eta from"));
    }
    Ok(total as f64 / count as f64)
}

/// Markdown table of agreement reports.
pub fn reports_markdown(reports: &[AgreementReport]) -> String {
    let mut out = String::from("| series | metric | observed | p-value |\n|---|---|---:|---:|\n");
    for r in reports {
        let p = if r.p_hat > 0.05 {
            format!("**{:.3}**", r.p_hat)
        } else {
            format!("{:.3}", r.p_hat)
        };
        out.push_str(&format!(
            "| {} | {} | {:.3} | {} |\n",
            r.series, r.metric, r.observed, p
        ));
    }
    out
}
