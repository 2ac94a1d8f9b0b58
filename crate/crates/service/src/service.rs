// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::PathBuf;

use cpdbench_core::metrics::{f_measure, max_matching, MetricConfig};
use cpdbench_core::synth::{self, Synthetic};
use cpdbench_core::{AnnotationDb, ChangePointSet, TimeSeries};
use rand::rngs::OsRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::state::{Event, IntroStatus, State};
use crate::store::Store;

/// Instructions shown with every task.
pub const RUBRIC: &str = "Please mark the point(s) in the time series where an abrupt change in the behavior of the series occurs. The goal is to define segments of the time series that are separated by places where these abrupt changes occur. Recall that it is also possible for there to be no change points.";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Series offered for annotation (real and quality-control alike).
    pub series: Vec<TimeSeries>,
    pub annotators_per_series: usize,
    /// Minimum mean F1 over the introduction series.
    pub intro_threshold: f64,
    pub margin: usize,
    pub admin_token: Option<String>,
    /// Directory for the event log and snapshots; `None` keeps state in memory.
    pub store_dir: Option<PathBuf>,
    pub snapshot_every: u64,
    /// Seed of the assignment tie-breaking RNG.
    pub seed: u64,
    /// Seed of the generated introduction series.
    pub demo_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            series: Vec::new(),
            annotators_per_series: 5,
            intro_threshold: 0.8,
            margin: 5,
            admin_token: None,
            store_dir: None,
            snapshot_every: 100,
            seed: 0,
            demo_seed: 0,
        }
    }
}

/// Series data as shown to annotators: no name, no time index, and values
/// rescaled to `[0, 1]` per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPayload {
    pub n_obs: usize,
    pub n_dim: usize,
    pub values: Vec<Vec<Option<f64>>>,
    pub rubric: String,
}

impl SeriesPayload {
    pub fn scrubbed(series: &TimeSeries) -> Self {
        let values = series
            .columns()
            .iter()
            .map(|col| {
                let (lo, hi) = col.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
                let span = hi - lo;
                col.iter()
                    .map(|v| v.map(|x| if span > 0.0 { (x - lo) / span } else { 0.5 }))
                    .collect()
            })
            .collect();
        Self {
            n_obs: series.len(),
            n_dim: series.dim(),
            values,
            rubric: RUBRIC.to_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub task_id: String,
    #[serde(flatten)]
    pub series: SeriesPayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntroPayload {
    pub demo_id: String,
    /// 1-based position in the introduction.
    pub step: usize,
    pub total: usize,
    #[serde(flatten)]
    pub series: SeriesPayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntroNext {
    pub status: IntroStatus,
    pub demo: Option<IntroPayload>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub location: usize,
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntroFeedback {
    pub demo_id: String,
    pub f1: f64,
    pub verdicts: Vec<PointVerdict>,
    /// True change points no submitted point matched.
    pub missed: Vec<usize>,
    pub status: IntroStatus,
    pub remaining: usize,
    /// Mean F1 of the round, once every demo was answered.
    pub mean_f1: Option<f64>,
}

/// Change points as submitted by a client.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Marks {
    #[serde(default)]
    pub cps: Vec<usize>,
    #[serde(default)]
    pub no_change: bool,
}

impl Marks {
    fn validate(&self, length: usize) -> Result<ChangePointSet, ServiceError> {
        if self.no_change && !self.cps.is_empty() {
            return Err(ServiceError::BadRequest(
                "no_change cannot be combined with change points".into(),
            ));
        }
        if !self.no_change && self.cps.is_empty() {
            return Err(ServiceError::BadRequest(
                "mark at least one change point or set no_change".into(),
            ));
        }
        ChangePointSet::new(self.cps.clone(), length)
            .map_err(|e| ServiceError::BadRequest(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub annotator_id: String,
    pub token: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub task_id: String,
    pub accepted: bool,
    /// True when the same submission had already been recorded.
    pub duplicate: bool,
}

pub struct Service {
    config: ServiceConfig,
    series: BTreeMap<String, TimeSeries>,
    demos: Vec<Synthetic>,
    state: State,
    store: Store,
    rng: ChaCha8Rng,
}

fn random_hex() -> String {
    format!("{:032x}", OsRng.gen::<u128>())
}

impl Service {
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let (store, state) = match &config.store_dir {
            Some(dir) => Store::open(dir, config.snapshot_every)?,
            None => (Store::in_memory(), State::default()),
        };
        let mut series = BTreeMap::new();
        for s in &config.series {
            if series.insert(s.name().to_owned(), s.clone()).is_some() {
                return Err(ServiceError::BadRequest(format!("duplicate series {:?}", s.name())));
            }
        }
        let demos = synth::demo_names()
            .map(|n| synth::generate(n, config.demo_seed).expect("catalog demo"))
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ state.events_applied);
        Ok(Self {
            config,
            series,
            demos,
            state,
            store,
            rng,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    fn record(&mut self, event: Event) -> Result<(), ServiceError> {
        self.store.append(&event)?;
        self.state.apply(&event);
        self.store.maybe_snapshot(&self.state)
    }

    pub fn authenticate(&self, token: &str) -> Result<String, ServiceError> {
        self.state
            .annotator_by_token(token)
            .map(|(id, _)| id.clone())
            .ok_or(ServiceError::Unauthorized)
    }

    pub fn check_admin(&self, token: &str) -> Result<(), ServiceError> {
        match &self.config.admin_token {
            Some(t) if t == token => Ok(()),
            Some(_) => Err(ServiceError::Unauthorized),
            None => Err(ServiceError::Forbidden("export is disabled: no admin token configured".into())),
        }
    }

    pub fn register(&mut self) -> Result<Registration, ServiceError> {
        let annotator_id = format!("a{}", self.state.annotators.len() + 1);
        let token = random_hex();
        self.record(Event::Registered {
            annotator: annotator_id.clone(),
            token: token.clone(),
        })?;
        Ok(Registration { annotator_id, token })
    }

    fn intro_status(&self, annotator: &str) -> IntroStatus {
        self.state.annotators.get(annotator).map(|a| a.intro).unwrap_or_default()
    }

    pub fn intro_next(&self, annotator: &str) -> IntroNext {
        let a = &self.state.annotators[annotator];
        if a.intro == IntroStatus::Passed {
            return IntroNext {
                status: a.intro,
                demo: None,
            };
        }
        let next = self
            .demos
            .iter()
            .enumerate()
            .find(|(_, d)| !a.intro_scores.contains_key(d.series.name()));
        IntroNext {
            status: a.intro,
            demo: next.map(|(i, d)| IntroPayload {
                demo_id: d.series.name().to_owned(),
                step: i + 1,
                total: self.demos.len(),
                series: SeriesPayload::scrubbed(&d.series),
            }),
        }
    }

    pub fn submit_intro(&mut self, annotator: &str, demo_id: &str, marks: &Marks) -> Result<IntroFeedback, ServiceError> {
        if self.intro_status(annotator) == IntroStatus::Passed {
            return Err(ServiceError::Conflict("introduction already passed".into()));
        }
        let demo = self
            .demos
            .iter()
            .find(|d| d.series.name() == demo_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown demo {demo_id:?}")))?
            .clone();
        let cps = marks.validate(demo.series.len())?;
        let cfg = MetricConfig {
            margin: self.config.margin,
            ..MetricConfig::default()
        };
        let f1 = f_measure(std::slice::from_ref(&demo.truth), &cps, &cfg)
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?
            .f_beta;
        let pairs = max_matching(demo.truth.locations(), cps.locations(), self.config.margin);
        let verdicts = cps
            .locations()
            .iter()
            .map(|&l| PointVerdict {
                location: l,
                matched: pairs.iter().any(|&(_, d)| d == l),
            })
            .collect();
        let missed = demo
            .truth
            .locations()
            .iter()
            .copied()
            .filter(|g| !pairs.iter().any(|(pg, _)| pg == g))
            .collect();

        self.record(Event::IntroScored {
            annotator: annotator.to_owned(),
            demo: demo_id.to_owned(),
            f1,
        })?;

        let scores = &self.state.annotators[annotator].intro_scores;
        let remaining = self.demos.len() - scores.len();
        let mut mean_f1 = None;
        if remaining == 0 {
            let mean = scores.values().sum::<f64>() / scores.len() as f64;
            mean_f1 = Some(mean);
            self.record(Event::IntroCompleted {
                annotator: annotator.to_owned(),
                passed: mean >= self.config.intro_threshold,
            })?;
        }
        Ok(IntroFeedback {
            demo_id: demo_id.to_owned(),
            f1,
            verdicts,
            missed,
            status: self.intro_status(annotator),
            remaining,
            mean_f1,
        })
    }

    /// Series eligible for `annotator`, i.e. not yet seen by them and with
    /// completed plus open annotations below the target.
    fn eligible(&self, annotator: &str) -> Vec<&str> {
        let history = &self.state.annotators[annotator].history;
        self.series
            .keys()
            .filter(|s| !history.contains(*s))
            .filter(|s| self.state.count(s) + self.state.open_count(s) < self.config.annotators_per_series)
            .map(String::as_str)
            .collect()
    }

    /// Returns the annotator's open task, or assigns a new one: among the
    /// eligible series those with the highest completed count are preferred,
    /// ties broken uniformly at random.
    pub fn next_assignment(&mut self, annotator: &str) -> Result<Option<TaskPayload>, ServiceError> {
        if self.intro_status(annotator) != IntroStatus::Passed {
            return Err(ServiceError::Forbidden("complete the introduction first".into()));
        }
        if let Some(task_id) = self.state.annotators[annotator].open_task.clone() {
            let series = &self.state.tasks[&task_id].series;
            return Ok(Some(TaskPayload {
                task_id,
                series: SeriesPayload::scrubbed(&self.series[series]),
            }));
        }
        let eligible = self.eligible(annotator);
        let Some(best) = eligible.iter().map(|s| self.state.count(s)).max() else {
            return Ok(None);
        };
        let top: Vec<String> = eligible
            .into_iter()
            .filter(|s| self.state.count(s) == best)
            .map(str::to_owned)
            .collect();
        let series = top.choose(&mut self.rng).expect("nonempty").clone();
        let task_id = random_hex();
        self.record(Event::TaskAssigned {
            task: task_id.clone(),
            annotator: annotator.to_owned(),
            series: series.clone(),
        })?;
        Ok(Some(TaskPayload {
            task_id,
            series: SeriesPayload::scrubbed(&self.series[&series]),
        }))
    }

    pub fn submit_annotation(&mut self, annotator: &str, task_id: &str, marks: &Marks) -> Result<Ack, ServiceError> {
        let task = self
            .state
            .tasks
            .get(task_id)
            .filter(|t| t.annotator == annotator)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown task {task_id:?}")))?;
        let length = self.series[&task.series].len();
        let cps = marks.validate(length)?;
        if let Some(previous) = &task.submitted {
            return if *previous == cps {
                Ok(Ack {
                    task_id: task_id.to_owned(),
                    accepted: true,
                    duplicate: true,
                })
            } else {
                Err(ServiceError::Conflict(format!(
                    "task {task_id:?} was already submitted with different change points"
                )))
            };
        }
        self.record(Event::AnnotationSubmitted {
            task: task_id.to_owned(),
            cps,
        })?;
        Ok(Ack {
            task_id: task_id.to_owned(),
            accepted: true,
            duplicate: false,
        })
    }

    pub fn export(&self) -> AnnotationDb {
        self.state.export()
    }
}
