// SPDX-License-Identifier: MIT OR Apache-2.0

//! Event-sourced annotation state. Every mutation is an [`Event`]; the
//! state is whatever applying the event log in order produces.

use std::collections::{BTreeMap, BTreeSet};

use cpdbench_core::{AnnotationDb, ChangePointSet};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntroStatus {
    #[default]
    Pending,
    Passed,
    MustRepeat,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotator {
    pub token: String,
    pub intro: IntroStatus,
    /// F1 per demo series in the current intro round.
    pub intro_scores: BTreeMap<String, f64>,
    /// Series ever assigned to this annotator.
    pub history: BTreeSet<String>,
    /// Open task, if any.
    pub open_task: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub annotator: String,
    pub series: String,
    pub submitted: Option<ChangePointSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Registered {
        annotator: String,
        token: String,
    },
    IntroScored {
        annotator: String,
        demo: String,
        f1: f64,
    },
    /// Closes an intro round with the given outcome.
    IntroCompleted {
        annotator: String,
        passed: bool,
    },
    TaskAssigned {
        task: String,
        annotator: String,
        series: String,
    },
    AnnotationSubmitted {
        task: String,
        cps: ChangePointSet,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub annotators: BTreeMap<String, Annotator>,
    pub tasks: BTreeMap<String, Task>,
    /// Completed annotations per series.
    pub counts: BTreeMap<String, usize>,
    /// Open (assigned, unsubmitted) tasks per series.
    pub open: BTreeMap<String, usize>,
    pub events_applied: u64,
}

impl State {
    pub fn apply(&mut self, event: &Event) {
        self.events_applied += 1;
        match event {
            Event::Registered { annotator, token } => {
                self.annotators.insert(
                    annotator.clone(),
                    Annotator {
                        token: token.clone(),
                        ..Annotator::default()
                    },
                );
            }
            Event::IntroScored { annotator, demo, f1 } => {
                if let Some(a) = self.annotators.get_mut(annotator) {
                    a.intro_scores.insert(demo.clone(), *f1);
                }
            }
            Event::IntroCompleted { annotator, passed } => {
                if let Some(a) = self.annotators.get_mut(annotator) {
                    a.intro_scores.clear();
                    a.intro = if *passed {
                        IntroStatus::Passed
                    } else {
                        IntroStatus::MustRepeat
                    };
                }
            }
            Event::TaskAssigned {
                task,
                annotator,
                series,
            } => {
                if let Some(a) = self.annotators.get_mut(annotator) {
                    a.history.insert(series.clone());
                    a.open_task = Some(task.clone());
                }
                *self.open.entry(series.clone()).or_default() += 1;
                self.tasks.insert(
                    task.clone(),
                    Task {
                        annotator: annotator.clone(),
                        series: series.clone(),
                        submitted: None,
                    },
                );
            }
            Event::AnnotationSubmitted { task, cps } => {
                let Some(t) = self.tasks.get_mut(task) else {
                    return;
                };
                if t.submitted.is_some() {
                    return;
                }
                t.submitted = Some(cps.clone());
                if let Some(open) = self.open.get_mut(&t.series) {
                    *open = open.saturating_sub(1);
                }
                *self.counts.entry(t.series.clone()).or_default() += 1;
                if let Some(a) = self.annotators.get_mut(&t.annotator) {
                    if a.open_task.as_deref() == Some(task.as_str()) {
                        a.open_task = None;
                    }
                }
            }
        }
    }

    pub fn annotator_by_token(&self, token: &str) -> Option<(&String, &Annotator)> {
        self.annotators.iter().find(|(_, a)| a.token == token)
    }

    pub fn count(&self, series: &str) -> usize {
        self.counts.get(series).copied().unwrap_or(0)
    }

    pub fn open_count(&self, series: &str) -> usize {
        self.open.get(series).copied().unwrap_or(0)
    }

    /// Submitted annotations keyed by series then annotator.
    pub fn export(&self) -> AnnotationDb {
        let mut db = AnnotationDb::new();
        for t in self.tasks.values() {
            if let Some(cps) = &t.submitted {
                db.insert(&t.series, &t.annotator, cps.clone());
            }
        }
        db
    }
}
