// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded generators for the quality-control and introductory series.
//!
//! The change point locations are fixed per series; lengths, noise levels,
//! slopes and amplitudes are constants of this catalog (versioned by
//! [`CATALOG_VERSION`]) chosen so that each stated change is an effect of at
//! least two noise standard deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{AnnotationDb, ChangePointSet, TimeSeries};
use crate::error::{Error, Result};

pub const CATALOG_VERSION: u32 = 1;

/// Annotator id used for the ground truth of generated series.
pub const TRUTH_ANNOTATOR: &str = "truth";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Gaussian noise with a small trend, then an offset with uniform noise.
    TrendThenOffset,
    MeanShift,
    /// Noise change with a single outlier before the change.
    NoiseChangeWithOutlier,
    PeriodicMeanShift,
    PureNoise,
    MultipleMeanShifts,
    VarianceChange,
    OutliersAndShift,
    TrendChange,
    RandomWalk,
    PeriodicityChange,
    Multidimensional,
}

#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub name: &'static str,
    pub length: usize,
    pub dims: usize,
    pub truth: &'static [usize],
    pub kind: SynthKind,
    pub quality_control: bool,
}

const CATALOG: &[SynthSpec] = &[
    SynthSpec { name: "quality_control_1", length: 250, dims: 1, truth: &[146], kind: SynthKind::TrendThenOffset, quality_control: true },
    SynthSpec { name: "quality_control_2", length: 200, dims: 1, truth: &[97], kind: SynthKind::MeanShift, quality_control: true },
    SynthSpec { name: "quality_control_3", length: 250, dims: 1, truth: &[179], kind: SynthKind::NoiseChangeWithOutlier, quality_control: true },
    SynthSpec { name: "quality_control_4", length: 420, dims: 1, truth: &[341], kind: SynthKind::PeriodicMeanShift, quality_control: true },
    SynthSpec { name: "quality_control_5", length: 200, dims: 1, truth: &[], kind: SynthKind::PureNoise, quality_control: true },
    SynthSpec { name: "demo_100", length: 100, dims: 1, truth: &[50], kind: SynthKind::MeanShift, quality_control: false },
    SynthSpec { name: "demo_200", length: 120, dims: 1, truth: &[33, 79], kind: SynthKind::MultipleMeanShifts, quality_control: false },
    SynthSpec { name: "demo_300", length: 100, dims: 1, truth: &[43], kind: SynthKind::VarianceChange, quality_control: false },
    SynthSpec { name: "demo_400", length: 100, dims: 1, truth: &[], kind: SynthKind::PureNoise, quality_control: false },
    SynthSpec { name: "demo_500", length: 150, dims: 1, truth: &[80], kind: SynthKind::OutliersAndShift, quality_control: false },
    SynthSpec { name: "demo_600", length: 120, dims: 1, truth: &[65], kind: SynthKind::TrendChange, quality_control: false },
    SynthSpec { name: "demo_650", length: 120, dims: 1, truth: &[], kind: SynthKind::RandomWalk, quality_control: false },
    SynthSpec { name: "demo_700", length: 120, dims: 1, truth: &[57], kind: SynthKind::PeriodicityChange, quality_control: false },
    SynthSpec { name: "demo_800", length: 120, dims: 2, truth: &[65], kind: SynthKind::Multidimensional, quality_control: false },
];

pub fn catalog() -> &'static [SynthSpec] {
    CATALOG
}

pub fn spec(name: &str) -> Result<&'static SynthSpec> {
    CATALOG
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::invalid_input(format!("unknown synthetic series {name:?}")))
}

pub fn quality_control_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().filter(|s| s.quality_control).map(|s| s.name)
}

pub fn demo_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().filter(|s| !s.quality_control).map(|s| s.name)
}

pub fn is_quality_control(name: &str) -> bool {
    name.starts_with("quality_control")
}

/// A generated series and its known change points.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub series: TimeSeries,
    pub truth: ChangePointSet,
}

impl Synthetic {
    /// The ground truth in annotation-file form under [`TRUTH_ANNOTATOR`].
    pub fn truth_annotations(&self) -> AnnotationDb {
        let mut db = AnnotationDb::new();
        db.insert(self.series.name(), TRUTH_ANNOTATOR, self.truth.clone());
        db
    }
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn generate(name: &str, seed: u64) -> Result<Synthetic> {
    let spec = spec(name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(name));
    let n = spec.length;
    let cp = spec.truth.first().map(|&c| c - 1).unwrap_or(n);
    let noise = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(spec.dims);
    match spec.kind {
        SynthKind::TrendThenOffset => {
            let half_width = 3f64.sqrt();
            columns.push(
                (0..n)
                    .map(|t| {
                        let trend = 0.01 * t as f64;
                        if t < cp {
                            trend + noise(&mut rng)
                        } else {
                            trend + 5.0 + rng.gen_range(-half_width..half_width)
                        }
                    })
                    .collect(),
            );
        }
        SynthKind::MeanShift => {
            columns.push(
                (0..n)
                    .map(|t| noise(&mut rng) + if t < cp { 0.0 } else { 4.0 })
                    .collect(),
            );
        }
        SynthKind::NoiseChangeWithOutlier => {
            let after = Normal::new(2.0, 2f64.sqrt()).expect("valid normal");
            let mut v: Vec<f64> = (0..n)
                .map(|t| if t < cp { noise(&mut rng) } else { after.sample(&mut rng) })
                .collect();
            v[41] = 7.0;
            columns.push(v);
        }
        SynthKind::PeriodicMeanShift => {
            use std::f64::consts::TAU;
            columns.push(
                (0..n)
                    .map(|t| {
                        let x = t as f64;
                        (TAU * x / 12.0).sin()
                            + 0.5 * (TAU * x / 30.0).sin()
                            + 0.25 * (TAU * x / 5.0).cos()
                            + 0.3 * noise(&mut rng)
                            + if t < cp { 0.0 } else { 3.0 }
                    })
                    .collect(),
            );
        }
        SynthKind::PureNoise => {
            columns.push((0..n).map(|_| noise(&mut rng)).collect());
        }
        SynthKind::MultipleMeanShifts => {
            let (a, b) = (spec.truth[0] - 1, spec.truth[1] - 1);
            columns.push(
                (0..n)
                    .map(|t| {
                        let level = if t < a {
                            0.0
                        } else if t < b {
                            3.5
                        } else {
                            -0.5
                        };
                        level + noise(&mut rng)
                    })
                    .collect(),
            );
        }
        SynthKind::VarianceChange => {
            columns.push(
                (0..n)
                    .map(|t| noise(&mut rng) * if t < cp { 1.0 } else { 3.5 })
                    .collect(),
            );
        }
        SynthKind::OutliersAndShift => {
            let mut v: Vec<f64> = (0..n)
                .map(|t| noise(&mut rng) + if t < cp { 0.0 } else { 3.5 })
                .collect();
            v[19] += 7.0;
            v[54] -= 7.0;
            v[119] += 7.0;
            columns.push(v);
        }
        SynthKind::TrendChange => {
            columns.push(
                (0..n)
                    .map(|t| {
                        let slope = if t < cp { 0.0 } else { 0.2 * (t - cp) as f64 };
                        slope + 0.5 * noise(&mut rng)
                    })
                    .collect(),
            );
        }
        SynthKind::RandomWalk => {
            let mut level = 0.0;
            columns.push(
                (0..n)
                    .map(|_| {
                        level += noise(&mut rng);
                        level
                    })
                    .collect(),
            );
        }
        SynthKind::PeriodicityChange => {
            use std::f64::consts::TAU;
            columns.push(
                (0..n)
                    .map(|t| {
                        let period = if t < cp { 8.0 } else { 30.0 };
                        2.0 * (TAU * t as f64 / period).sin() + 0.3 * noise(&mut rng)
                    })
                    .collect(),
            );
        }
        SynthKind::Multidimensional => {
            columns.push((0..n).map(|_| noise(&mut rng)).collect());
            columns.push(
                (0..n)
                    .map(|t| noise(&mut rng) + if t < cp { 0.0 } else { 4.0 })
                    .collect(),
            );
        }
    }
    debug_assert_eq!(columns.len(), spec.dims);

    let series = TimeSeries::from_dense(spec.name, &columns)?;
    let truth = ChangePointSet::new(spec.truth.to_vec(), n)?;
    Ok(Synthetic { series, truth })
}
