// SPDX-License-Identifier: MIT OR Apache-2.0

//! Domain types: time series, change point sets, segmentations and
//! annotation databases, plus the JSON file formats they are read from.
//!
//! All locations are 1-based. A change point marks the first observation of
//! a new segment, so location 1 never starts an extra segment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `T x d` series stored column-major, with `None` marking a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    name: String,
    columns: Vec<Vec<Option<f64>>>,
    labels: Vec<String>,
    time_index: Vec<i64>,
}

impl TimeSeries {
    /// Builds a series from per-dimension columns. The time index defaults
    /// to `1..=T`.
    pub fn new(name: impl Into<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let length = columns.first().map_or(0, Vec::len);
        let time_index = (1..=length as i64).collect();
        Self::with_time_index(name, columns, time_index)
    }

    /// Convenience constructor for a fully observed univariate series.
    pub fn univariate(name: impl Into<String>, values: &[f64]) -> Result<Self> {
        Self::new(name, vec![values.iter().copied().map(Some).collect()])
    }

    /// Convenience constructor for a fully observed multivariate series.
    pub fn from_dense(name: impl Into<String>, columns: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            name,
            columns
                .iter()
                .map(|c| c.iter().copied().map(Some).collect())
                .collect(),
        )
    }

    pub fn with_time_index(
        name: impl Into<String>,
        columns: Vec<Vec<Option<f64>>>,
        time_index: Vec<i64>,
    ) -> Result<Self> {
        let name = name.into();
        if columns.is_empty() {
            return Err(Error::InvalidSeries(format!("{name}: no dimensions")));
        }
        let length = columns[0].len();
        if length == 0 {
            return Err(Error::InvalidSeries(format!("{name}: empty series")));
        }
        for (d, col) in columns.iter().enumerate() {
            if col.len() != length {
                return Err(Error::InvalidSeries(format!(
                    "{name}: dimension {d} has {} rows, expected {length}",
                    col.len()
                )));
            }
            if col.iter().all(Option::is_none) {
                return Err(Error::InvalidSeries(format!(
                    "{name}: dimension {d} has no observed values"
                )));
            }
            if col.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSeries(format!(
                    "{name}: dimension {d} has a non-finite value"
                )));
            }
        }
        if time_index.len() != length {
            return Err(Error::InvalidSeries(format!(
                "{name}: time index has {} entries, expected {length}",
                time_index.len()
            )));
        }
        if time_index.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries(format!(
                "{name}: time index is not strictly increasing"
            )));
        }
        let labels = (0..columns.len()).map(|d| format!("V{}", d + 1)).collect();
        Ok(Self {
            name,
            columns,
            labels,
            time_index,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.columns.len() {
            self.labels = labels;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    /// Always false; a valid series has at least one row.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of dimensions `d`.
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn time_index(&self) -> &[i64] {
        &self.time_index
    }

    pub fn column(&self, d: usize) -> &[Option<f64>] {
        &self.columns[d]
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn missing_count(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.iter().filter(|v| v.is_none()).count())
            .sum()
    }

    pub fn has_missing(&self) -> bool {
        self.missing_count() > 0
    }

    /// All columns as dense vectors; fails if any cell is missing.
    pub fn dense_columns(&self) -> Result<Vec<Vec<f64>>> {
        self.columns
            .iter()
            .map(|c| c.iter().copied().collect::<Option<Vec<f64>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::MissingValues)
    }

    /// The single dense column of a univariate series.
    pub fn dense_univariate(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "{}: expected a univariate series, got d = {}",
                self.name,
                self.dim()
            )));
        }
        self.dense_columns().map(|mut c| c.remove(0))
    }

    /// Rescales every dimension to zero mean and unit population variance
    /// over its observed cells. Constant dimensions are only centered.
    pub fn standardize(&self) -> TimeSeries {
        let columns = self.columns.iter().map(|c| standardize_column(c)).collect();
        TimeSeries {
            name: self.name.clone(),
            columns,
            labels: self.labels.clone(),
            time_index: self.time_index.clone(),
        }
    }
}

fn standardize_column(col: &[Option<f64>]) -> Vec<Option<f64>> {
    let observed: Vec<f64> = col.iter().flatten().copied().collect();
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    // Relative threshold: a dimension that is constant up to rounding noise
    // must not be blown up by 1/sd.
    let scale = observed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let constant = sd <= f64::EPSILON * scale.max(1.0) * 8.0;
    col.iter()
        .map(|v| {
            v.map(|x| {
                if constant {
                    0.0
                } else {
                    (x - mean) / sd
                }
            })
        })
        .collect()
}

/// Sorted, duplicate-free, 1-based change point locations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ChangePointSet(Vec<usize>);

impl ChangePointSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Normalizes (sorts, dedups) the locations and checks they lie in `[1, T]`.
    pub fn new(mut locations: Vec<usize>, length: usize) -> Result<Self> {
        locations.sort_unstable();
        locations.dedup();
        if let Some(&bad) = locations.iter().find(|&&l| l == 0 || l > length) {
            return Err(Error::OutOfRange {
                location: bad,
                length,
            });
        }
        Ok(Self(locations))
    }

    /// Like [`ChangePointSet::new`] without an upper bound; used where the
    /// series length is not yet known (annotation files).
    pub fn from_locations(mut locations: Vec<usize>) -> Result<Self> {
        locations.sort_unstable();
        locations.dedup();
        if locations.first() == Some(&0) {
            return Err(Error::invalid_input("change point location 0 is invalid"));
        }
        Ok(Self(locations))
    }

    pub(crate) fn from_sorted(locations: Vec<usize>) -> Self {
        debug_assert!(locations.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(locations.first() != Some(&0));
        Self(locations)
    }

    pub fn locations(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn check_length(&self, length: usize) -> Result<()> {
        match self.0.last() {
            Some(&l) if l > length => Err(Error::OutOfRange {
                location: l,
                length,
            }),
            _ => Ok(()),
        }
    }

    /// Copy of the set with the trivial change point 1 included.
    pub fn with_origin(&self) -> Self {
        if self.0.first() == Some(&1) {
            return self.clone();
        }
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(1);
        v.extend_from_slice(&self.0);
        Self(v)
    }

    pub fn to_partition(&self, length: usize) -> Result<Segmentation> {
        Segmentation::from_change_points(self, length)
    }
}

impl<'de> Deserialize<'de> for ChangePointSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        ChangePointSet::from_locations(v).map_err(serde::de::Error::custom)
    }
}

/// A partition of `[1, T]` into contiguous, inclusive segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    length: usize,
    segments: Vec<(usize, usize)>,
}

impl Segmentation {
    pub fn from_change_points(cps: &ChangePointSet, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid_input("segmentation of an empty range"));
        }
        cps.check_length(length)?;
        let mut segments = Vec::with_capacity(cps.len() + 1);
        let mut start = 1;
        for &cp in cps.locations().iter().filter(|&&l| l > 1) {
            segments.push((start, cp - 1));
            start = cp;
        }
        segments.push((start, length));
        Ok(Self { length, segments })
    }

    /// Builds a partition from explicit inclusive segments, checking that
    /// they tile `[1, T]`.
    pub fn from_segments(segments: Vec<(usize, usize)>) -> Result<Self> {
        let mut expected = 1;
        for &(a, b) in &segments {
            if a != expected || b < a {
                return Err(Error::invalid_input(format!(
                    "segment [{a}, {b}] does not continue from {expected}"
                )));
            }
            expected = b + 1;
        }
        if segments.is_empty() {
            return Err(Error::invalid_input("no segments"));
        }
        Ok(Self {
            length: expected - 1,
            segments,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn segments(&self) -> &[(usize, usize)] {
        &self.segments
    }

    /// The change points implied by this partition (segment starts except 1).
    pub fn boundaries(&self) -> ChangePointSet {
        ChangePointSet::from_sorted(self.segments.iter().skip(1).map(|s| s.0).collect())
    }
}

/// How integer locations in an annotation file are numbered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IndexBase {
    Zero,
    #[default]
    One,
}

/// Per-series map from annotator id to that annotator's change points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationDb(BTreeMap<String, BTreeMap<String, ChangePointSet>>);

impl AnnotationDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str, base: IndexBase) -> Result<Self> {
        let raw: BTreeMap<String, BTreeMap<String, Vec<i64>>> =
            serde_json::from_str(text).map_err(|e| Error::parse("annotation file", e))?;
        let offset = match base {
            IndexBase::Zero => 1,
            IndexBase::One => 0,
        };
        let mut db = BTreeMap::new();
        for (series, annotators) in raw {
            let mut entry = BTreeMap::new();
            for (annotator, locs) in annotators {
                let locs = locs
                    .into_iter()
                    .map(|l| {
                        let shifted = l + offset;
                        usize::try_from(shifted).ok().filter(|&v| v >= 1).ok_or_else(|| {
                            Error::invalid_input(format!(
                                "{series}/{annotator}: location {l} invalid for the chosen index base"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                entry.insert(annotator, ChangePointSet::from_locations(locs)?);
            }
            db.insert(series, entry);
        }
        Ok(Self(db))
    }

    pub fn load(path: impl AsRef<Path>, base: IndexBase) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("annotation db serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn insert(&mut self, series: &str, annotator: &str, cps: ChangePointSet) {
        self.0
            .entry(series.to_owned())
            .or_default()
            .insert(annotator.to_owned(), cps);
    }

    pub fn series(&self, name: &str) -> Option<&BTreeMap<String, ChangePointSet>> {
        self.0.get(name)
    }

    /// The annotations for a series in annotator-id order.
    pub fn annotations(&self, name: &str) -> Option<Vec<ChangePointSet>> {
        self.0.get(name).map(|m| m.values().cloned().collect())
    }

    pub fn series_names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, ChangePointSet>)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn merge(&mut self, other: AnnotationDb) {
        for (series, annotators) in other.0 {
            self.0.entry(series).or_default().extend(annotators);
        }
    }

    /// Checks every annotation of `series` against its length.
    pub fn validate_series(&self, series: &str, length: usize) -> Result<()> {
        if let Some(entry) = self.0.get(series) {
            for cps in entry.values() {
                cps.check_length(length)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    longname: Option<String>,
    n_obs: usize,
    n_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<TimeField>,
    series: Vec<SeriesField>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TimeField {
    index: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesField {
    #[serde(default)]
    label: Option<String>,
    raw: Vec<Option<f64>>,
}

/// Parses a dataset JSON document.
pub fn parse_dataset(text: &str) -> Result<TimeSeries> {
    let file: DatasetFile =
        serde_json::from_str(text).map_err(|e| Error::parse("dataset file", e))?;
    if file.n_obs == 0 {
        return Err(Error::InvalidSeries(format!("{}: empty series", file.name)));
    }
    if file.series.len() != file.n_dim {
        return Err(Error::LengthMismatch {
            expected: file.n_dim,
            actual: file.series.len(),
        });
    }
    for s in &file.series {
        if s.raw.len() != file.n_obs {
            return Err(Error::LengthMismatch {
                expected: file.n_obs,
                actual: s.raw.len(),
            });
        }
    }
    let labels: Vec<String> = file
        .series
        .iter()
        .enumerate()
        .map(|(d, s)| s.label.clone().unwrap_or_else(|| format!("V{}", d + 1)))
        .collect();
    let columns = file.series.into_iter().map(|s| s.raw).collect();
    let ts = match file.time {
        Some(t) => TimeSeries::with_time_index(file.name, columns, t.index)?,
        None => TimeSeries::new(file.name, columns)?,
    };
    Ok(ts.with_labels(labels))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Serializes a series in the dataset schema, with a 1-based time index.
pub fn dataset_to_json(series: &TimeSeries) -> String {
    let file = DatasetFile {
        name: series.name.clone(),
        longname: None,
        n_obs: series.len(),
        n_dim: series.dim(),
        time: Some(TimeField {
            index: series.time_index.clone(),
        }),
        series: series
            .columns
            .iter()
            .zip(&series.labels)
            .map(|(c, l)| SeriesField {
                label: Some(l.clone()),
                raw: c.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("dataset serializes")
}

pub fn save_dataset(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_json(series)).map_err(|e| Error::io(path, e))
}

/// Loads every `*.json` dataset in a directory, sorted by series name.
pub fn load_dataset_dir(dir: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = paths
        .iter()
        .map(load_dataset)
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
