use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: follow-up time, event indicator, optional entry time and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    /// Follow-up time `min(event, censoring)`.
    pub time: f64,
    /// `true` when the event was observed, `false` when censored.
    pub status: bool,
    /// Left-truncation (study entry) time. `None` means entry at 0.
    pub entry: Option<f64>,
    pub covariates: Vec<f64>,
}

impl Subject {
    pub fn new(time: f64, status: bool, covariates: Vec<f64>) -> Self {
        Self {
            time,
            status,
            entry: None,
            covariates,
        }
    }

    pub fn with_entry(mut self, entry: f64) -> Self {
        self.entry = Some(entry);
        self
    }

    /// Checks the per-subject invariants. `row` is only used for error reporting.
    pub fn validate(&self, p: usize, row: usize) -> Result<()> {
        let invalid = |message: String| Error::Validation {
            row,
            column: None,
            message,
        };
        if !self.time.is_finite() || self.time < 0.0 {
            return Err(invalid(format!("time must be finite and >= 0, got {}", self.time)));
        }
        if let Some(entry) = self.entry {
            if !entry.is_finite() || entry < 0.0 {
                return Err(invalid(format!("entry must be finite and >= 0, got {entry}")));
            }
            if entry >= self.time {
                return Err(invalid(format!(
                    "entry ({entry}) must be earlier than time ({})",
                    self.time
                )));
            }
        }
        if self.covariates.len() != p {
            return Err(invalid(format!(
                "expected {p} covariates, got {}",
                self.covariates.len()
            )));
        }
        if let Some(k) = self.covariates.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("covariate {k} is not finite")));
        }
        Ok(())
    }
}

/// Column-oriented, immutable-after-load collection of subjects.
///
/// Covariates are stored row-major (`n * p`) so a subject's vector is one
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    names: Vec<String>,
    times: Vec<f64>,
    status: Vec<bool>,
    entries: Option<Vec<f64>>,
    x: Vec<f64>,
    truncated: bool,
}

impl Dataset {
    /// Empty dataset with `p` covariates named `x1..xp`.
    pub fn new(p: usize) -> Self {
        Self::with_names((1..=p).map(|k| format!("x{k}")).collect())
    }

    pub fn with_names(names: Vec<String>) -> Self {
        Self {
            p: names.len(),
            names,
            times: Vec::new(),
            status: Vec::new(),
            entries: None,
            x: Vec::new(),
            truncated: false,
        }
    }

    pub fn from_subjects(names: Vec<String>, subjects: impl IntoIterator<Item = Subject>) -> Result<Self> {
        let mut data = Self::with_names(names);
        for s in subjects {
            data.push(s)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, subject: Subject) -> Result<()> {
        subject.validate(self.p, self.len() + 1)?;
        self.push_unchecked(subject);
        Ok(())
    }

    fn push_unchecked(&mut self, subject: Subject) {
        match (subject.entry, &mut self.entries) {
            (Some(e), Some(entries)) => entries.push(e),
            (Some(e), None) => {
                let mut entries = vec![0.0; self.times.len()];
                entries.push(e);
                self.entries = Some(entries);
            }
            (None, Some(entries)) => entries.push(0.0),
            (None, None) => {}
        }
        if subject.entry.is_some_and(|e| e > 0.0) {
            self.truncated = true;
        }
        self.times.push(subject.time);
        self.status.push(subject.status);
        self.x.extend_from_slice(&subject.covariates);
    }

    /// Removes all subjects, keeping allocations and column metadata.
    pub fn clear(&mut self) {
        self.times.clear();
        self.status.clear();
        self.x.clear();
        self.entries = None;
        self.truncated = false;
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    #[inline]
    pub fn is_event(&self, i: usize) -> bool {
        self.status[i]
    }

    /// Entry time, 0 when the dataset carries no entry column.
    #[inline]
    pub fn entry(&self, i: usize) -> f64 {
        self.entries.as_ref().map_or(0.0, |e| e[i])
    }

    #[inline]
    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn statuses(&self) -> &[bool] {
        &self.status
    }

    /// Whether the dataset has an entry column at all.
    pub fn has_entry(&self) -> bool {
        self.entries.is_some()
    }

    /// Whether any subject enters after time 0.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn subject(&self, i: usize) -> Subject {
        Subject {
            time: self.times[i],
            status: self.status[i],
            entry: self.entries.as_ref().map(|e| e[i]),
            covariates: self.covariates(i).to_vec(),
        }
    }

    pub fn subjects(&self) -> impl Iterator<Item = Subject> + '_ {
        (0..self.len()).map(|i| self.subject(i))
    }

    /// New dataset made of the given rows (repetition allowed, as in a bootstrap resample).
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut out = Dataset::with_names(self.names.clone());
        out.times.reserve(rows.len());
        out.x.reserve(rows.len() * self.p);
        for &i in rows {
            out.push_unchecked(self.subject(i));
        }
        out
    }

    pub fn event_count(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }
}

/// Regression coefficients of the linear predictor `beta' x` (no intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for Coefficients {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Coefficients {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A set of `s >= 2` distinct subject indices evaluated as one partial-likelihood kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumView(Vec<usize>);

impl StratumView {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::Config(format!(
                "stratum needs at least 2 subjects, got {}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Contract(format!("stratum index {bad} out of range for n = {n}")));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("stratum indices must be distinct".into()));
        }
        Ok(Self(indices))
    }

    /// The whole dataset as a single stratum.
    pub fn full(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }
}

/// Handling of tied event times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Tied events share the full risk set.
    #[default]
    Breslow,
    /// Refuse data with tied event times.
    Error,
}

impl std::str::FromStr for TiePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "breslow" => Ok(TiePolicy::Breslow),
            "error" => Ok(TiePolicy::Error),
            other => Err(Error::Config(format!("unknown tie policy '{other}'"))),
        }
    }
}
