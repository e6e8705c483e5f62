use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optimizer::{sgd_step, update_average, OptimizerState, SgdConfig};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::survival::{Coefficients, Dataset, KernelEvaluator, StratumView, Subject};

/// Disjoint strata of size `s` cut from a random permutation of `0..n`.
/// The `n mod s` trailing indices of the permutation are left unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrataPartition {
    perm: Vec<usize>,
    s: usize,
}

impl StrataPartition {
    pub fn strata_size(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.perm.len() / self.s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stratum(&self, k: usize) -> &[usize] {
        &self.perm[k * self.s..(k + 1) * self.s]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.perm.chunks_exact(self.s)
    }

    pub fn views(&self) -> Vec<StratumView> {
        let n = self.perm.len();
        self.iter()
            .map(|ix| StratumView::new(ix.to_vec(), n).expect("partition strata are valid"))
            .collect()
    }

    /// Indices dropped for this partition.
    pub fn leftover(&self) -> &[usize] {
        &self.perm[self.len() * self.s..]
    }

    /// The strata concatenated, leftover excluded.
    pub fn ordered_indices(&self) -> &[usize] {
        &self.perm[..self.len() * self.s]
    }
}

pub fn partition_strata(n: usize, s: usize, seed: u64) -> Result<StrataPartition> {
    partition_with(n, s, &mut rng_from_seed(seed))
}

pub(crate) fn partition_with(n: usize, s: usize, rng: &mut Rng) -> Result<StrataPartition> {
    if s < 2 {
        return Err(Error::Config(format!("strata size must be >= 2, got {s}")));
    }
    if n < s {
        return Err(Error::Config(format!(
            "need at least s = {s} subjects, got n = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    Ok(StrataPartition { perm, s })
}

/// Outcome of an SGD fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Last iterate.
    pub beta_hat: Coefficients,
    /// Running average of the iterates.
    pub beta_tilde: Coefficients,
    /// Optimizer steps taken (`m`).
    pub iterations: u64,
    pub epochs: usize,
    /// Strata whose gradients were used.
    pub strata_used: u64,
    pub subjects_seen: u64,
    /// Streaming only: subjects of a trailing incomplete stratum.
    pub discarded_subjects: u64,
    /// Largest number of subjects held in memory at once.
    pub peak_buffered_subjects: usize,
    /// Infinity norm of the last batch-mean gradient.
    pub last_gradient_norm: f64,
    pub elapsed_seconds: f64,
    pub config: SgdConfig,
}

impl FitReport {
    /// `beta_tilde` when averaging is on, `beta_hat` otherwise.
    pub fn estimate(&self) -> &Coefficients {
        if self.config.average_iterates {
            &self.beta_tilde
        } else {
            &self.beta_hat
        }
    }

    /// Equality of everything but wall-clock time.
    pub fn same_result(&self, other: &FitReport) -> bool {
        let mut a = self.clone();
        a.elapsed_seconds = other.elapsed_seconds;
        a == *other
    }
}

/// Sums stratum gradients of one batch, then takes one step on their mean.
struct Stepper {
    eval: KernelEvaluator,
    grad: Vec<f64>,
    state: OptimizerState,
    strata_used: u64,
    last_gradient_norm: f64,
}

impl Stepper {
    fn new(init: Coefficients, config: &SgdConfig) -> Self {
        let p = init.len();
        Self {
            eval: KernelEvaluator::new(p, config.ties),
            grad: vec![0.0; p],
            state: OptimizerState::warm(init),
            strata_used: 0,
            last_gradient_norm: 0.0,
        }
    }

    fn step<'a>(
        &mut self,
        data: &Dataset,
        strata: impl Iterator<Item = &'a [usize]>,
        config: &SgdConfig,
    ) -> Result<()> {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut k = 0usize;
        for stratum in strata {
            self.eval
                .evaluate(&self.state.beta_hat, stratum, data, false)?;
            let g = self.eval.gradient();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    step: self.state.m + 1,
                    stratum: stratum.to_vec(),
                });
            }
            for (acc, v) in self.grad.iter_mut().zip(g) {
                *acc += v;
            }
            k += 1;
        }
        if k == 0 {
            return Ok(());
        }
        let inv = 1.0 / k as f64;
        self.grad.iter_mut().for_each(|g| *g *= inv);
        sgd_step(&mut self.state, &self.grad, config)?;
        if config.average_iterates {
            update_average(&mut self.state);
        } else {
            self.state.beta_tilde = self.state.beta_hat.clone();
        }
        self.strata_used += k as u64;
        self.last_gradient_norm = self.grad.iter().fold(0.0, |m, g| m.max(g.abs()));
        Ok(())
    }
}

/// Multi-epoch mini-batch SGD from `beta = 0`.
pub fn fit_epochs(data: &Dataset, config: &SgdConfig) -> Result<FitReport> {
    fit_epochs_from(data, config, Coefficients::zeros(data.p()))
}

/// Multi-epoch mini-batch SGD starting at `init`. The step counter and
/// optimizer moments start fresh.
///
/// Each epoch draws a new random partition; consecutive groups of `K` strata
/// form the batches, the last batch possibly smaller.
pub fn fit_epochs_from(data: &Dataset, config: &SgdConfig, init: Coefficients) -> Result<FitReport> {
    config.validate()?;
    if init.len() != data.p() {
        return Err(Error::Contract(format!(
            "initial beta has {} entries, data has p = {}",
            init.len(),
            data.p()
        )));
    }
    let start = Instant::now();
    let n = data.len();
    let s = config.strata_size;
    let mut rng = rng_from_seed(config.seed);
    let mut stepper = Stepper::new(init, config);
    let mut seen = 0u64;
    for _ in 0..config.epochs {
        let partition = partition_with(n, s, &mut rng)?;
        let strata: Vec<&[usize]> = partition.iter().collect();
        for batch in strata.chunks(config.batch_size) {
            stepper.step(data, batch.iter().copied(), config)?;
        }
        seen += (partition.len() * s) as u64;
    }
    Ok(FitReport {
        beta_hat: stepper.state.beta_hat,
        beta_tilde: stepper.state.beta_tilde,
        iterations: stepper.state.m,
        epochs: config.epochs,
        strata_used: stepper.strata_used,
        subjects_seen: seen,
        discarded_subjects: 0,
        peak_buffered_subjects: n,
        last_gradient_norm: stepper.last_gradient_norm,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        config: config.clone(),
    })
}

/// Consumes a subject stream in bounded memory.
struct StreamRunner {
    stepper: Option<Stepper>,
    buffer: Dataset,
    capacity: usize,
    shuffle: Option<Rng>,
    peak: usize,
    seen: u64,
    discarded: u64,
    init: Option<Coefficients>,
}

impl StreamRunner {
    fn new(capacity: usize, shuffle: Option<Rng>, init: Option<Coefficients>) -> Self {
        Self {
            stepper: None,
            buffer: Dataset::new(0),
            capacity,
            shuffle,
            peak: 0,
            seen: 0,
            discarded: 0,
            init,
        }
    }

    fn feed(&mut self, subject: Subject, config: &SgdConfig) -> Result<()> {
        if self.stepper.is_none() {
            let p = subject.covariates.len();
            let init = self.init.take().unwrap_or_else(|| Coefficients::zeros(p));
            if init.len() != p {
                return Err(Error::Contract(format!(
                    "initial beta has {} entries, stream has p = {p}",
                    init.len()
                )));
            }
            self.buffer = Dataset::new(p);
            self.stepper = Some(Stepper::new(init, config));
        }
        let row = self.seen as usize + 1;
        self.buffer.push(subject).map_err(|e| match e {
            Error::Validation { column, message, .. } => Error::Validation { row, column, message },
            other => other,
        })?;
        self.seen += 1;
        self.peak = self.peak.max(self.buffer.len());
        if self.buffer.len() == self.capacity {
            self.drain(config)?;
        }
        Ok(())
    }

    /// Steps on every complete stratum in the buffer, then empties it.
    fn drain(&mut self, config: &SgdConfig) -> Result<()> {
        let Some(stepper) = self.stepper.as_mut() else {
            return Ok(());
        };
        let s = config.strata_size;
        let n = self.buffer.len();
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(rng) = self.shuffle.as_mut() {
            order.shuffle(rng);
        }
        let complete = n / s * s;
        let strata: Vec<&[usize]> = order[..complete].chunks_exact(s).collect();
        for batch in strata.chunks(config.batch_size) {
            stepper.step(&self.buffer, batch.iter().copied(), config)?;
        }
        self.discarded += (n - complete) as u64;
        self.buffer.clear();
        Ok(())
    }

    fn finish(self, config: &SgdConfig, epochs: usize, start: Instant) -> Result<FitReport> {
        let Some(stepper) = self.stepper else {
            return Err(Error::Config(format!(
                "need at least s = {} subjects, got an empty stream",
                config.strata_size
            )));
        };
        if stepper.state.m == 0 {
            return Err(Error::Config(format!(
                "need at least s = {} subjects, stream had {}",
                config.strata_size, self.seen
            )));
        }
        Ok(FitReport {
            beta_hat: stepper.state.beta_hat,
            beta_tilde: stepper.state.beta_tilde,
            iterations: stepper.state.m,
            epochs,
            strata_used: stepper.strata_used,
            subjects_seen: self.seen,
            discarded_subjects: self.discarded,
            peak_buffered_subjects: self.peak,
            last_gradient_norm: stepper.last_gradient_norm,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            config: config.clone(),
        })
    }
}

/// Single streaming pass: strata are consecutive runs of `s` subjects in
/// arrival order, one step per batch of `K` strata. At most `s * K` subjects
/// are held at once. A trailing incomplete stratum is discarded and counted.
pub fn fit_streaming<I>(source: I, config: &SgdConfig) -> Result<FitReport>
where
    I: IntoIterator<Item = Result<Subject>>,
{
    config.validate()?;
    let start = Instant::now();
    let mut runner = StreamRunner::new(config.strata_size * config.batch_size, None, None);
    for subject in source {
        runner.feed(subject?, config)?;
    }
    runner.drain(config)?;
    runner.finish(config, 1, start)
}

/// Options for repeated streaming passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEpochs {
    /// Subjects buffered and shuffled together before being cut into strata.
    /// Rounded up to a multiple of `s * K`.
    pub shuffle_window: usize,
}

impl Default for StreamEpochs {
    fn default() -> Self {
        Self { shuffle_window: 65536 }
    }
}

/// `config.epochs` streaming passes over a re-openable source. Within each
/// pass, windows of subjects are shuffled before being cut into strata, so
/// memory stays bounded by the window while strata differ between passes.
/// The step counter and running average carry over across passes.
pub fn fit_streaming_epochs<F, I>(mut open: F, config: &SgdConfig, opts: StreamEpochs) -> Result<FitReport>
where
    F: FnMut() -> Result<I>,
    I: IntoIterator<Item = Result<Subject>>,
{
    config.validate()?;
    let start = Instant::now();
    let unit = config.strata_size * config.batch_size;
    let capacity = opts.shuffle_window.max(1).div_ceil(unit) * unit;
    let mut runner = StreamRunner::new(capacity, Some(rng_from_seed(config.seed)), None);
    for _ in 0..config.epochs {
        for subject in open()? {
            runner.feed(subject?, config)?;
        }
        runner.drain(config)?;
    }
    runner.finish(config, config.epochs, start)
}
