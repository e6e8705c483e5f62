//! Synthetic Cox data and experiment grids.
//!
//! Covariates are i.i.d. `Uniform(-sqrt 3, sqrt 3)` (unit variance), event
//! times are exponential with mean `exp(-x' beta*)`, and the status is an
//! independent `Bernoulli(1 - p_c)` draw. The recorded time is the event time
//! whether or not the subject is marked censored.

use std::io::Write;
use std::time::Instant;

use rand_distr::{Bernoulli, Distribution, Exp1, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{bootstrap_ci, plugin_ci, BootstrapConfig, PluginConfig};
use crate::newton::{newton_fit, NewtonConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sgd::{fit_epochs, fit_streaming_epochs, SgdConfig, StreamEpochs};
use crate::survival::{concordance_index, linear_predictor, Coefficients, Dataset, Subject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Censoring probability.
    pub p_c: f64,
    /// True coefficients; empty means all ones.
    pub beta_star: Vec<f64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 10,
            p_c: 0.2,
            beta_star: Vec::new(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn new(n: usize, p: usize, seed: u64) -> Self {
        Self { n, p, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Config("p must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.p_c) {
            return Err(Error::Config(format!("censoring probability must lie in [0, 1), got {}", self.p_c)));
        }
        if !self.beta_star.is_empty() && self.beta_star.len() != self.p {
            return Err(Error::Config(format!(
                "beta_star has {} entries, p = {}",
                self.beta_star.len(),
                self.p
            )));
        }
        if self.beta_star.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("beta_star must be finite".into()));
        }
        Ok(())
    }

    /// The effective `beta*`.
    pub fn truth(&self) -> Vec<f64> {
        if self.beta_star.is_empty() {
            vec![1.0; self.p]
        } else {
            self.beta_star.clone()
        }
    }
}

/// Lazily generated subjects, `n` of them, in the same order as `generate`.
pub fn subjects(config: &SimConfig) -> Result<impl Iterator<Item = Subject>> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let beta = config.truth();
    let root3 = 3f64.sqrt();
    let unif = Uniform::new_inclusive(-root3, root3).map_err(|e| Error::Config(e.to_string()))?;
    let status = Bernoulli::new(1.0 - config.p_c).map_err(|e| Error::Config(e.to_string()))?;
    let p = config.p;
    Ok((0..config.n).map(move |_| {
        let x: Vec<f64> = (0..p).map(|_| unif.sample(&mut rng)).collect();
        let e: f64 = Exp1.sample(&mut rng);
        let t = e * (-linear_predictor(&beta, &x)).exp();
        Subject::new(t, status.sample(&mut rng), x)
    }))
}

pub fn generate(config: &SimConfig) -> Result<Dataset> {
    Dataset::from_subjects(default_names(config.p), subjects(config)?)
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// `||est - truth||^2 / p`.
pub fn mse(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::Contract(format!(
            "mse of vectors with lengths {} and {}",
            est.len(),
            truth.len()
        )));
    }
    let ss: f64 = est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ss / est.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// In-memory multi-epoch SGD.
    Sgd,
    /// Multi-pass streaming SGD over the generated subjects.
    Streaming,
    Newton,
    /// In-memory SGD followed by a plug-in interval.
    SgdPlugin,
    /// In-memory SGD followed by a bootstrap interval.
    SgdBootstrap,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Streaming => "streaming",
            Method::Newton => "newton",
            Method::SgdPlugin => "sgd-plugin",
            Method::SgdBootstrap => "sgd-bootstrap",
        }
    }

    fn uses_strata(self) -> bool {
        self != Method::Newton
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Method::Sgd),
            "streaming" => Ok(Method::Streaming),
            "newton" => Ok(Method::Newton),
            "sgd-plugin" | "plugin" => Ok(Method::SgdPlugin),
            "sgd-bootstrap" | "bootstrap" => Ok(Method::SgdBootstrap),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub ss: Vec<usize>,
    pub replicates: usize,
    pub p_c: f64,
    /// Common value of every entry of `beta*`.
    pub beta_value: f64,
    pub seed: u64,
    /// SGD settings; `strata_size` and `seed` are overridden per cell.
    pub sgd: SgdConfig,
    pub stream: StreamEpochs,
    pub newton: NewtonConfig,
    pub plugin: PluginConfig,
    pub bootstrap: BootstrapConfig,
    pub alpha: f64,
    /// Run replicates concurrently. Turn off for clean timings.
    pub parallel: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Sgd],
            ns: vec![1000],
            ps: vec![10],
            ss: vec![20],
            replicates: 50,
            p_c: 0.2,
            beta_value: 1.0,
            seed: 0,
            sgd: SgdConfig::default(),
            stream: StreamEpochs::default(),
            newton: NewtonConfig::default(),
            plugin: PluginConfig::default(),
            bootstrap: BootstrapConfig {
                resamples: 200,
                ..BootstrapConfig::default()
            },
            alpha: 0.05,
            parallel: true,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.ns.is_empty() || self.ps.is_empty() || self.ss.is_empty() {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        for &s in &self.ss {
            SgdConfig { strata_size: s, ..self.sgd.clone() }.validate()?;
        }
        for &p in &self.ps {
            SimConfig { p, p_c: self.p_c, ..SimConfig::default() }.validate()?;
        }
        Ok(())
    }
}

/// Seeds used by one replicate of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    /// Dataset seed; shared across methods and strata sizes.
    pub data: u64,
    /// Seed for the SGD fit and the interval procedure.
    pub fit: u64,
}

pub fn replicate_seeds(master: u64, n: usize, p: usize, s: usize, replicate: usize) -> ReplicateSeeds {
    let data = derive_seed(derive_seed(derive_seed(master, n as u64), p as u64), replicate as u64);
    ReplicateSeeds {
        data,
        fit: derive_seed(data, 1 + s as u64),
    }
}

/// The dataset a grid uses for `(n, p, replicate)`.
pub fn replicate_dataset(grid: &GridConfig, n: usize, p: usize, replicate: usize) -> Result<Dataset> {
    generate(&SimConfig {
        n,
        p,
        p_c: grid.p_c,
        beta_star: vec![grid.beta_value; p],
        seed: replicate_seeds(grid.seed, n, p, 0, replicate).data,
    })
}

/// One row of the long-format result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    /// Strata size; `None` for Newton.
    pub s: Option<usize>,
    pub replicate: usize,
    pub seed: u64,
    pub ok: bool,
    pub mse: Option<f64>,
    pub concordance: Option<f64>,
    /// Per-coefficient containment of `beta*` (interval methods only).
    pub covered: Option<Vec<bool>>,
    pub wall_seconds: f64,
    pub estimate: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub s: Option<usize>,
    pub runs: usize,
    pub failures: usize,
    pub mse_mean: Option<f64>,
    pub mse_sd: Option<f64>,
    pub concordance_mean: Option<f64>,
    /// Fraction of (replicate, coefficient) intervals containing `beta*`.
    pub coverage: Option<f64>,
    pub wall_seconds_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub config: GridConfig,
    pub mse_definition: String,
}

pub const MSE_DEFINITION: &str = "squared error averaged over the p coefficients";

struct Job {
    method: Method,
    n: usize,
    p: usize,
    s: Option<usize>,
    replicate: usize,
}

fn run_job(grid: &GridConfig, job: &Job, data: &Dataset) -> ExperimentRow {
    let truth = vec![grid.beta_value; job.p];
    let seeds = replicate_seeds(grid.seed, job.n, job.p, job.s.unwrap_or(0), job.replicate);
    let start = Instant::now();
    let outcome = fit_method(grid, job, data, seeds.fit, &truth);
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut row = ExperimentRow {
        method: job.method,
        n: job.n,
        p: job.p,
        s: job.s,
        replicate: job.replicate,
        seed: seeds.fit,
        ok: false,
        mse: None,
        concordance: None,
        covered: None,
        wall_seconds,
        estimate: None,
        error: None,
    };
    match outcome.and_then(|(est, covered)| {
        let m = mse(&est, &truth)?;
        let c = concordance_index(&est, data).ok();
        Ok((est, covered, m, c))
    }) {
        Ok((est, covered, m, c)) => {
            row.ok = true;
            row.mse = Some(m);
            row.concordance = c;
            row.covered = covered;
            row.estimate = Some(est.0);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn fit_method(
    grid: &GridConfig,
    job: &Job,
    data: &Dataset,
    seed: u64,
    truth: &[f64],
) -> Result<(Coefficients, Option<Vec<bool>>)> {
    let sgd = SgdConfig {
        strata_size: job.s.unwrap_or(grid.sgd.strata_size),
        seed,
        ..grid.sgd.clone()
    };
    match job.method {
        Method::Newton => Ok((newton_fit(data, &grid.newton)?.beta, None)),
        Method::Sgd => Ok((fit_epochs(data, &sgd)?.estimate().clone(), None)),
        Method::Streaming => {
            let report = fit_streaming_epochs(|| Ok(data.subjects().map(Ok)), &sgd, grid.stream)?;
            Ok((report.estimate().clone(), None))
        }
        Method::SgdPlugin => {
            let est = fit_epochs(data, &sgd)?.estimate().clone();
            let cfg = PluginConfig {
                strata_size: sgd.strata_size,
                alpha: grid.alpha,
                seed: derive_seed(seed, 1),
                ties: sgd.ties,
                ..grid.plugin.clone()
            };
            let ci = plugin_ci(&est, data, &cfg)?;
            Ok((est, Some(ci.covers(truth))))
        }
        Method::SgdBootstrap => {
            let est = fit_epochs(data, &sgd)?.estimate().clone();
            let cfg = BootstrapConfig {
                alpha: grid.alpha,
                seed: derive_seed(seed, 2),
                ..grid.bootstrap.clone()
            };
            let ci = bootstrap_ci(&est, data, &sgd, &cfg)?;
            Ok((est, Some(ci.covers(truth))))
        }
    }
}

/// Runs every `(n, p, s, replicate, method)` combination. Each replicate
/// draws a fresh dataset shared by all methods and strata sizes of that
/// `(n, p)`. Failed fits become rows with `ok == false`.
pub fn run_grid(grid: &GridConfig) -> Result<ExperimentResult> {
    grid.validate()?;
    let mut units = Vec::new();
    for &n in &grid.ns {
        for &p in &grid.ps {
            for r in 0..grid.replicates {
                units.push((n, p, r));
            }
        }
    }
    let run_unit = |&(n, p, r): &(usize, usize, usize)| -> Vec<ExperimentRow> {
        let data = match replicate_dataset(grid, n, p, r) {
            Ok(d) => d,
            Err(e) => unreachable!("validated grid failed to generate: {e}"),
        };
        let mut rows = Vec::new();
        for &method in &grid.methods {
            let strata: Vec<Option<usize>> = if method.uses_strata() {
                grid.ss.iter().map(|&s| Some(s)).collect()
            } else {
                vec![None]
            };
            for s in strata {
                rows.push(run_job(grid, &Job { method, n, p, s, replicate: r }, &data));
            }
        }
        rows
    };
    let nested: Vec<Vec<ExperimentRow>> = if grid.parallel {
        units.par_iter().map(run_unit).collect()
    } else {
        units.iter().map(run_unit).collect()
    };
    let mut rows: Vec<ExperimentRow> = nested.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.method as u8, r.n, r.p, r.s, r.replicate));
    Ok(ExperimentResult {
        rows,
        config: grid.clone(),
        mse_definition: MSE_DEFINITION.into(),
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sd(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() > 1).then(|| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

impl ExperimentResult {
    pub fn summarize(&self) -> Vec<CellSummary> {
        let mut keys: Vec<(Method, usize, usize, Option<usize>)> =
            self.rows.iter().map(|r| (r.method, r.n, r.p, r.s)).collect();
        keys.dedup();
        keys.into_iter()
            .map(|(method, n, p, s)| {
                let cell: Vec<&ExperimentRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.n == n && r.p == p && r.s == s)
                    .collect();
                let mses: Vec<f64> = cell.iter().filter_map(|r| r.mse).collect();
                let cis: Vec<f64> = cell.iter().filter_map(|r| r.concordance).collect();
                let covered: Vec<bool> = cell.iter().filter_map(|r| r.covered.clone()).flatten().collect();
                let walls: Vec<f64> = cell.iter().map(|r| r.wall_seconds).collect();
                CellSummary {
                    method,
                    n,
                    p,
                    s,
                    runs: cell.len(),
                    failures: cell.iter().filter(|r| !r.ok).count(),
                    mse_mean: mean(&mses),
                    mse_sd: sd(&mses),
                    concordance_mean: mean(&cis),
                    coverage: (!covered.is_empty())
                        .then(|| covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64),
                    wall_seconds_mean: mean(&walls).unwrap_or(0.0),
                }
            })
            .collect()
    }

    /// Long-format CSV, one line per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method", "n", "p", "s", "replicate", "seed", "ok", "mse", "concordance", "covered", "wall_seconds",
            "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.method.as_str().to_string(),
                r.n.to_string(),
                r.p.to_string(),
                r.s.map(|s| s.to_string()).unwrap_or_default(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.ok.to_string(),
                opt(r.mse),
                opt(r.concordance),
                r.covered
                    .as_ref()
                    .map(|c| c.iter().filter(|b| **b).count().to_string())
                    .unwrap_or_default(),
                r.wall_seconds.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON summary: configuration, metric definitions and per-cell aggregates.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "mse_definition": self.mse_definition,
            "coverage_definition": "fraction of (replicate, coefficient) intervals containing beta*",
            "cells": self.summarize(),
        })
    }
}
