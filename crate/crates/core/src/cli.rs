//! Command-line front end: `fit`, `newton`, `ci`, `simulate` and `bench`.
//!
//! Results are JSON documents carrying `schema_version`, the effective
//! configuration and the seed. Failures print an error document to stderr
//! and exit with 2 for usage problems or 1 otherwise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::inference::{bootstrap_ci, plugin_ci, BootstrapConfig, PluginConfig};
use crate::io::{read_dataset, write_subjects, ChunkReader, ColumnSpec, DEFAULT_CHUNK_SIZE};
use crate::newton::{newton_fit, NewtonConfig};
use crate::sgd::{fit_epochs, fit_streaming_epochs, FitReport, Optimizer, SgdConfig, StreamEpochs};
use crate::simulation::{default_names, run_grid, subjects, GridConfig, Method, SimConfig};
use crate::survival::{concordance_index, Coefficients, TiePolicy};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "BIGSURV_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bigsurv", version, about = "Cox regression by strata-based stochastic gradient descent")]
pub struct Cli {
    /// Worker threads (defaults to $BIGSURV_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit coefficients by SGD.
    Fit(FitArgs),
    /// Fit the full partial likelihood by Newton-Raphson.
    Newton(NewtonArgs),
    /// Confidence intervals around an SGD estimate.
    Ci(CiArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Run a simulation grid.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
    #[arg(long)]
    pub entry_col: Option<String>,
    /// Comma-separated covariate columns (default: all remaining).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
}

impl DataArgs {
    fn spec(&self) -> ColumnSpec {
        ColumnSpec {
            time_col: self.time_col.clone(),
            status_col: self.status_col.clone(),
            entry_col: self.entry_col.clone(),
            covariate_cols: self.covariates.clone(),
        }
    }

    fn echo(&self) -> Value {
        json!({ "path": self.data, "columns": self.spec(), "chunk_size": self.chunk_size })
    }
}

#[derive(Debug, Args)]
pub struct SgdArgs {
    #[arg(long, default_value_t = 20)]
    pub strata_size: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.12)]
    pub lr_const: f64,
    /// `amsgrad` or `plain`.
    #[arg(long, default_value = "amsgrad")]
    pub optimizer: String,
    /// Report the last iterate instead of the running average.
    #[arg(long)]
    pub no_average: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `breslow` or `error`.
    #[arg(long, default_value = "breslow")]
    pub ties: String,
}

impl SgdArgs {
    fn config(&self) -> Result<SgdConfig, Error> {
        let cfg = SgdConfig {
            strata_size: self.strata_size,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr_const: self.lr_const,
            optimizer: self.optimizer.parse::<Optimizer>()?,
            average_iterates: !self.no_average,
            seed: self.seed,
            ties: self.ties.parse::<TiePolicy>()?,
            ..SgdConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sgd: SgdArgs,
    /// Read the file in chunks instead of loading it.
    #[arg(long)]
    pub streaming: bool,
    /// Subjects shuffled together per window when streaming.
    #[arg(long, default_value_t = 65536)]
    pub shuffle_window: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NewtonArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub no_step_halving: bool,
    /// Iterate on standardized covariates.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value = "breslow")]
    pub ties: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sgd: SgdArgs,
    /// `plugin` or `bootstrap`.
    #[arg(long, default_value = "plugin")]
    pub method: String,
    #[arg(long, default_value_t = 1000)]
    pub n_strata_per_obs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    /// Epochs per bootstrap refit.
    #[arg(long, default_value_t = 100)]
    pub boot_epochs: usize,
    /// Comma-separated estimate to use instead of fitting.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0.2)]
    pub pc: f64,
    /// Comma-separated `beta*` (default all ones).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated: sgd, streaming, newton, sgd-plugin, sgd-bootstrap.
    #[arg(long, value_delimiter = ',', default_value = "sgd")]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub ps: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub ss: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.2)]
    pub pc: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_value: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.12)]
    pub lr_const: f64,
    #[arg(long, default_value = "amsgrad")]
    pub optimizer: String,
    #[arg(long, default_value_t = 1000)]
    pub n_strata_per_obs: usize,
    #[arg(long, default_value_t = 200)]
    pub resamples: usize,
    #[arg(long, default_value_t = 100)]
    pub boot_epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Run replicates one at a time.
    #[arg(long)]
    pub serial: bool,
    /// Long-format result table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary (stdout when omitted).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Failure of a CLI invocation.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Run(e) => (e.kind(), e.to_string()),
        };
        json!({ "schema_version": SCHEMA_VERSION, "error": { "kind": kind, "message": message } })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn usage<T>(r: Result<T, Error>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("thread count must be >= 1".into()));
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Newton(a) => cmd_newton(a),
        Command::Ci(a) => cmd_ci(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn emit(value: &impl Serialize, path: Option<&PathBuf>) -> Result<(), CliError> {
    let run = || -> Result<(), Error> {
        match path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                serde_json::to_writer_pretty(&mut w, value)?;
                writeln!(w)?;
                w.flush()?;
            }
            None => {
                let stdout = std::io::stdout();
                let mut w = stdout.lock();
                serde_json::to_writer_pretty(&mut w, value)?;
                writeln!(w)?;
            }
        }
        Ok(())
    };
    Ok(run()?)
}

/// Peak resident set size of this process in kB (Linux only).
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

fn coefficient_table(names: &[String], report: &FitReport) -> Vec<Value> {
    let est = report.estimate();
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            json!({
                "name": name,
                "estimate": est[k],
                "hazard_ratio": est[k].exp(),
                "beta_tilde": report.beta_tilde[k],
                "beta_hat": report.beta_hat[k],
            })
        })
        .collect()
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let cfg = usage(a.sgd.config())?;
    if a.data.chunk_size == 0 || a.shuffle_window == 0 {
        return Err(CliError::Usage("chunk size and shuffle window must be >= 1".into()));
    }
    let spec = a.data.spec();
    let (names, report, n, concordance) = if a.streaming {
        let reader = ChunkReader::new(&a.data.data, spec).with_chunk_size(a.data.chunk_size);
        let names = reader.stream()?.covariate_names().to_vec();
        let opts = StreamEpochs {
            shuffle_window: a.shuffle_window,
        };
        let report = fit_streaming_epochs(|| reader.stream(), &cfg, opts)?;
        let n = report.subjects_seen / report.epochs as u64;
        (names, report, n as usize, None)
    } else {
        let data = read_dataset(&a.data.data, &spec)?;
        let report = fit_epochs(&data, &cfg)?;
        let c = concordance_index(report.estimate(), &data).ok();
        (data.names().to_vec(), report, data.len(), c)
    };
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "mode": if a.streaming { "streaming" } else { "in-memory" },
        "data": a.data.echo(),
        "n": n,
        "seed": cfg.seed,
        "coefficients": coefficient_table(&names, &report),
        "beta_tilde": report.beta_tilde,
        "beta_hat": report.beta_hat,
        "concordance": concordance,
        "shuffle_window": a.streaming.then_some(a.shuffle_window),
        "report": report,
        "peak_rss_kb": peak_rss_kb(),
    });
    emit(&out, a.output.as_ref())
}

fn cmd_newton(a: NewtonArgs) -> Result<(), CliError> {
    let cfg = NewtonConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        step_halving: !a.no_step_halving,
        standardize: a.standardize,
        ties: usage(a.ties.parse())?,
        ..NewtonConfig::default()
    };
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(CliError::Usage("tol must be > 0 and max-iter >= 1".into()));
    }
    let data = read_dataset(&a.data.data, &a.data.spec())?;
    let report = newton_fit(&data, &cfg)?;
    let concordance = concordance_index(&report.beta, &data).ok();
    let coefficients: Vec<Value> = data
        .names()
        .iter()
        .enumerate()
        .map(|(k, name)| {
            json!({
                "name": name,
                "estimate": report.beta[k],
                "hazard_ratio": report.beta[k].exp(),
                "se": report.standard_errors.get(k),
            })
        })
        .collect();
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "newton",
        "data": a.data.echo(),
        "n": data.len(),
        "coefficients": coefficients,
        "concordance": concordance,
        "report": report,
    });
    emit(&out, a.output.as_ref())
}

fn cmd_ci(a: CiArgs) -> Result<(), CliError> {
    let sgd = usage(a.sgd.config())?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let plugin = a.method == "plugin";
    if !plugin && a.method != "bootstrap" {
        return Err(CliError::Usage(format!("unknown interval method '{}'", a.method)));
    }
    if plugin && a.n_strata_per_obs == 0 {
        return Err(CliError::Usage("n-strata-per-obs must be >= 1".into()));
    }
    if !plugin && (a.resamples < 2 || a.boot_epochs == 0) {
        return Err(CliError::Usage("need resamples >= 2 and boot-epochs >= 1".into()));
    }
    let data = read_dataset(&a.data.data, &a.data.spec())?;
    let (beta, fit) = match &a.beta {
        Some(b) => {
            if b.len() != data.p() {
                return Err(CliError::Usage(format!("--beta has {} entries, data has p = {}", b.len(), data.p())));
            }
            (Coefficients(b.clone()), None)
        }
        None => {
            let r = fit_epochs(&data, &sgd)?;
            (r.estimate().clone(), Some(r))
        }
    };
    let report = if plugin {
        plugin_ci(
            &beta,
            &data,
            &PluginConfig {
                strata_per_obs: a.n_strata_per_obs,
                strata_size: sgd.strata_size,
                alpha: a.alpha,
                seed: sgd.seed,
                ties: sgd.ties,
            },
        )?
    } else {
        bootstrap_ci(
            &beta,
            &data,
            &sgd,
            &BootstrapConfig {
                resamples: a.resamples,
                alpha: a.alpha,
                epochs: a.boot_epochs,
                seed: sgd.seed,
            },
        )?
    };
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "ci",
        "data": a.data.echo(),
        "n": data.len(),
        "seed": sgd.seed,
        "sgd": sgd,
        "estimate": beta,
        "fit": fit,
        "interval": report,
    });
    emit(&out, a.output.as_ref())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cfg = SimConfig {
        n: a.n,
        p: a.p,
        p_c: a.pc,
        beta_star: a.beta.clone().unwrap_or_default(),
        seed: a.seed,
    };
    usage(cfg.validate())?;
    let names = default_names(cfg.p);
    let iter = subjects(&cfg)?;
    let run = || -> Result<(), Error> {
        match &a.output {
            Some(p) => write_subjects(&names, iter, BufWriter::new(File::create(p)?))?,
            None => write_subjects(&names, iter, std::io::stdout().lock())?,
        };
        Ok(())
    };
    Ok(run()?)
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let methods = usage(a.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>, _>>())?;
    let sgd = SgdConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        lr_const: a.lr_const,
        optimizer: usage(a.optimizer.parse())?,
        ..SgdConfig::default()
    };
    let grid = GridConfig {
        methods,
        ns: a.ns,
        ps: a.ps,
        ss: a.ss,
        replicates: a.replicates,
        p_c: a.pc,
        beta_value: a.beta_value,
        seed: a.seed,
        sgd,
        plugin: PluginConfig {
            strata_per_obs: a.n_strata_per_obs,
            ..PluginConfig::default()
        },
        bootstrap: BootstrapConfig {
            resamples: a.resamples,
            epochs: a.boot_epochs,
            ..BootstrapConfig::default()
        },
        alpha: a.alpha,
        parallel: !a.serial,
        ..GridConfig::default()
    };
    usage(grid.validate())?;
    let result = run_grid(&grid)?;
    if let Some(p) = &a.csv {
        result.write_csv(BufWriter::new(File::create(p).map_err(Error::from)?))?;
    }
    let mut summary = result.summary_json();
    summary["schema_version"] = json!(SCHEMA_VERSION);
    summary["command"] = json!("bench");
    emit(&summary, a.json.as_ref())
}

