//! Cox proportional-hazards regression for data that does not fit in memory.
//!
//! The partial likelihood is split into small random strata; stochastic
//! gradient ascent over strata (with iterate averaging) estimates the
//! coefficients, and a sandwich or bootstrap interval quantifies uncertainty.
//! A Newton solver on the full likelihood serves as the reference.

pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod newton;
pub mod rng;
pub mod sgd;
pub mod simulation;
pub mod survival;

pub use error::{Error, Result};
pub use inference::{bootstrap_ci, plugin_ci, BootstrapConfig, IntervalReport, PluginConfig};
pub use newton::{newton_fit, NewtonConfig, NewtonReport};
pub use sgd::{fit_epochs, fit_streaming, FitReport, Optimizer, SgdConfig};
pub use survival::{concordance_index, Coefficients, Dataset, StratumView, Subject, TiePolicy};
pub use io::{read_dataset, ChunkReader, ColumnSpec};
pub use simulation::{generate, mse, run_grid, GridConfig, SimConfig};
