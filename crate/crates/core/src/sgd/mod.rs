//! Strata-based stochastic gradient ascent on the partial likelihood.

mod fit;
mod optimizer;

pub use fit::{
    fit_epochs, fit_epochs_from, fit_streaming, fit_streaming_epochs, partition_strata, FitReport,
    StrataPartition, StreamEpochs,
};
pub use optimizer::{sgd_step, update_average, Optimizer, OptimizerState, SgdConfig};
