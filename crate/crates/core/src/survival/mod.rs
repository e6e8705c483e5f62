//! Domain types and exact numerical kernels of the Cox partial likelihood.

mod concordance;
mod data;
mod kernel;

pub use concordance::concordance_index;
pub use data::{Coefficients, Dataset, StratumView, Subject, TiePolicy};
pub use kernel::{
    linear_predictor, pairwise_loss, risk_set, stratum_gradient, stratum_hessian, stratum_kernel,
    stratum_loglik, KernelEvaluator, StratumKernel,
};
