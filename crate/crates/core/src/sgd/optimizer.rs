use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{Coefficients, TiePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `beta += gamma_m * grad`.
    Plain,
    /// AMSGrad without bias correction, scaled by `gamma_m`.
    #[default]
    Amsgrad,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "sgd" => Ok(Optimizer::Plain),
            "amsgrad" => Ok(Optimizer::Amsgrad),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub strata_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// `C` in `gamma_m = C / sqrt(m)`.
    pub lr_const: f64,
    pub optimizer: Optimizer,
    pub average_iterates: bool,
    pub seed: u64,
    pub amsgrad_beta1: f64,
    pub amsgrad_beta2: f64,
    pub amsgrad_eps: f64,
    pub ties: TiePolicy,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            strata_size: 20,
            batch_size: 1,
            epochs: 100,
            lr_const: 0.12,
            optimizer: Optimizer::Amsgrad,
            average_iterates: true,
            seed: 0,
            amsgrad_beta1: 0.9,
            amsgrad_beta2: 0.999,
            amsgrad_eps: 1e-8,
            ties: TiePolicy::Breslow,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.strata_size < 2 {
            return bad(format!("strata size must be >= 2, got {}", self.strata_size));
        }
        if self.batch_size < 1 {
            return bad("batch size must be >= 1".into());
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr_const.is_finite() && self.lr_const > 0.0) {
            return bad(format!("learning-rate constant must be > 0, got {}", self.lr_const));
        }
        for (name, v) in [("beta1", self.amsgrad_beta1), ("beta2", self.amsgrad_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("AMSGrad {name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.amsgrad_eps.is_finite() && self.amsgrad_eps >= 0.0) {
            return bad("AMSGrad eps must be >= 0".into());
        }
        Ok(())
    }

    /// `gamma_m = C / sqrt(m)`, `m >= 1`.
    pub fn learning_rate(&self, m: u64) -> f64 {
        self.lr_const / (m as f64).sqrt()
    }
}

/// Iterate, running average and AMSGrad moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Number of steps taken.
    pub m: u64,
    pub beta_hat: Coefficients,
    /// Arithmetic mean of `beta_hat` over steps `1..=m`.
    pub beta_tilde: Coefficients,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub second_moment_max: Vec<f64>,
}

impl OptimizerState {
    /// Fresh state at `beta = 0`.
    pub fn new(p: usize) -> Self {
        Self::warm(Coefficients::zeros(p))
    }

    /// Fresh state (step counter and moments reset) starting at `init`.
    pub fn warm(init: Coefficients) -> Self {
        let p = init.len();
        Self {
            m: 0,
            beta_tilde: init.clone(),
            beta_hat: init,
            first_moment: vec![0.0; p],
            second_moment: vec![0.0; p],
            second_moment_max: vec![0.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }
}

/// One ascent step on `pl` with the (batch-mean) gradient `grad`.
pub fn sgd_step(state: &mut OptimizerState, grad: &[f64], config: &SgdConfig) -> Result<()> {
    if grad.len() != state.p() {
        return Err(Error::Contract(format!(
            "gradient has {} entries, state has {}",
            grad.len(),
            state.p()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            step: state.m + 1,
            stratum: Vec::new(),
        });
    }
    state.m += 1;
    let gamma = config.learning_rate(state.m);
    match config.optimizer {
        Optimizer::Plain => {
            for (b, g) in state.beta_hat.iter_mut().zip(grad) {
                *b += gamma * g;
            }
        }
        Optimizer::Amsgrad => {
            let (b1, b2, eps) = (config.amsgrad_beta1, config.amsgrad_beta2, config.amsgrad_eps);
            for k in 0..grad.len() {
                let g = grad[k];
                let m1 = b1 * state.first_moment[k] + (1.0 - b1) * g;
                let v = b2 * state.second_moment[k] + (1.0 - b2) * g * g;
                let vmax = state.second_moment_max[k].max(v);
                state.first_moment[k] = m1;
                state.second_moment[k] = v;
                state.second_moment_max[k] = vmax;
                state.beta_hat[k] += gamma * m1 / (vmax.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// `beta_tilde(m) = beta_tilde(m-1) + (beta_hat(m) - beta_tilde(m-1)) / m`.
pub fn update_average(state: &mut OptimizerState) {
    if state.m == 0 {
        return;
    }
    let inv = 1.0 / state.m as f64;
    for (t, h) in state.beta_tilde.iter_mut().zip(state.beta_hat.iter()) {
        *t += (h - *t) * inv;
    }
}
