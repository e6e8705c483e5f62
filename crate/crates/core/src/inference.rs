//! Confidence intervals for the averaged SGD estimate.
//!
//! * Plug-in: the estimator minimizes an order-`s` U-statistic, so its
//!   asymptotic covariance is `H^-1 V H^-1 / n` with
//!   `V = s^2 E[r r']` and `H` the expected kernel Hessian, where `r(D_i)` is
//!   the kernel score averaged over strata containing subject `i`. Each
//!   `r(D_i)` is estimated from `n_o` random strata through `i`.
//! * Bootstrap: refit on resamples (warm-started at the estimate) and invert
//!   the empirical quantiles of `beta_b - beta`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, from_rows, inverse_spd, to_rows};
use crate::newton::MAX_CONDITION;
use crate::rng::{derive_seed, substream, Rng};
use crate::sgd::{fit_epochs_from, SgdConfig};
use crate::survival::{Coefficients, Dataset, KernelEvaluator, TiePolicy};

/// Number of subjects handled per parallel work item.
const BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginConfig {
    /// `n_o`: strata sampled per observation.
    pub strata_per_obs: usize,
    pub strata_size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub ties: TiePolicy,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self {
            strata_per_obs: 1000,
            strata_size: 20,
            alpha: 0.05,
            seed: 0,
            ties: TiePolicy::Breslow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub alpha: f64,
    /// Epochs per refit.
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            alpha: 0.05,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    Plugin,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientInterval {
    pub name: String,
    pub estimate: f64,
    /// Plug-in only.
    pub se: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub hazard_ratio: f64,
    pub hazard_ratio_lower: f64,
    pub hazard_ratio_upper: f64,
}

impl CoefficientInterval {
    fn new(name: String, estimate: f64, se: Option<f64>, lower: f64, upper: f64) -> Self {
        Self {
            name,
            estimate,
            se,
            lower,
            upper,
            hazard_ratio: estimate.exp(),
            hazard_ratio_lower: lower.exp(),
            hazard_ratio_upper: upper.exp(),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub method: IntervalMethod,
    pub alpha: f64,
    pub coefficients: Vec<CoefficientInterval>,
    /// Plug-in only: `V` and `H` estimates, row-major.
    pub v_hat: Option<Vec<Vec<f64>>>,
    pub h_hat: Option<Vec<Vec<f64>>>,
    /// Plug-in only: infinity norm of the average sampled score at the estimate.
    pub mean_score_norm: Option<f64>,
    /// Bootstrap only.
    pub resamples_used: Option<usize>,
    pub resamples_dropped: Option<usize>,
    /// How strata or quantiles were obtained.
    pub notes: Vec<String>,
    pub plugin: Option<PluginConfig>,
    pub bootstrap: Option<BootstrapConfig>,
    pub sgd: Option<SgdConfig>,
}

impl IntervalReport {
    pub fn lower(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.upper).collect()
    }

    /// Per-coefficient containment of `truth`.
    pub fn covers(&self, truth: &[f64]) -> Vec<bool> {
        self.coefficients.iter().zip(truth).map(|(c, t)| c.contains(*t)).collect()
    }

    pub fn v_matrix(&self) -> Option<DMatrix<f64>> {
        self.v_hat.as_deref().map(from_rows)
    }

    pub fn h_matrix(&self) -> Option<DMatrix<f64>> {
        self.h_hat.as_deref().map(from_rows)
    }
}

/// Upper `alpha / 2` critical value of the standard normal.
pub fn normal_critical(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = match c.checked_mul((n - j) as u128) {
            Some(v) => v / (j as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// Advances `comb` (strictly increasing, values `< n`) to the next
/// lexicographic combination; `false` once exhausted.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Scratch state for `r_hat` estimation on one worker.
struct RHatWorker {
    eval: KernelEvaluator,
    stratum: Vec<usize>,
    r: Vec<f64>,
    h: Vec<f64>,
}

impl RHatWorker {
    fn new(p: usize, ties: TiePolicy) -> Self {
        Self {
            eval: KernelEvaluator::new(p, ties),
            stratum: Vec::new(),
            r: vec![0.0; p],
            h: vec![0.0; p * p],
        }
    }

    fn accumulate(&mut self, beta: &[f64], data: &Dataset) -> Result<()> {
        self.eval.evaluate(beta, &self.stratum, data, true)?;
        for (r, g) in self.r.iter_mut().zip(self.eval.gradient()) {
            *r -= g;
        }
        for (h, v) in self.h.iter_mut().zip(self.eval.hessian().expect("hessian requested")) {
            *h += v;
        }
        Ok(())
    }

    /// Fills `r` and `h` with the sampled means for subject `i`.
    fn compute(
        &mut self,
        i: usize,
        beta: &[f64],
        data: &Dataset,
        s: usize,
        n_o: usize,
        exhaustive: bool,
        rng: &mut Rng,
    ) -> Result<()> {
        let n = data.len();
        self.r.iter_mut().for_each(|v| *v = 0.0);
        self.h.iter_mut().for_each(|v| *v = 0.0);
        if exhaustive {
            let mut comb: Vec<usize> = (0..s - 1).collect();
            loop {
                self.stratum.clear();
                self.stratum.push(i);
                self.stratum
                    .extend(comb.iter().map(|&k| if k < i { k } else { k + 1 }));
                self.accumulate(beta, data)?;
                if !next_combination(&mut comb, n - 1) {
                    break;
                }
            }
        } else {
            for _ in 0..n_o {
                self.stratum.clear();
                self.stratum.push(i);
                let picks = sample(rng, n - 1, s - 1);
                self.stratum
                    .extend(picks.iter().map(|k| if k < i { k } else { k + 1 }));
                self.accumulate(beta, data)?;
            }
        }
        let inv = 1.0 / n_o as f64;
        self.r.iter_mut().for_each(|v| *v *= inv);
        self.h.iter_mut().for_each(|v| *v *= inv);
        Ok(())
    }
}

fn check_sampling(n: usize, s: usize, n_o: usize) -> Result<bool> {
    if s < 2 {
        return Err(Error::Config(format!("strata size must be >= 2, got {s}")));
    }
    if n < s {
        return Err(Error::Config(format!("need n >= s, got n = {n}, s = {s}")));
    }
    if n_o == 0 {
        return Err(Error::Config("strata per observation must be >= 1".into()));
    }
    let total = binomial(n - 1, s - 1);
    if n_o as u128 > total {
        return Err(Error::Config(format!(
            "strata per observation ({n_o}) exceeds the {total} distinct strata through a subject"
        )));
    }
    Ok(n_o as u128 == total)
}

/// Sampled `r_hat_i` (mean score of `-pl` over `n_o` strata containing `i`)
/// and the matching mean Hessian `H_hat_i`.
///
/// Each draw picks `s - 1` distinct partners; draws are independent of each
/// other. When `n_o` equals the number of distinct strata through `i`, all of
/// them are enumerated instead and `rng` is not used.
pub fn sampled_r_hat(
    i: usize,
    beta: &Coefficients,
    data: &Dataset,
    s: usize,
    n_o: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if i >= data.len() {
        return Err(Error::Contract(format!("subject {i} out of range")));
    }
    let exhaustive = check_sampling(data.len(), s, n_o)?;
    let p = data.p();
    let mut w = RHatWorker::new(p, TiePolicy::Breslow);
    w.compute(i, beta, data, s, n_o, exhaustive, rng)?;
    Ok((w.r, DMatrix::from_row_slice(p, p, &w.h)))
}

struct Partial {
    outer: Vec<f64>,
    h: Vec<f64>,
    r_sum: Vec<f64>,
}

/// Plug-in sandwich interval (normal approximation).
pub fn plugin_ci(beta: &Coefficients, data: &Dataset, config: &PluginConfig) -> Result<IntervalReport> {
    check_alpha(config.alpha)?;
    let n = data.len();
    let p = data.p();
    let s = config.strata_size;
    let n_o = config.strata_per_obs;
    let exhaustive = check_sampling(n, s, n_o)?;
    if beta.len() != p {
        return Err(Error::Contract(format!("beta has {} entries, data has p = {p}", beta.len())));
    }

    let blocks: Vec<usize> = (0..n.div_ceil(BLOCK)).collect();
    let partials: Vec<Result<Partial>> = blocks
        .par_iter()
        .map(|&b| {
            let mut w = RHatWorker::new(p, config.ties);
            let mut part = Partial {
                outer: vec![0.0; p * p],
                h: vec![0.0; p * p],
                r_sum: vec![0.0; p],
            };
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = substream(config.seed, i as u64);
                w.compute(i, beta, data, s, n_o, exhaustive, &mut rng)?;
                for a in 0..p {
                    part.r_sum[a] += w.r[a];
                    for c in 0..p {
                        part.outer[a * p + c] += w.r[a] * w.r[c];
                    }
                }
                for (acc, v) in part.h.iter_mut().zip(&w.h) {
                    *acc += v;
                }
            }
            Ok(part)
        })
        .collect();

    let mut outer = vec![0.0; p * p];
    let mut h = vec![0.0; p * p];
    let mut r_sum = vec![0.0; p];
    for part in partials {
        let part = part?;
        outer.iter_mut().zip(&part.outer).for_each(|(a, v)| *a += v);
        h.iter_mut().zip(&part.h).for_each(|(a, v)| *a += v);
        r_sum.iter_mut().zip(&part.r_sum).for_each(|(a, v)| *a += v);
    }
    let nf = n as f64;
    let sf = s as f64;
    let v_hat = DMatrix::from_row_slice(p, p, &outer) * (sf * sf / nf);
    let h_hat = DMatrix::from_row_slice(p, p, &h) / nf;

    let cond = condition_number(&h_hat);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::NonInvertibleInformation { condition: cond });
    }
    let h_inv = inverse_spd(&h_hat).ok_or(Error::NonInvertibleInformation { condition: cond })?;
    let cov = &h_inv * &v_hat * &h_inv / nf;
    let z = normal_critical(config.alpha);

    let coefficients = (0..p)
        .map(|k| {
            let se = cov[(k, k)].max(0.0).sqrt();
            CoefficientInterval::new(
                data.names()[k].clone(),
                beta[k],
                Some(se),
                beta[k] - z * se,
                beta[k] + z * se,
            )
        })
        .collect();
    let mean_score_norm = r_sum.iter().fold(0.0f64, |m, v| m.max((v / nf).abs()));
    let notes = vec![if exhaustive {
        "strata: all C(n-1, s-1) strata through each subject enumerated".to_string()
    } else {
        "strata: partners drawn without replacement within a draw, independently across draws".to_string()
    }];
    Ok(IntervalReport {
        method: IntervalMethod::Plugin,
        alpha: config.alpha,
        coefficients,
        v_hat: Some(to_rows(&v_hat)),
        h_hat: Some(to_rows(&h_hat)),
        mean_score_norm: Some(mean_score_norm),
        resamples_used: None,
        resamples_dropped: None,
        notes,
        plugin: Some(config.clone()),
        bootstrap: None,
        sgd: None,
    })
}

pub const QUANTILE_DEFINITION: &str =
    "midpoint: (x[floor(h)] + x[ceil(h)]) / 2 with h = (B - 1) q on sorted values";

/// Quantile of sorted data with the midpoint rule.
pub fn quantile_midpoint(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    (sorted[lo] + sorted[hi]) / 2.0
}

/// Basic bootstrap interval `(est - q_{1-a/2}, est - q_{a/2})` from replicate
/// estimates, per coefficient.
pub fn basic_bootstrap_interval(estimate: &[f64], replicates: &[Vec<f64>], alpha: f64) -> Vec<(f64, f64)> {
    (0..estimate.len())
        .map(|k| {
            let mut diffs: Vec<f64> = replicates.iter().map(|r| r[k] - estimate[k]).collect();
            diffs.sort_by(f64::total_cmp);
            let q_lo = quantile_midpoint(&diffs, alpha / 2.0);
            let q_hi = quantile_midpoint(&diffs, 1.0 - alpha / 2.0);
            (estimate[k] - q_hi, estimate[k] - q_lo)
        })
        .collect()
}

/// Nonparametric bootstrap. Each resample is refit with `fit_epochs`
/// starting at `beta`; refits that fail are dropped and counted.
pub fn bootstrap_ci(
    beta: &Coefficients,
    data: &Dataset,
    sgd: &SgdConfig,
    config: &BootstrapConfig,
) -> Result<IntervalReport> {
    check_alpha(config.alpha)?;
    if config.resamples < 2 {
        return Err(Error::Config(format!("need at least 2 resamples, got {}", config.resamples)));
    }
    if config.epochs < 1 {
        return Err(Error::Config("bootstrap epochs must be >= 1".into()));
    }
    sgd.validate()?;
    let n = data.len();
    if n < sgd.strata_size {
        return Err(Error::Config(format!("need n >= s, got n = {n}, s = {}", sgd.strata_size)));
    }
    if beta.len() != data.p() {
        return Err(Error::Contract(format!("beta has {} entries, data has p = {}", beta.len(), data.p())));
    }

    let b_total = config.resamples;
    let fits: Vec<Option<Vec<f64>>> = (0..b_total)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(config.seed, b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resample = data.select(&rows);
            let cfg = SgdConfig {
                epochs: config.epochs,
                seed: derive_seed(config.seed, (b_total + b) as u64),
                ..sgd.clone()
            };
            fit_epochs_from(&resample, &cfg, beta.clone())
                .ok()
                .map(|r| r.estimate().0.clone())
        })
        .collect();

    let replicates: Vec<Vec<f64>> = fits.into_iter().flatten().collect();
    let dropped = b_total - replicates.len();
    if dropped * 20 > b_total || replicates.len() < 2 {
        return Err(Error::BootstrapFailures { dropped, total: b_total });
    }
    let bounds = basic_bootstrap_interval(beta, &replicates, config.alpha);
    let coefficients = bounds
        .iter()
        .enumerate()
        .map(|(k, &(lo, hi))| CoefficientInterval::new(data.names()[k].clone(), beta[k], None, lo, hi))
        .collect();
    Ok(IntervalReport {
        method: IntervalMethod::Bootstrap,
        alpha: config.alpha,
        coefficients,
        v_hat: None,
        h_hat: None,
        mean_score_norm: None,
        resamples_used: Some(replicates.len()),
        resamples_dropped: Some(dropped),
        notes: vec![format!("quantiles: {QUANTILE_DEFINITION}")],
        plugin: None,
        bootstrap: Some(config.clone()),
        sgd: Some(sgd.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::survival::Subject;

    #[test]
    fn binomials() {
        assert_eq!(binomial(11, 2), 55);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(999, 19) > 1_000_000, true);
        assert_eq!(binomial(100_000, 50), u128::MAX);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(c, vec![3, 4]);
    }

    #[test]
    fn quantiles_midpoint() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_midpoint(&v, 0.0), 1.0);
        assert_eq!(quantile_midpoint(&v, 1.0), 4.0);
        assert_eq!(quantile_midpoint(&v, 0.5), 2.5);
        assert_eq!(quantile_midpoint(&[1.0, 2.0, 3.0], 0.5), 2.0);
    }

    #[test]
    fn degenerate_bootstrap_is_zero_width() {
        let est = [0.3, -1.0];
        let reps = vec![est.to_vec(); 10];
        for (k, (lo, hi)) in basic_bootstrap_interval(&est, &reps, 0.05).into_iter().enumerate() {
            assert_eq!(lo, est[k]);
            assert_eq!(hi, est[k]);
        }
    }

    #[test]
    fn censored_partners_give_zero_score() {
        let d = Dataset::from_subjects(
            vec!["x".into()],
            (0..6).map(|i| Subject::new(i as f64 + 1.0, false, vec![i as f64 * 0.3])),
        )
        .unwrap();
        let (r, h) = sampled_r_hat(2, &Coefficients(vec![0.4]), &d, 3, 4, &mut rng_from_seed(1)).unwrap();
        assert_eq!(r, vec![0.0]);
        assert_eq!(h[(0, 0)], 0.0);
    }

    #[test]
    fn sampling_config_errors() {
        let d = Dataset::from_subjects(
            vec!["x".into()],
            (0..4).map(|i| Subject::new(i as f64 + 1.0, true, vec![i as f64])),
        )
        .unwrap();
        let beta = Coefficients(vec![0.0]);
        let mut rng = rng_from_seed(0);
        assert!(matches!(sampled_r_hat(0, &beta, &d, 5, 1, &mut rng), Err(Error::Config(_))));
        assert!(matches!(sampled_r_hat(0, &beta, &d, 2, 4, &mut rng), Err(Error::Config(_))));
        assert!(matches!(sampled_r_hat(0, &beta, &d, 2, 0, &mut rng), Err(Error::Config(_))));
    }
}
