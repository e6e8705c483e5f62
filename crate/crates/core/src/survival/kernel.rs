//! Stratified log-partial-likelihood and its first two derivatives.
//!
//! For a stratum `S` the kernel is
//!
//! ```text
//! pl(beta | S) = sum_{i in S, event} [ eta_i - log sum_{j in R_i} exp(eta_j) ]
//! R_i          = { j in S : time_j >= time_i and entry_j <= time_i }
//! ```
//!
//! with `eta = beta' x`. Two evaluation routes exist:
//!
//! * a descending-time sweep that accumulates `sum exp(eta)`, `sum exp(eta) x`
//!   and `sum exp(eta) x x'` while rescaling to the running maximum of `eta`
//!   (the maximum of the current risk set), used whenever no subject in the
//!   stratum is left truncated;
//! * a direct evaluation that materializes each risk set, used for left
//!   truncated strata and as a reference.
//!
//! Subjects are processed in a canonical order (time descending, index
//! ascending), so results do not depend on the order of the stratum indices.

use nalgebra::DMatrix;

use super::data::{Coefficients, Dataset, StratumView, TiePolicy};
use crate::error::{Error, Result};

/// `beta' x`.
#[inline]
pub fn linear_predictor(beta: &[f64], x: &[f64]) -> f64 {
    beta.iter().zip(x).map(|(b, v)| b * v).sum()
}

/// Value of one kernel evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumKernel {
    /// `pl(beta | S)`.
    pub loglik: f64,
    /// Gradient of `pl` (ascent direction).
    pub gradient: Vec<f64>,
    /// Hessian of `-pl`, symmetric positive semidefinite.
    pub hessian: Option<DMatrix<f64>>,
}

/// Reusable scratch space for repeated kernel evaluations.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    p: usize,
    ties: TiePolicy,
    order: Vec<usize>,
    eta: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    mu: Vec<f64>,
    loglik: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>,
    has_hessian: bool,
}

impl KernelEvaluator {
    pub fn new(p: usize, ties: TiePolicy) -> Self {
        Self {
            p,
            ties,
            order: Vec::new(),
            eta: Vec::new(),
            s1: vec![0.0; p],
            s2: vec![0.0; p * p],
            mu: vec![0.0; p],
            loglik: 0.0,
            gradient: vec![0.0; p],
            hessian: vec![0.0; p * p],
            has_hessian: false,
        }
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    /// Row-major `p x p` Hessian of `-pl` from the last evaluation that requested it.
    pub fn hessian(&self) -> Option<&[f64]> {
        self.has_hessian.then_some(self.hessian.as_slice())
    }

    pub fn to_kernel(&self) -> StratumKernel {
        StratumKernel {
            loglik: self.loglik,
            gradient: self.gradient.clone(),
            hessian: self
                .hessian()
                .map(|h| DMatrix::from_row_slice(self.p, self.p, h)),
        }
    }

    fn check(&self, beta: &[f64], indices: &[usize], data: &Dataset) -> Result<()> {
        if indices.len() < 2 {
            return Err(Error::Config(format!(
                "stratum needs at least 2 subjects, got {}",
                indices.len()
            )));
        }
        if beta.len() != self.p || data.p() != self.p {
            return Err(Error::Contract(format!(
                "dimension mismatch: beta has {}, data has {}, evaluator expects {}",
                beta.len(),
                data.p(),
                self.p
            )));
        }
        Ok(())
    }

    fn prepare(&mut self, beta: &[f64], indices: &[usize], data: &Dataset) {
        self.order.clear();
        self.order.extend_from_slice(indices);
        self.order.sort_unstable_by(|&a, &b| {
            data.time(b).total_cmp(&data.time(a)).then(a.cmp(&b))
        });
        self.eta.clear();
        for &j in &self.order {
            self.eta.push(linear_predictor(beta, data.covariates(j)));
        }
        self.loglik = 0.0;
        self.gradient.iter_mut().for_each(|g| *g = 0.0);
        self.hessian.iter_mut().for_each(|h| *h = 0.0);
    }

    /// Evaluates the kernel on `indices` (distinct, in range), choosing the sweep
    /// unless some subject of the stratum is left truncated.
    pub fn evaluate(
        &mut self,
        beta: &[f64],
        indices: &[usize],
        data: &Dataset,
        want_hessian: bool,
    ) -> Result<()> {
        let truncated = data.is_truncated() && indices.iter().any(|&j| data.entry(j) > 0.0);
        if truncated {
            self.evaluate_direct(beta, indices, data, want_hessian)
        } else {
            self.evaluate_sweep(beta, indices, data, want_hessian)
        }
    }

    /// Descending-time accumulation; ignores entry times.
    pub fn evaluate_sweep(
        &mut self,
        beta: &[f64],
        indices: &[usize],
        data: &Dataset,
        want_hessian: bool,
    ) -> Result<()> {
        self.check(beta, indices, data)?;
        self.prepare(beta, indices, data);
        let p = self.p;
        let mut max_eta = f64::NEG_INFINITY;
        let mut s0 = 0.0;
        self.s1.iter_mut().for_each(|v| *v = 0.0);
        if want_hessian {
            self.s2.iter_mut().for_each(|v| *v = 0.0);
        }

        let s = self.order.len();
        let mut start = 0;
        while start < s {
            let t = data.time(self.order[start]);
            let mut end = start;
            while end < s && data.time(self.order[end]) == t {
                end += 1;
            }

            for k in start..end {
                let j = self.order[k];
                let eta = self.eta[k];
                if eta > max_eta {
                    if s0 > 0.0 {
                        let scale = (max_eta - eta).exp();
                        s0 *= scale;
                        self.s1.iter_mut().for_each(|v| *v *= scale);
                        if want_hessian {
                            for a in 0..p {
                                for v in &mut self.s2[a * p + a..(a + 1) * p] {
                                    *v *= scale;
                                }
                            }
                        }
                    }
                    max_eta = eta;
                }
                let w = (eta - max_eta).exp();
                let x = data.covariates(j);
                s0 += w;
                for (acc, xv) in self.s1.iter_mut().zip(x) {
                    *acc += w * xv;
                }
                if want_hessian {
                    for a in 0..p {
                        let wa = w * x[a];
                        let row = &mut self.s2[a * p..(a + 1) * p];
                        for b in a..p {
                            row[b] += wa * x[b];
                        }
                    }
                }
            }

            let mut events = 0usize;
            let mut eta_sum = 0.0;
            for k in start..end {
                let j = self.order[k];
                if data.is_event(j) {
                    events += 1;
                    eta_sum += self.eta[k];
                    for (g, xv) in self.gradient.iter_mut().zip(data.covariates(j)) {
                        *g += xv;
                    }
                }
            }
            if events > 0 {
                if events > 1 && self.ties == TiePolicy::Error {
                    return Err(Error::TiedEvents { time: t });
                }
                let d = events as f64;
                self.loglik += eta_sum;
                self.loglik -= d * (max_eta + s0.ln());
                for ((g, m), s1) in self.gradient.iter_mut().zip(&mut self.mu).zip(&self.s1) {
                    *m = s1 / s0;
                    *g -= d * *m;
                }
                if want_hessian {
                    for a in 0..p {
                        for b in a..p {
                            self.hessian[a * p + b] +=
                                d * (self.s2[a * p + b] / s0 - self.mu[a] * self.mu[b]);
                        }
                    }
                }
            }
            start = end;
        }

        if want_hessian {
            symmetrize_upper(&mut self.hessian, p);
        }
        self.has_hessian = want_hessian;
        Ok(())
    }

    /// Evaluates each event's risk set explicitly, honoring entry times.
    ///
    /// Cost is `O(events * s * p^2)` with the Hessian; the weighted covariance is
    /// formed around the risk-set mean.
    pub fn evaluate_direct(
        &mut self,
        beta: &[f64],
        indices: &[usize],
        data: &Dataset,
        want_hessian: bool,
    ) -> Result<()> {
        self.check(beta, indices, data)?;
        self.prepare(beta, indices, data);
        let p = self.p;
        let s = self.order.len();

        if self.ties == TiePolicy::Error {
            for w in self.order.windows(2) {
                if data.is_event(w[0]) && data.is_event(w[1]) && data.time(w[0]) == data.time(w[1]) {
                    return Err(Error::TiedEvents { time: data.time(w[0]) });
                }
            }
        }

        for k in 0..s {
            let i = self.order[k];
            if !data.is_event(i) {
                continue;
            }
            let t = data.time(i);
            let at_risk = |j: usize| data.time(j) >= t && data.entry(j) <= t;

            let mut max_eta = f64::NEG_INFINITY;
            for (q, &j) in self.order.iter().enumerate() {
                if at_risk(j) && self.eta[q] > max_eta {
                    max_eta = self.eta[q];
                }
            }
            let mut s0 = 0.0;
            self.mu.iter_mut().for_each(|v| *v = 0.0);
            for (q, &j) in self.order.iter().enumerate() {
                if at_risk(j) {
                    let w = (self.eta[q] - max_eta).exp();
                    s0 += w;
                    for (m, xv) in self.mu.iter_mut().zip(data.covariates(j)) {
                        *m += w * xv;
                    }
                }
            }
            self.mu.iter_mut().for_each(|m| *m /= s0);

            self.loglik += self.eta[k] - (max_eta + s0.ln());
            for ((g, xv), m) in self.gradient.iter_mut().zip(data.covariates(i)).zip(&self.mu) {
                *g += xv - m;
            }
            if want_hessian {
                for (q, &j) in self.order.iter().enumerate() {
                    if !at_risk(j) {
                        continue;
                    }
                    let w = (self.eta[q] - max_eta).exp() / s0;
                    let x = data.covariates(j);
                    for a in 0..p {
                        let da = w * (x[a] - self.mu[a]);
                        for b in a..p {
                            self.hessian[a * p + b] += da * (x[b] - self.mu[b]);
                        }
                    }
                }
            }
        }

        if want_hessian {
            symmetrize_upper(&mut self.hessian, p);
        }
        self.has_hessian = want_hessian;
        Ok(())
    }
}

fn symmetrize_upper(m: &mut [f64], p: usize) {
    for a in 0..p {
        for b in 0..a {
            m[a * p + b] = m[b * p + a];
        }
    }
}

/// Members of the stratum at risk at subject `i`'s time: `time_j >= time_i`
/// and `entry_j <= time_i`. Always contains `i`.
pub fn risk_set(stratum: &StratumView, data: &Dataset, i: usize) -> Result<Vec<usize>> {
    if !stratum.contains(i) {
        return Err(Error::Contract(format!("subject {i} is not in the stratum")));
    }
    let t = data.time(i);
    Ok(stratum
        .indices()
        .iter()
        .copied()
        .filter(|&j| j == i || (data.time(j) >= t && data.entry(j) <= t))
        .collect())
}

/// Full kernel evaluation with Breslow ties.
pub fn stratum_kernel(
    beta: &Coefficients,
    stratum: &StratumView,
    data: &Dataset,
    want_hessian: bool,
) -> Result<StratumKernel> {
    let mut ev = KernelEvaluator::new(data.p(), TiePolicy::Breslow);
    ev.evaluate(beta, stratum.indices(), data, want_hessian)?;
    Ok(ev.to_kernel())
}

pub fn stratum_loglik(beta: &Coefficients, stratum: &StratumView, data: &Dataset) -> Result<f64> {
    Ok(stratum_kernel(beta, stratum, data, false)?.loglik)
}

/// Gradient of `pl` with respect to `beta`.
pub fn stratum_gradient(beta: &Coefficients, stratum: &StratumView, data: &Dataset) -> Result<Vec<f64>> {
    Ok(stratum_kernel(beta, stratum, data, false)?.gradient)
}

/// Hessian of `-pl` (positive semidefinite).
pub fn stratum_hessian(beta: &Coefficients, stratum: &StratumView, data: &Dataset) -> Result<DMatrix<f64>> {
    Ok(stratum_kernel(beta, stratum, data, true)?
        .hessian
        .expect("hessian requested"))
}

/// Pairwise (`s = 2`) log-partial-likelihood, a smoothed concordance term:
///
/// ```text
/// log softmax_1 * 1(t1 < t2) * event_1 + log softmax_2 * 1(t2 < t1) * event_2
/// ```
///
/// Arithmetic mirrors the sweep so the two agree bit for bit.
pub fn pairwise_loss(beta: &Coefficients, pair: &StratumView, data: &Dataset) -> Result<f64> {
    let &[a, b] = pair.indices() else {
        return Err(Error::Contract(format!(
            "pairwise loss needs exactly 2 subjects, got {}",
            pair.len()
        )));
    };
    if data.time(a) == data.time(b) {
        return Err(Error::Contract("pairwise loss requires distinct times".into()));
    }
    let (early, late) = if data.time(a) < data.time(b) { (a, b) } else { (b, a) };
    if !data.is_event(early) {
        return Ok(0.0);
    }
    let f_early = linear_predictor(beta, data.covariates(early));
    let f_late = linear_predictor(beta, data.covariates(late));
    let (hi, lo) = if f_early > f_late { (f_early, f_late) } else { (f_late, f_early) };
    let log_norm = hi + (1.0 + (lo - hi).exp()).ln();
    Ok(0.0 + (f_early - log_norm))
}
