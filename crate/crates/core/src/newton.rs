//! Newton-Raphson maximization of the full log-partial-likelihood.
//!
//! Value, score and information come from one descending-time sweep over the
//! time-sorted data with suffix sums of `exp(eta)`, `exp(eta) x` and
//! `exp(eta) x x'`, so each evaluation is `O(n p^2)` after an `O(n log n)`
//! sort. Left-truncated subjects leave the accumulators once the sweep moves
//! below their entry time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, inverse_spd, to_rows, Accumulator};
use crate::survival::{linear_predictor, Coefficients, Dataset, TiePolicy};

/// Above this condition estimate the information matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Threshold on the score and step infinity norms.
    pub tol: f64,
    pub step_halving: bool,
    /// Compensated suffix sums; off reproduces naive accumulation.
    pub compensated: bool,
    /// Fit on centered and scaled covariates, then map back.
    pub standardize: bool,
    pub ties: TiePolicy,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-9,
            step_halving: true,
            compensated: true,
            standardize: false,
            ties: TiePolicy::Breslow,
        }
    }
}

/// Full-data log-partial-likelihood with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FullEvaluation {
    pub loglik: f64,
    /// Score (gradient of the log-partial-likelihood).
    pub gradient: Vec<f64>,
    /// Observed information, the Hessian of `-pl`.
    pub information: DMatrix<f64>,
}

/// Sorted view of a dataset reused across Newton iterations.
struct SweepPlan {
    by_time: Vec<usize>,
    by_entry: Vec<usize>,
    center: Vec<f64>,
}

impl SweepPlan {
    fn new(data: &Dataset) -> Self {
        let n = data.len();
        let mut by_time: Vec<usize> = (0..n).collect();
        by_time.sort_unstable_by(|&a, &b| data.time(b).total_cmp(&data.time(a)).then(a.cmp(&b)));
        let mut by_entry: Vec<usize> = if data.is_truncated() {
            (0..n).filter(|&i| data.entry(i) > 0.0).collect()
        } else {
            Vec::new()
        };
        by_entry.sort_unstable_by(|&a, &b| data.entry(b).total_cmp(&data.entry(a)));
        // the likelihood is invariant to shifting x; centering limits cancellation
        let mut center = vec![0.0; data.p()];
        if n > 0 {
            for i in 0..n {
                for (c, x) in center.iter_mut().zip(data.covariates(i)) {
                    *c += x;
                }
            }
            center.iter_mut().for_each(|c| *c /= n as f64);
        }
        Self {
            by_time,
            by_entry,
            center,
        }
    }
}

pub fn full_loglik_grad_hess(beta: &Coefficients, data: &Dataset, config: &NewtonConfig) -> Result<FullEvaluation> {
    if beta.len() != data.p() {
        return Err(Error::Contract(format!(
            "beta has {} entries, data has p = {}",
            beta.len(),
            data.p()
        )));
    }
    sweep(beta, data, &SweepPlan::new(data), config.compensated, config.ties)
}

fn sweep(beta: &[f64], data: &Dataset, plan: &SweepPlan, exact: bool, ties: TiePolicy) -> Result<FullEvaluation> {
    let p = data.p();
    let n = data.len();
    let shift = linear_predictor(beta, &plan.center);
    let mut xc = vec![0.0; p];
    let centered = |i: usize, out: &mut [f64]| {
        for ((o, x), c) in out.iter_mut().zip(data.covariates(i)).zip(&plan.center) {
            *o = x - c;
        }
    };

    let mut max_eta = f64::NEG_INFINITY;
    let mut s0 = Accumulator::default();
    let mut s1 = vec![Accumulator::default(); p];
    let mut s2 = vec![Accumulator::default(); p * p];
    let mut ll = Accumulator::default();
    let mut grad = vec![Accumulator::default(); p];
    let mut info = vec![Accumulator::default(); p * p];
    let mut mu = vec![0.0; p];
    let mut entry_ptr = 0;

    let mut start = 0;
    while start < n {
        let t = data.time(plan.by_time[start]);
        let mut end = start;
        while end < n && data.time(plan.by_time[end]) == t {
            end += 1;
        }

        for &j in &plan.by_time[start..end] {
            let eta = linear_predictor(beta, data.covariates(j)) - shift;
            if !eta.is_finite() {
                return Err(Error::NumericalOverflow { subject: j });
            }
            if eta > max_eta {
                if max_eta.is_finite() {
                    let scale = (max_eta - eta).exp();
                    s0.scale(scale);
                    s1.iter_mut().for_each(|a| a.scale(scale));
                    for a in 0..p {
                        s2[a * p + a..(a + 1) * p].iter_mut().for_each(|v| v.scale(scale));
                    }
                }
                max_eta = eta;
            }
            let w = (eta - max_eta).exp();
            centered(j, &mut xc);
            s0.add(w, exact);
            for a in 0..p {
                let wa = w * xc[a];
                s1[a].add(wa, exact);
                for b in a..p {
                    s2[a * p + b].add(wa * xc[b], exact);
                }
            }
            if !s0.value().is_finite() {
                return Err(Error::NumericalOverflow { subject: j });
            }
        }

        // subjects that have not yet entered at t leave the risk set
        while entry_ptr < plan.by_entry.len() && data.entry(plan.by_entry[entry_ptr]) > t {
            let j = plan.by_entry[entry_ptr];
            entry_ptr += 1;
            let eta = linear_predictor(beta, data.covariates(j)) - shift;
            let w = (eta - max_eta).exp();
            centered(j, &mut xc);
            s0.add(-w, exact);
            for a in 0..p {
                let wa = w * xc[a];
                s1[a].add(-wa, exact);
                for b in a..p {
                    s2[a * p + b].add(-wa * xc[b], exact);
                }
            }
        }

        let mut events = 0usize;
        for &i in plan.by_time[start..end].iter().filter(|&&i| data.is_event(i)) {
            events += 1;
            ll.add(linear_predictor(beta, data.covariates(i)) - shift, exact);
            centered(i, &mut xc);
            for (g, x) in grad.iter_mut().zip(&xc) {
                g.add(*x, exact);
            }
        }
        if events > 0 {
            if events > 1 && ties == TiePolicy::Error {
                return Err(Error::TiedEvents { time: t });
            }
            let d = events as f64;
            let denom = s0.value();
            if !(denom > 0.0 && denom.is_finite()) {
                return Err(Error::NumericalOverflow { subject: plan.by_time[start] });
            }
            ll.add(-d * (max_eta + denom.ln()), exact);
            for a in 0..p {
                mu[a] = s1[a].value() / denom;
                grad[a].add(-d * mu[a], exact);
            }
            for a in 0..p {
                for b in a..p {
                    info[a * p + b].add(d * (s2[a * p + b].value() / denom - mu[a] * mu[b]), exact);
                }
            }
        }
        start = end;
    }

    let information = DMatrix::from_fn(p, p, |a, b| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        info[a * p + b].value()
    });
    let loglik = ll.value();
    let gradient: Vec<f64> = grad.iter().map(Accumulator::value).collect();
    if !loglik.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalOverflow { subject: plan.by_time.first().copied().unwrap_or(0) });
    }
    Ok(FullEvaluation {
        loglik,
        gradient,
        information,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub beta: Coefficients,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Row-major observed information at `beta`.
    pub observed_information: Vec<Vec<f64>>,
    /// `sqrt(diag(I^-1))`; empty when the information is not invertible.
    pub standard_errors: Vec<f64>,
    pub score_norm: f64,
    /// Log-likelihood after each accepted iterate, starting at `beta = 0`.
    pub loglik_trace: Vec<f64>,
    pub config: NewtonConfig,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iterations from `beta = 0`.
pub fn newton_fit(data: &Dataset, config: &NewtonConfig) -> Result<NewtonReport> {
    if !(config.tol > 0.0) {
        return Err(Error::Config("tol must be > 0".into()));
    }
    if data.len() < 2 || data.event_count() == 0 {
        return Err(Error::Config(format!(
            "newton fit needs n >= 2 with at least one event (n = {}, events = {})",
            data.len(),
            data.event_count()
        )));
    }
    if config.standardize {
        return newton_standardized(data, config);
    }
    newton_raw(data, config)
}

fn newton_raw(data: &Dataset, config: &NewtonConfig) -> Result<NewtonReport> {
    let p = data.p();
    let plan = SweepPlan::new(data);
    let eval_at = |b: &[f64]| sweep(b, data, &plan, config.compensated, config.ties);

    let mut beta = vec![0.0; p];
    let mut cur = eval_at(&beta)?;
    let mut trace = vec![cur.loglik];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let cond = condition_number(&cur.information);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::NonIdentifiable { condition: cond });
        }
        if inf_norm(&cur.gradient) < config.tol {
            converged = true;
            break;
        }
        let step = cur
            .information
            .clone()
            .cholesky()
            .map(|c| c.solve(&DVector::from_column_slice(&cur.gradient)))
            .ok_or(Error::NonIdentifiable { condition: cond })?;
        iterations += 1;

        let full_norm = step.amax();
        let mut t = 1.0;
        let mut accepted = None;
        loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let next = match eval_at(&cand) {
                Ok(e) => Some(e),
                Err(Error::NumericalOverflow { .. }) if config.step_halving => None,
                Err(e) => return Err(e),
            };
            if let Some(next) = next {
                if !config.step_halving || next.loglik >= cur.loglik {
                    accepted = Some((cand, next));
                    break;
                }
            }
            t *= 0.5;
            if t * full_norm < config.tol * 1e-3 {
                break;
            }
        }
        let Some((cand, next)) = accepted else {
            // no ascent possible along the Newton direction: at the optimum up to roundoff
            converged = full_norm < config.tol.sqrt();
            break;
        };
        beta = cand;
        cur = next;
        trace.push(cur.loglik);
        if t * full_norm < config.tol {
            converged = true;
            break;
        }
    }
    if !converged && iterations >= config.max_iter && inf_norm(&cur.gradient) < config.tol {
        converged = true;
    }

    let standard_errors = inverse_spd(&cur.information)
        .map(|inv| (0..p).map(|k| inv[(k, k)].sqrt()).collect())
        .unwrap_or_default();
    Ok(NewtonReport {
        beta: Coefficients(beta),
        loglik: cur.loglik,
        iterations,
        converged,
        observed_information: to_rows(&cur.information),
        standard_errors,
        score_norm: inf_norm(&cur.gradient),
        loglik_trace: trace,
        config: config.clone(),
    })
}

fn newton_standardized(data: &Dataset, config: &NewtonConfig) -> Result<NewtonReport> {
    let n = data.len() as f64;
    let p = data.p();
    let mut mean = vec![0.0; p];
    for i in 0..data.len() {
        for (m, x) in mean.iter_mut().zip(data.covariates(i)) {
            *m += x / n;
        }
    }
    let mut scale = vec![0.0; p];
    for i in 0..data.len() {
        for ((s, x), m) in scale.iter_mut().zip(data.covariates(i)).zip(&mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    let scale: Vec<f64> = scale.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();

    let mut std_data = Dataset::with_names(data.names().to_vec());
    for mut s in data.subjects() {
        for ((x, m), sd) in s.covariates.iter_mut().zip(&mean).zip(&scale) {
            *x = (*x - m) / sd;
        }
        std_data.push(s)?;
    }
    let inner = NewtonConfig {
        standardize: false,
        ..config.clone()
    };
    let fit = newton_raw(&std_data, &inner)?;
    let beta = Coefficients(fit.beta.iter().zip(&scale).map(|(b, sd)| b / sd).collect());
    let eval = full_loglik_grad_hess(&beta, data, &inner)?;
    let standard_errors = inverse_spd(&eval.information)
        .map(|inv| (0..p).map(|k| inv[(k, k)].sqrt()).collect())
        .unwrap_or_default();
    Ok(NewtonReport {
        beta,
        loglik: eval.loglik,
        iterations: fit.iterations,
        converged: fit.converged,
        observed_information: to_rows(&eval.information),
        standard_errors,
        score_norm: inf_norm(&eval.gradient),
        loglik_trace: fit.loglik_trace,
        config: config.clone(),
    })
}
