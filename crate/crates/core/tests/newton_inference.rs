use bigsurv::inference::{
    basic_bootstrap_interval, bootstrap_ci, plugin_ci, quantile_midpoint, sampled_r_hat, BootstrapConfig, PluginConfig,
};
use bigsurv::linalg::symmetric_eigenvalues;
use bigsurv::newton::{full_loglik_grad_hess, newton_fit, NewtonConfig};
use bigsurv::rng::rng_from_seed;
use bigsurv::simulation::{generate, SimConfig};
use bigsurv::survival::{stratum_gradient, stratum_hessian, Coefficients, StratumView};
use bigsurv::{fit_epochs, Error, SgdConfig};
use rand_distr::{Distribution, Normal};

#[test]
fn newton_ascends_and_reaches_score_root() {
    for seed in 0..5 {
        let d = generate(&SimConfig::new(400, 4, seed)).unwrap();
        for standardize in [false, true] {
            let cfg = NewtonConfig { standardize, ..NewtonConfig::default() };
            let r = newton_fit(&d, &cfg).unwrap();
            assert!(r.converged);
            assert!(r.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
            let e = full_loglik_grad_hess(&r.beta, &d, &cfg).unwrap();
            let score = e.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            assert!(score < cfg.tol * 10.0, "score {score}");
            assert_eq!(r.standard_errors.len(), 4);
        }
    }
}

#[test]
fn compensation_toggle_agrees_on_easy_data() {
    let d = generate(&SimConfig::new(2000, 3, 8)).unwrap();
    let a = newton_fit(&d, &NewtonConfig::default()).unwrap();
    let b = newton_fit(&d, &NewtonConfig { compensated: false, ..NewtonConfig::default() }).unwrap();
    for (x, y) in a.beta.iter().zip(b.beta.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
}

fn tiny() -> bigsurv::Dataset {
    generate(&SimConfig { beta_star: vec![0.7, -0.4], ..SimConfig::new(12, 2, 31) }).unwrap()
}

/// Enumerates all strata of size 3 containing subject `i` directly.
fn enumerated(i: usize, beta: &Coefficients, d: &bigsurv::Dataset) -> (Vec<f64>, Vec<f64>) {
    let n = d.len();
    let mut r = vec![0.0; 2];
    let mut h = vec![0.0; 4];
    let mut count = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            if a == i || b == i {
                continue;
            }
            let view = StratumView::new(vec![a, i, b], n).unwrap();
            let g = stratum_gradient(beta, &view, d).unwrap();
            let hh = stratum_hessian(beta, &view, d).unwrap();
            for k in 0..2 {
                r[k] -= g[k];
            }
            for k in 0..4 {
                h[k] += hh[(k / 2, k % 2)];
            }
            count += 1.0;
        }
    }
    assert_eq!(count, 55.0);
    (r.iter().map(|v| v / count).collect(), h.iter().map(|v| v / count).collect())
}

#[test]
fn exhaustive_r_hat_matches_enumeration() {
    let d = tiny();
    let beta = Coefficients(vec![0.3, -0.2]);
    for i in 0..d.len() {
        let (r, h) = sampled_r_hat(i, &beta, &d, 3, 55, &mut rng_from_seed(i as u64)).unwrap();
        let (r2, h2) = sampled_r_hat(i, &beta, &d, 3, 55, &mut rng_from_seed(999)).unwrap();
        assert_eq!(r, r2);
        assert_eq!(h, h2);
        let (ro, ho) = enumerated(i, &beta, &d);
        for k in 0..2 {
            assert!((r[k] - ro[k]).abs() <= 1e-13, "{} vs {}", r[k], ro[k]);
        }
        for k in 0..4 {
            assert!((h[(k / 2, k % 2)] - ho[k]).abs() <= 1e-13);
        }
    }
    assert!(matches!(
        sampled_r_hat(0, &beta, &d, 3, 56, &mut rng_from_seed(0)),
        Err(Error::Config(_))
    ));
}

#[test]
fn pairwise_r_hat_is_mean_partner_gradient() {
    let d = tiny();
    let beta = Coefficients(vec![0.1, 0.5]);
    let (r, _) = sampled_r_hat(4, &beta, &d, 2, 11, &mut rng_from_seed(0)).unwrap();
    let mut want = [0.0; 2];
    for j in (0..12).filter(|&j| j != 4) {
        let g = stratum_gradient(&beta, &StratumView::new(vec![4, j], 12).unwrap(), &d).unwrap();
        want[0] -= g[0] / 11.0;
        want[1] -= g[1] / 11.0;
    }
    assert!((r[0] - want[0]).abs() < 1e-14 && (r[1] - want[1]).abs() < 1e-14);
}

#[test]
fn plugin_report_shape() {
    let d = generate(&SimConfig::new(300, 3, 4)).unwrap();
    let fit = fit_epochs(&d, &SgdConfig { epochs: 30, ..SgdConfig::default() }).unwrap();
    let cfg = PluginConfig { strata_per_obs: 50, seed: 3, ..PluginConfig::default() };
    let rep = plugin_ci(fit.estimate(), &d, &cfg).unwrap();
    let again = plugin_ci(fit.estimate(), &d, &cfg).unwrap();
    assert_eq!(rep, again);
    let v = rep.v_matrix().unwrap();
    assert!((v.clone() - v.transpose()).amax() <= 1e-12 * v.amax());
    assert!(symmetric_eigenvalues(&v)[0] >= -1e-10 * v.trace());
    for c in &rep.coefficients {
        assert!(c.lower <= c.estimate && c.estimate <= c.upper);
        let se = c.se.unwrap();
        assert!((c.upper - c.estimate - 1.959963984540054 * se).abs() < 1e-12);
        assert!((c.hazard_ratio_lower - c.lower.exp()).abs() < 1e-15);
    }
}

#[test]
fn quantiles_match_order_statistics() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = rng_from_seed(12);
    for b in [2usize, 3, 10, 199, 200, 1000] {
        let reps: Vec<Vec<f64>> = (0..b).map(|_| vec![normal.sample(&mut rng), 1.0]).collect();
        let est = [0.25, 1.0];
        let mut diffs: Vec<f64> = reps.iter().map(|r| r[0] - est[0]).collect();
        diffs.sort_by(f64::total_cmp);
        let order = |q: f64| {
            let h = (b - 1) as f64 * q;
            (diffs[h.floor() as usize] + diffs[h.ceil() as usize]) / 2.0
        };
        let ci = basic_bootstrap_interval(&est, &reps, 0.1);
        assert_eq!(ci[0].0, est[0] - order(0.95));
        assert_eq!(ci[0].1, est[0] - order(0.05));
        assert_eq!(ci[1], (1.0, 1.0));
        assert_eq!(quantile_midpoint(&diffs, 0.05), order(0.05));
    }
}

/// Doubling n_o at n = 1000 moves standard errors by under 2%, and the
/// bootstrap width implies standard errors within 25% of the plug-in ones.
#[test]
fn plugin_stable_in_n_o_and_close_to_bootstrap() {
    let d = generate(&SimConfig::new(1000, 10, 77)).unwrap();
    let sgd = SgdConfig { seed: 1, ..SgdConfig::default() };
    let beta = fit_epochs(&d, &sgd).unwrap().estimate().clone();
    let base = PluginConfig { seed: 5, ..PluginConfig::default() };
    let a = plugin_ci(&beta, &d, &base).unwrap();
    let b = plugin_ci(&beta, &d, &PluginConfig { strata_per_obs: 2000, ..base.clone() }).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        let (sx, sy) = (x.se.unwrap(), y.se.unwrap());
        assert!((sx - sy).abs() / sy < 0.02, "{}: {sx} vs {sy}", x.name);
    }
    let boot = bootstrap_ci(&beta, &d, &sgd, &BootstrapConfig { resamples: 200, seed: 6, ..BootstrapConfig::default() })
        .unwrap();
    assert_eq!(boot.resamples_dropped, Some(0));
    let z = 1.959963984540054;
    for (x, y) in a.coefficients.iter().zip(&boot.coefficients) {
        let implied = (y.upper - y.lower) / (2.0 * z);
        let se = x.se.unwrap();
        assert!((implied - se).abs() / se < 0.25, "{}: plug-in {se}, bootstrap {implied}", x.name);
    }
}
