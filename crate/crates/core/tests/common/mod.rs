use bigsurv::Dataset;

/// Direct nested-sum partial likelihood with Breslow ties and entry times.
pub fn naive(beta: &[f64], data: &Dataset, members: &[usize]) -> (f64, Vec<f64>) {
    let p = beta.len();
    let eta = |j: usize| data.covariates(j).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
    let mut ll = 0.0;
    let mut g = vec![0.0; p];
    for &i in members {
        if !data.is_event(i) {
            continue;
        }
        let t = data.time(i);
        let risk: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&j| data.time(j) >= t && data.entry(j) <= t)
            .collect();
        let w: Vec<f64> = risk.iter().map(|&j| eta(j).exp()).collect();
        let total: f64 = w.iter().sum();
        ll += eta(i) - total.ln();
        for k in 0..p {
            let mean: f64 = risk.iter().zip(&w).map(|(&j, wj)| wj * data.covariates(j)[k]).sum::<f64>() / total;
            g[k] += data.covariates(i)[k] - mean;
        }
    }
    (ll, g)
}
