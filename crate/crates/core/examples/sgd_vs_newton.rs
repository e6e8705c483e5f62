//! Fits simulated data by averaged AMSGrad and by Newton, and compares.
//!
//! cargo run --example sgd_vs_newton -- [replicates] [epochs]

use bigsurv::simulation::{generate, mse, SimConfig};
use bigsurv::{fit_epochs, newton_fit, NewtonConfig, SgdConfig};

fn main() -> bigsurv::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: u64 = args.next().map_or(5, |a| a.parse().expect("replicates"));
    let epochs: usize = args.next().map_or(100, |a| a.parse().expect("epochs"));
    println!("rep  max|sgd-newton|  mse(sgd)  mse(newton)  seconds");
    for r in 0..reps {
        let data = generate(&SimConfig::new(1000, 10, r))?;
        let truth = vec![1.0; 10];
        let sgd = fit_epochs(&data, &SgdConfig { epochs, seed: r, ..SgdConfig::default() })?;
        let newton = newton_fit(&data, &NewtonConfig::default())?;
        let gap = sgd
            .estimate()
            .iter()
            .zip(newton.beta.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!(
            "{r:>3}  {gap:>14.4}  {:>8.5}  {:>11.5}  {:.2}",
            mse(sgd.estimate(), &truth)?,
            mse(&newton.beta, &truth)?,
            sgd.elapsed_seconds
        );
    }
    Ok(())
}
