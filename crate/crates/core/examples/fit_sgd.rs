//! In-memory averaged AMSGrad on simulated data.
//!
//! cargo run --release --example fit_sgd

use bigsurv::simulation::{generate, mse, SimConfig};
use bigsurv::{concordance_index, fit_epochs, Optimizer, SgdConfig};

fn main() -> bigsurv::Result<()> {
    let sim = SimConfig { beta_star: vec![1.0, -0.5, 0.0, 0.25], ..SimConfig::new(5000, 4, 1) };
    let data = generate(&sim)?;

    for (label, cfg) in [
        ("AveAMSGrad", SgdConfig::default()),
        ("AveSGD", SgdConfig { optimizer: Optimizer::Plain, lr_const: 1.5, ..SgdConfig::default() }),
        ("AMSGrad, K=4", SgdConfig { batch_size: 4, epochs: 200, ..SgdConfig::default() }),
    ] {
        let fit = fit_epochs(&data, &cfg)?;
        println!(
            "{label:<14} beta {:?}  mse {:.2e}  C {:.3}  steps {}",
            fit.estimate().iter().map(|b| (b * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            mse(fit.estimate(), &sim.beta_star)?,
            concordance_index(fit.estimate(), &data)?,
            fit.iterations
        );
    }
    Ok(())
}
