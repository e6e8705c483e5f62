//! Plug-in and bootstrap intervals around the averaged SGD estimate.
//!
//! cargo run --release --example confidence_intervals

use bigsurv::simulation::{generate, SimConfig};
use bigsurv::{bootstrap_ci, fit_epochs, plugin_ci, BootstrapConfig, PluginConfig, SgdConfig};

fn main() -> bigsurv::Result<()> {
    let sim = SimConfig { beta_star: vec![0.5, -0.5, 1.0], ..SimConfig::new(1000, 3, 4) };
    let data = generate(&sim)?;
    let sgd = SgdConfig::default();
    let beta = fit_epochs(&data, &sgd)?.estimate().clone();

    let plugin = plugin_ci(&beta, &data, &PluginConfig::default())?;
    let boot = bootstrap_ci(&beta, &data, &sgd, &BootstrapConfig { resamples: 200, ..BootstrapConfig::default() })?;

    println!("{:<4} {:>7} {:>8} {:>20} {:>20}", "", "truth", "beta", "plug-in 95%", "bootstrap 95%");
    for k in 0..beta.len() {
        let (p, b) = (&plugin.coefficients[k], &boot.coefficients[k]);
        println!(
            "{:<4} {:>7.3} {:>8.4}   ({:>7.4}, {:>7.4})   ({:>7.4}, {:>7.4})",
            p.name, sim.beta_star[k], p.estimate, p.lower, p.upper, b.lower, b.upper
        );
    }
    println!("hazard ratios: {:?}", plugin.coefficients.iter().map(|c| c.hazard_ratio).collect::<Vec<_>>());
    println!("bootstrap: {}", boot.notes.join("; "));
    Ok(())
}
