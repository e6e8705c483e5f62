//! Newton-Raphson on the full partial likelihood, with and without
//! compensated summation and standardization.

use bigsurv::simulation::{generate, SimConfig};
use bigsurv::{newton_fit, NewtonConfig};

fn main() -> bigsurv::Result<()> {
    let data = generate(&SimConfig::new(20_000, 5, 9))?;
    for cfg in [
        NewtonConfig::default(),
        NewtonConfig { compensated: false, ..NewtonConfig::default() },
        NewtonConfig { standardize: true, ..NewtonConfig::default() },
    ] {
        let r = newton_fit(&data, &cfg)?;
        println!(
            "compensated={} standardize={}: {} iterations, loglik {:.6}, |score| {:.1e}",
            cfg.compensated, cfg.standardize, r.iterations, r.loglik, r.score_norm
        );
        for (b, se) in r.beta.iter().zip(&r.standard_errors) {
            println!("    {b:>9.5}  (se {se:.5})");
        }
    }
    Ok(())
}
