//! Concordance of SGD fits across strata sizes versus Newton.

use bigsurv::simulation::{generate, SimConfig};
use bigsurv::{concordance_index, fit_epochs, newton_fit, NewtonConfig, SgdConfig};

fn main() -> bigsurv::Result<()> {
    let data = generate(&SimConfig { p_c: 0.7, ..SimConfig::new(3000, 8, 12) })?;
    let newton = newton_fit(&data, &NewtonConfig::default())?;
    println!("newton     C = {:.4}", concordance_index(&newton.beta, &data)?);
    for s in [2, 5, 10, 20] {
        let fit = fit_epochs(&data, &SgdConfig { strata_size: s, ..SgdConfig::default() })?;
        println!("sgd s = {s:<2} C = {:.4}", concordance_index(fit.estimate(), &data)?);
    }
    Ok(())
}
