//! A small experiment grid: MSE and concordance by strata size and method.
//!
//! cargo run --release --example simulation_grid -- [replicates]

use bigsurv::simulation::{run_grid, GridConfig, Method};
use bigsurv::SgdConfig;

fn main() -> bigsurv::Result<()> {
    let replicates = std::env::args().nth(1).map_or(10, |a| a.parse().expect("replicates"));
    let grid = GridConfig {
        methods: vec![Method::Sgd, Method::Streaming, Method::Newton],
        ns: vec![1000, 3000],
        ps: vec![10],
        ss: vec![2, 5, 20],
        replicates,
        sgd: SgdConfig { epochs: 50, ..SgdConfig::default() },
        ..GridConfig::default()
    };
    let result = run_grid(&grid)?;
    println!("{:<10} {:>5} {:>4} {:>10} {:>8} {:>8}", "method", "n", "s", "mse", "C", "secs");
    for c in result.summarize() {
        println!(
            "{:<10} {:>5} {:>4} {:>10.2e} {:>8.4} {:>8.3}",
            c.method.as_str(),
            c.n,
            c.s.map_or("-".into(), |s| s.to_string()),
            c.mse_mean.unwrap_or(f64::NAN),
            c.concordance_mean.unwrap_or(f64::NAN),
            c.wall_seconds_mean
        );
    }
    let path = std::env::temp_dir().join("bigsurv-grid.csv");
    result.write_csv(std::fs::File::create(&path)?)?;
    println!("long table: {}", path.display());
    Ok(())
}
