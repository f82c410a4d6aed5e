//! Full degrade/project/evaluate run driven by a TOML configuration.
//!
//! Pass a config path, or run without arguments for a small built-in Lorenz
//! setup.

use trajproj::config::RunConfig;
use trajproj::harness::run_experiment;

const SMALL: &str = r#"
system = "lorenz"

[generator]
steps = 256
count = 4
first_seed = 100

[degrade]
kind = "gaussian-noise"
noise_sigma = 1.3e-3
seed = 7

[projection]
methods = ["constrained", "relaxed", "lbfgs"]

[projection.lbfgs]
lambda = 1e6
max_iters = 2000
"#;

fn main() -> trajproj::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::parse(SMALL)?,
    };
    let report = run_experiment(&cfg.experiment()?)?;
    print!("{}", report.to_table());
    Ok(())
}
