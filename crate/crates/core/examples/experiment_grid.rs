//! Runs a small resumable simulation grid and prints the summary table.
//!
//! ```text
//! cargo run --release --example experiment_grid -- [out_dir]
//! ```

use mmnl::experiment::{run_experiment, ExperimentConfig};

fn main() -> mmnl::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "experiment_results".into());
    let config = ExperimentConfig::from_toml(&format!(
        r#"
scenarios = [1]
individuals = [100]
occasions = [5]
replications = 2
methods = ["VB-NCVMP-Delta", "VB-NCVMP-MJI", "MSLE"]
output_dir = "{out}"

[msle]
draws = 100

[predictive]
true_draws = 100000
inner_draws = 1000
"#
    ))?;
    let outcome = run_experiment(&config, None)?;
    println!("{} cells done, {} resumed, {} failed", outcome.results.len(), outcome.resumed, outcome.failures.len());
    let table = outcome.tables.iter().find(|p| p.extension().is_some_and(|e| e == "txt")).expect("text table");
    print!("{}", std::fs::read_to_string(table).expect("readable table"));
    Ok(())
}
