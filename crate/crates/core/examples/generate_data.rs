//! Simulates a training and a validation sample for one scenario and writes
//! them as long-format CSV files with JSON sidecars.
//!
//! ```text
//! cargo run --release --example generate_data -- [scenario] [N] [T] [out_dir]
//! ```

use std::path::PathBuf;

use mmnl::data::{
    build_true_population, generate_dataset, generate_validation, load_dataset, measure_error_rate, save_dataset,
    ScenarioConfig,
};

fn main() -> mmnl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario: u8 = args.first().map_or(3, |s| s.parse().expect("scenario id"));
    let n: usize = args.get(1).map_or(200, |s| s.parse().expect("N"));
    let t: usize = args.get(2).map_or(5, |s| s.parse().expect("T"));
    let dir = PathBuf::from(args.get(3).map_or("generated", String::as_str));

    let config = ScenarioConfig::new(scenario, n, t, 42)?;
    let pop = build_true_population(&config)?;
    let train = generate_dataset(&config, &pop)?;
    let validation = generate_validation(&config, &pop, 25)?;

    let train_path = dir.join("train.csv");
    save_dataset(&train_path, &train, Some(&config), Some(&pop))?;
    save_dataset(&dir.join("validation.csv"), &validation, Some(&config), Some(&pop))?;

    let reloaded = load_dataset(&train_path)?;
    assert_eq!(reloaded.dataset, train);
    println!(
        "scenario {scenario}: {} individuals x {} occasions, J = {}, L = {}, K = {}",
        train.num_individuals(),
        t,
        train.num_alternatives(),
        train.num_fixed(),
        train.num_random()
    );
    println!("fixed columns:  {:?}", train.fixed_names());
    println!("random columns: {:?}", train.random_names());
    println!("error rate: {:.3}", measure_error_rate(&train, &pop)?);
    println!("true zeta:        {:?}", pop.zeta.as_slice());
    println!("sample mean zeta: {:?}", pop.sample_mean.as_slice());
    println!("wrote {}", dir.display());
    Ok(())
}
