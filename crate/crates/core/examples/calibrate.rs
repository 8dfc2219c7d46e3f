//! Calibrates the attribute scale of each scenario so that roughly half of
//! all simulated choices deviate from the deterministically best alternative.
//!
//! ```text
//! cargo run --release --example calibrate -- [N] [T] [seed]
//! ```

use mmnl::data::{
    build_true_population, calibrate_attribute_scale, default_attribute_scale, generate_dataset, measure_error_rate,
    ScenarioConfig,
};

fn main() -> mmnl::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n = args.first().copied().unwrap_or(20_000) as usize;
    let t = args.get(1).copied().unwrap_or(5) as usize;
    let seed = args.get(2).copied().unwrap_or(1);

    println!("scenario  calibrated_scale  default_scale  error_rate_at_default");
    for scenario in 1..=4u8 {
        let scale = calibrate_attribute_scale(scenario, 0.5, n, t, seed)?;
        let config = ScenarioConfig::new(scenario, n, t, seed)?;
        let pop = build_true_population(&config)?;
        let data = generate_dataset(&config, &pop)?;
        let rate = measure_error_rate(&data, &pop)?;
        println!(
            "{scenario:>8}  {scale:>16.4}  {:>13.4}  {rate:>21.4}",
            default_attribute_scale(scenario)
        );
    }
    Ok(())
}
