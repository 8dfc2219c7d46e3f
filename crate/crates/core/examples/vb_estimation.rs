//! Fits every variational variant to one scenario-1 dataset, reports
//! parameter recovery and writes the per-iteration trace of each run.
//!
//! ```text
//! cargo run --release --example vb_estimation -- [N] [T]
//! ```

use mmnl::data::{build_true_population, generate_dataset, ScenarioConfig};
use mmnl::eval::parameter_errors;
use mmnl::vb::{run_vb, Hyperparameters, Variant, VbConfig};

fn main() -> mmnl::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let n = args.first().copied().unwrap_or(300);
    let t = args.get(1).copied().unwrap_or(5);
    let config = ScenarioConfig::new(1, n, t, 11)?;
    let pop = build_true_population(&config)?;
    let data = generate_dataset(&config, &pop)?;
    let hyper = Hyperparameters::diffuse(data.num_fixed(), data.num_random());

    println!("{:<16} {:>5} {:>9} {:>10} {:>11} {:>10}", "variant", "iter", "time [s]", "RMSE(zeta)", "RMSE(Omega)", "RMSE(beta)");
    for variant in Variant::ALL {
        let res = run_vb(&data, &hyper, variant, &VbConfig::default())?;
        let err = parameter_errors(&res.point_estimates()?, &pop)?;
        println!(
            "{:<16} {:>5} {:>9.2} {:>10.4} {:>11.4} {:>10.4}",
            variant.label(),
            res.iterations,
            res.wall_time_secs,
            err.rmse_zeta,
            err.rmse_omega,
            err.rmse_beta
        );
        res.trace.write_csv(std::path::Path::new(&format!("trace_{}.csv", variant.key())))?;
    }
    Ok(())
}
