//! Runs the Metropolis-within-Gibbs sampler on a scenario-3 dataset, streams
//! the retained draws to CSV and summarizes the posterior.
//!
//! ```text
//! cargo run --release --example mcmc_sampling -- [N] [iterations]
//! ```

use mmnl::data::{build_true_population, generate_dataset, ScenarioConfig};
use mmnl::eval::parameter_errors;
use mmnl::mcmc::{draw_file_path, read_draw_file, run_mcmc, McmcConfig};
use mmnl::vb::Hyperparameters;

fn main() -> mmnl::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let n = args.first().copied().unwrap_or(200);
    let iterations = args.get(1).copied().unwrap_or(6000);
    let config = ScenarioConfig::new(3, n, 5, 3)?;
    let pop = build_true_population(&config)?;
    let data = generate_dataset(&config, &pop)?;
    let hyper = Hyperparameters::diffuse(data.num_fixed(), data.num_random());

    let dir = std::path::PathBuf::from("mcmc_draws");
    let mcmc = McmcConfig {
        iterations,
        burn_in: iterations / 2,
        draw_dir: Some(dir.clone()),
        seed: 9,
        ..McmcConfig::default()
    };
    let res = run_mcmc(&data, &hyper, &mcmc)?;
    for (c, chain) in res.chains.iter().enumerate() {
        println!(
            "chain {c}: beta acceptance {:.3}, alpha acceptance {:.3}, final rho_beta {:.4}",
            chain.beta_acceptance, chain.alpha_acceptance, chain.final_rho_beta
        );
    }
    let stored = read_draw_file(&draw_file_path(&dir, 0), data.num_fixed(), data.num_random())?;
    println!("{} retained draws per chain ({} read back from CSV)", mcmc.retained_per_chain(), stored.len());
    let est = res.point_estimates()?;
    let err = parameter_errors(&est, &pop)?;
    println!("posterior mean alpha: {:?}", est.alpha.as_slice());
    println!("true alpha:           {:?}", pop.alpha.as_slice());
    println!("RMSE(alpha) {:.4}  RMSE(zeta) {:.4}  RMSE(Omega) {:.4}", err.rmse_alpha.unwrap_or(0.0), err.rmse_zeta, err.rmse_omega);
    println!("wall time {:.1} s", res.wall_time_secs);
    Ok(())
}
