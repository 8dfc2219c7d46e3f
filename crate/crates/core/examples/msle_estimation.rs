//! Maximum simulated likelihood with MLHS draws: point estimates, asymptotic
//! standard errors and conditional individual-level estimates.
//!
//! ```text
//! cargo run --release --example msle_estimation -- [N] [draws]
//! ```

use mmnl::data::{build_true_population, generate_dataset, ScenarioConfig};
use mmnl::eval::parameter_errors;
use mmnl::msle::{run_msle, MslConfig};

fn main() -> mmnl::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let n = args.first().copied().unwrap_or(300);
    let draws = args.get(1).copied().unwrap_or(200);
    let config = ScenarioConfig::new(1, n, 5, 21)?;
    let pop = build_true_population(&config)?;
    let data = generate_dataset(&config, &pop)?;

    let res = run_msle(&data, &MslConfig { draws, ..MslConfig::default() })?;
    let est = &res.estimate;
    println!(
        "log-likelihood {:.2} -> {:.2} in {} iterations (converged: {})",
        est.start_loglik, est.loglik, est.iterations, est.converged
    );
    let se = est.var_phi.diagonal().map(|v| v.max(0.0).sqrt());
    for (k, z) in est.zeta().iter().enumerate() {
        println!("zeta[{k}] = {z:>7.4} (s.e. {:.4}), true sample mean {:.4}", se[k], pop.sample_mean[k]);
    }
    let err = parameter_errors(&res.point_estimates(), &pop)?;
    println!("RMSE(zeta) {:.4}  RMSE(Omega) {:.4}  RMSE(beta) {:.4}", err.rmse_zeta, err.rmse_omega, err.rmse_beta);
    println!("individuals with degenerate weights: {}", res.zero_weight_individuals);
    Ok(())
}
