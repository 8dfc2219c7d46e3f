//! Compares the posterior predictive choice distributions of MCMC, VB and
//! MSLE on a validation sample against the true predictive distribution.
//!
//! ```text
//! cargo run --release --example predictive_evaluation
//! ```

use mmnl::data::{build_true_population, generate_dataset, generate_validation, ScenarioConfig};
use mmnl::eval::{mean_tvd, posterior_predictive_distribution, true_choice_distribution, PredictiveConfig};
use mmnl::experiment::{estimate_with, Method, MethodSettings};
use mmnl::mcmc::McmcConfig;
use mmnl::vb::Variant;

fn main() -> mmnl::Result<()> {
    let config = ScenarioConfig::new(1, 300, 5, 8)?;
    let pop = build_true_population(&config)?;
    let data = generate_dataset(&config, &pop)?;
    let validation = generate_validation(&config, &pop, 25)?;
    let counts = PredictiveConfig::default();
    let truth = true_choice_distribution(&validation, &pop, counts.true_draws, 1)?;

    let settings = MethodSettings {
        mcmc: McmcConfig {
            iterations: 6000,
            burn_in: 3000,
            ..McmcConfig::default()
        },
        ..MethodSettings::default()
    };
    for method in [Method::Vb(Variant::NcvmpDelta), Method::Msle, Method::Mcmc] {
        let est = estimate_with(&data, method, &settings, 2)?.estimate;
        let predicted = posterior_predictive_distribution(
            &validation,
            &est.posterior,
            counts.outer_for(&est.posterior),
            counts.inner_draws,
            3,
        )?;
        println!("{:<16} TVD {:.3} %", method.label(), 100.0 * mean_tvd(&truth, &predicted)?);
    }
    println!("first validation choice set, true probabilities: {:?}", truth[0]);
    Ok(())
}
