//! Compares the three treatments of the expected log-sum-exp term on a
//! single choice set against a brute-force Monte Carlo average.
//!
//! ```text
//! cargo run --release --example elise_treatments
//! ```

use mmnl::data::{build_true_population, generate_dataset, ScenarioConfig};
use mmnl::elise::{elise_delta, elise_mji_bound, elise_qmc, mji_refresh_aux, GaussianFactor};
use mmnl::mnl::lse;
use mmnl::quasirandom::{mlhs_normal_draws, pseudo_normal_draws};
use nalgebra::{DMatrix, DVector};

fn main() -> mmnl::Result<()> {
    let config = ScenarioConfig::new(3, 1, 1, 5)?;
    let pop = build_true_population(&config)?;
    let data = generate_dataset(&config, &pop)?;
    let occ = data.individual(0).occasion(0);
    let (l, k, j) = (occ.num_fixed(), occ.num_random(), occ.num_alternatives);

    let alpha = GaussianFactor::new(pop.alpha.clone(), DMatrix::identity(l, l) * 0.05)?;
    let beta = GaussianFactor::new(pop.zeta.clone(), pop.omega.clone())?;

    let draws = 200_000;
    let a = pseudo_normal_draws(draws, l, 1)?;
    let b = pseudo_normal_draws(draws, k, 2)?;
    let mut sum = 0.0;
    let mut v = vec![0.0; j];
    for d in 0..draws {
        let av = alpha.mean() + alpha.chol() * DVector::from_column_slice(a.draw(d));
        let bv = beta.mean() + beta.chol() * DVector::from_column_slice(b.draw(d));
        mmnl::mnl::utilities(&occ, av.as_slice(), bv.as_slice(), &mut v);
        sum += lse(&v);
    }
    let oracle = sum / draws as f64;

    let delta = elise_delta(&occ, &alpha, &beta)?;
    let qmc = elise_qmc(&occ, &alpha, &beta, &mlhs_normal_draws(64, l, 3)?, &mlhs_normal_draws(64, k, 4)?)?;
    let mut aux = vec![1.0 / j as f64; j];
    let refresh = mji_refresh_aux(&occ, &alpha, &beta, &mut aux)?;
    let mji = elise_mji_bound(&occ, &alpha, &beta, &aux)?;

    println!("Monte Carlo ({draws} draws): {oracle:.4}");
    println!("delta method:               {delta:.4}");
    println!("QMC, 64 MLHS draws:         {qmc:.4}");
    println!("MJI upper bound:            {mji:.4}  ({} fixed-point sweeps)", refresh.sweeps);
    Ok(())
}
