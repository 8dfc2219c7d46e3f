mod common;

use common::*;
use mmnl::elise::{elise_delta, elise_mji_bound, elise_qmc, mji_refresh_aux, GaussianFactor};
use mmnl::quasirandom::{mlhs_normal_draws, pseudo_normal_draws};
use nalgebra::{DMatrix, DVector};

/// Composite design row `[x_F, x_R]`, mean and block-diagonal covariance.
fn composite(f: &EliseFixture) -> (Vec<DVector<f64>>, DVector<f64>, DMatrix<f64>) {
    let occ = f.occasion();
    let p = f.l + f.k;
    let rows = (0..f.j)
        .map(|r| {
            DVector::from_fn(p, |i, _| {
                if i < f.l {
                    occ.fixed[r * f.l + i]
                } else {
                    occ.random[r * f.k + i - f.l]
                }
            })
        })
        .collect();
    let mut mean = DVector::zeros(p);
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..f.l {
        mean[i] = f.alpha.mean()[i];
        for c in 0..f.l {
            cov[(i, c)] = f.alpha.cov()[(i, c)];
        }
    }
    for i in 0..f.k {
        mean[f.l + i] = f.beta.mean()[i];
        for c in 0..f.k {
            cov[(f.l + i, f.l + c)] = f.beta.cov()[(i, c)];
        }
    }
    (rows, mean, cov)
}

/// Right-hand side of the auxiliary equation.
fn aux_equation(rows: &[DVector<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
    let abar = rows.iter().zip(a).fold(DVector::zeros(mean.len()), |acc, (x, w)| acc + x * *w);
    let u: Vec<f64> = rows.iter().map(|x| x.dot(mean) + 0.5 * (x - &abar * 2.0).dot(&(cov * x))).collect();
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn independent_fixed_point(rows: &[DVector<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>, start: Vec<f64>) -> Vec<f64> {
    let mut a = start;
    for _ in 0..20_000 {
        let next = aux_equation(rows, mean, cov, &a);
        let change = a.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        a = a.iter().zip(&next).map(|(x, y)| 0.75 * x + 0.25 * y).collect();
        if change < 1e-14 {
            break;
        }
    }
    a
}

#[test]
fn frozen_oracle_is_reproducible() {
    for (i, &(mean, se)) in ELISE_ORACLE.iter().enumerate() {
        let (m, s) = elise_monte_carlo(&elise_fixture(i), ELISE_ORACLE_DRAWS, ELISE_ORACLE_SEED);
        assert!((m - mean).abs() < 1e-12 && (s - se).abs() < 1e-12, "fixture {i}: {m} {s}");
    }
}

#[test]
fn fixture_shapes_cover_the_grid() {
    for j in [2, 3, 7] {
        assert!(ELISE_SHAPES.iter().any(|s| s.0 == j));
    }
    for k in [1, 2, 4] {
        assert!(ELISE_SHAPES.iter().any(|s| s.2 == k));
    }
    for l in [0, 2] {
        assert!(ELISE_SHAPES.iter().any(|s| s.1 == l));
    }
}

#[test]
fn delta_matches_its_closed_form() {
    for i in 0..ELISE_ORACLE.len() {
        let f = elise_fixture(i);
        let (rows, mean, cov) = composite(&f);
        let v: Vec<f64> = rows.iter().map(|x| x.dot(&mean)).collect();
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let g = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let p: Vec<f64> = v.iter().map(|x| (x - g).exp()).collect();
        let xbar = rows.iter().zip(&p).fold(DVector::zeros(mean.len()), |acc, (x, w)| acc + x * *w);
        let curvature: f64 = rows.iter().zip(&p).map(|(x, w)| w * (x - &xbar).dot(&(&cov * (x - &xbar)))).sum();
        let delta = elise_delta(&f.occasion(), &f.alpha, &f.beta).unwrap();
        assert!((delta - (g + 0.5 * curvature)).abs() < 1e-12, "fixture {i}");
    }
}

#[test]
fn mji_bound_holds_at_the_fixed_point() {
    for (i, &(oracle, se)) in ELISE_ORACLE.iter().enumerate() {
        let f = elise_fixture(i);
        let occ = f.occasion();
        let mut aux = vec![1.0 / f.j as f64; f.j];
        assert!(mji_refresh_aux(&occ, &f.alpha, &f.beta, &mut aux).unwrap().converged);
        let mji = elise_mji_bound(&occ, &f.alpha, &f.beta, &aux).unwrap();
        assert!(mji >= oracle - 3.0 * se, "fixture {i}: mji {mji} vs {oracle}");
    }
}

/// Over independent 64-draw batches the QMC estimate is centred on the
/// oracle, and MLHS beats pseudo-random draws of the same size.
#[test]
fn qmc_is_unbiased_with_reduced_variance() {
    const REPS: u64 = 150;
    for (i, &(oracle, se)) in ELISE_ORACLE.iter().enumerate() {
        let f = elise_fixture(i);
        let occ = f.occasion();
        let mut mlhs = Vec::new();
        let mut pseudo = Vec::new();
        for s in 0..REPS {
            let (a, b) = (1000 * i as u64 + 2 * s, 1000 * i as u64 + 2 * s + 1);
            mlhs.push(
                elise_qmc(&occ, &f.alpha, &f.beta, &mlhs_normal_draws(64, f.l, a).unwrap(), &mlhs_normal_draws(64, f.k, b).unwrap())
                    .unwrap(),
            );
            pseudo.push(
                elise_qmc(&occ, &f.alpha, &f.beta, &pseudo_normal_draws(64, f.l, a).unwrap(), &pseudo_normal_draws(64, f.k, b).unwrap())
                    .unwrap(),
            );
        }
        let mean = mlhs.iter().sum::<f64>() / REPS as f64;
        let var = mlhs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (REPS - 1) as f64;
        let spread = (var / REPS as f64 + se * se).sqrt();
        assert!((mean - oracle).abs() < 4.0 * spread, "fixture {i}: {mean} vs {oracle} ± {spread}");
        let rms = |v: &[f64]| (v.iter().map(|q| (q - oracle).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(rms(&mlhs) < 0.035, "fixture {i}: rms {}", rms(&mlhs));
        assert!(rms(&mlhs) < rms(&pseudo), "fixture {i}: {} vs {}", rms(&mlhs), rms(&pseudo));
    }
}

/// Halving every standard deviation should cut the delta-method bias by
/// roughly four, since the expansion is exact to second order.
#[test]
fn delta_bias_shrinks_quadratically() {
    for (i, &(oracle, _)) in ELISE_ORACLE.iter().enumerate() {
        let f = elise_fixture(i);
        let full = elise_delta(&f.occasion(), &f.alpha, &f.beta).unwrap() - oracle;
        let scaled = EliseFixture {
            alpha: GaussianFactor::new(f.alpha.mean().clone(), f.alpha.cov() * 0.25).unwrap(),
            beta: GaussianFactor::new(f.beta.mean().clone(), f.beta.cov() * 0.25).unwrap(),
            ..f
        };
        let (mc, se) = elise_monte_carlo(&scaled, 400_000, 3);
        let small = elise_delta(&scaled.occasion(), &scaled.alpha, &scaled.beta).unwrap() - mc;
        assert!(small.abs() < 0.02, "fixture {i}: {small}");
        assert!(small.abs() <= 0.4 * full.abs() + 4.0 * se, "fixture {i}: {small} vs {full}");
    }
}

#[test]
fn mji_bound_holds_for_any_simplex() {
    let mut r = rng(5);
    for i in 0..ELISE_ORACLE.len() {
        let f = elise_fixture(i);
        let (oracle, se) = ELISE_ORACLE[i];
        for _ in 0..5 {
            let raw: Vec<f64> = (0..f.j).map(|_| normal(&mut r).exp()).collect();
            let s: f64 = raw.iter().sum();
            let aux: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let bound = elise_mji_bound(&f.occasion(), &f.alpha, &f.beta, &aux).unwrap();
            assert!(bound >= oracle - 3.0 * se, "fixture {i}");
        }
    }
}

#[test]
fn auxiliary_fixed_point_is_start_independent() {
    for i in 0..ELISE_ORACLE.len() {
        let f = elise_fixture(i);
        let (rows, mean, cov) = composite(&f);
        let j = f.j;
        let mut corner = vec![0.0; j];
        corner[0] = 1.0;
        let ramp: Vec<f64> = (1..=j).map(|v| v as f64 * 2.0 / (j * (j + 1)) as f64).collect();
        let mut lib = vec![1.0 / j as f64; j];
        mji_refresh_aux(&f.occasion(), &f.alpha, &f.beta, &mut lib).unwrap();
        let residual = aux_equation(&rows, &mean, &cov, &lib)
            .iter()
            .zip(&lib)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(residual < 1e-7, "fixture {i}: residual {residual}");
        for start in [vec![1.0 / j as f64; j], corner, ramp] {
            let reference = independent_fixed_point(&rows, &mean, &cov, start);
            for (a, b) in lib.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-6, "fixture {i}: {lib:?} vs {reference:?}");
            }
        }
    }
}

#[test]
fn zero_variance_bound_is_tight_at_the_softmax() {
    let f = elise_fixture(9);
    let alpha = GaussianFactor::point(f.alpha.mean().clone());
    let beta = GaussianFactor::point(f.beta.mean().clone());
    let occ = f.occasion();
    let (rows, mean, _) = composite(&f);
    let v: Vec<f64> = rows.iter().map(|x| x.dot(&mean)).collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    let softmax: Vec<f64> = v.iter().map(|x| (x - g).exp()).collect();
    let at_softmax = elise_mji_bound(&occ, &alpha, &beta, &softmax).unwrap();
    assert!((at_softmax - g).abs() < 1e-12);
    let uniform = vec![1.0 / f.j as f64; f.j];
    assert!(elise_mji_bound(&occ, &alpha, &beta, &uniform).unwrap() >= g - 1e-12);
    let mut aux = uniform;
    mji_refresh_aux(&occ, &alpha, &beta, &mut aux).unwrap();
    for (a, s) in aux.iter().zip(&softmax) {
        assert!((a - s).abs() < 1e-7);
    }
}

#[test]
fn single_alternative_treatments_coincide() {
    let mut r = rng(9);
    let data = random_individual(&mut r, 1, 2, 3, 1, 1.0);
    let occ = data.individual(0).occasion(0);
    let alpha = GaussianFactor::new(DVector::from_vec(vec![0.3, -0.2]), random_spd(&mut r, 2, 0.5)).unwrap();
    let beta = GaussianFactor::new(DVector::from_vec(vec![1.0, 0.5, -1.0]), random_spd(&mut r, 3, 0.5)).unwrap();
    let exact: f64 = occ.fixed.iter().zip(alpha.mean().iter()).map(|(x, m)| x * m).sum::<f64>()
        + occ.random.iter().zip(beta.mean().iter()).map(|(x, m)| x * m).sum::<f64>();
    let delta = elise_delta(&occ, &alpha, &beta).unwrap();
    let (da, db) = (mlhs_normal_draws(16, 2, 1).unwrap(), mlhs_normal_draws(16, 3, 2).unwrap());
    let qmc = elise_qmc(&occ, &alpha, &beta, &da, &db).unwrap();
    let mji = elise_mji_bound(&occ, &alpha, &beta, &[1.0]).unwrap();
    assert!((delta - exact).abs() < 1e-12);
    assert!((mji - exact).abs() < 1e-12);
    // LSE is linear here, so QMC returns the utility at the draws' sample mean.
    let xi_bar = |b: &mmnl::quasirandom::DrawBatch| {
        DVector::from_fn(b.dim(), |i, _| b.rows().map(|r| r[i]).sum::<f64>() / b.num_draws() as f64)
    };
    let ga = alpha.mean() + alpha.chol() * xi_bar(&da);
    let gb = beta.mean() + beta.chol() * xi_bar(&db);
    let linear: f64 = occ.fixed.iter().zip(ga.iter()).map(|(x, m)| x * m).sum::<f64>()
        + occ.random.iter().zip(gb.iter()).map(|(x, m)| x * m).sum::<f64>();
    assert!((qmc - linear).abs() < 1e-12);
    assert!((delta - qmc).abs() < 0.1);
}

#[test]
#[ignore = "prints the frozen oracle table"]
fn print_oracle_table() {
    for i in 0..ELISE_SHAPES.len() {
        let (m, se) = elise_monte_carlo(&elise_fixture(i), ELISE_ORACLE_DRAWS, ELISE_ORACLE_SEED);
        println!("    ({m:.15e}, {se:.15e}),");
    }
}
