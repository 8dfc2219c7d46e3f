mod common;

use common::*;
use mmnl::data::ChoiceDataset;
use mmnl::estimate::{PopulationDraw, PopulationPosterior};
use mmnl::eval::{
    mixed_logit_distribution, posterior_predictive_distribution, rmse, summarize_replications, tvd, ParameterErrors,
    ReplicationMetrics,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

fn simplex(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

proptest! {
    #[test]
    fn tvd_is_a_bounded_metric(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 3)) {
        let (p, q, r) = (simplex(&raw[0]), simplex(&raw[1]), simplex(&raw[2]));
        let pq = tvd(&p, &q).unwrap();
        prop_assert!((pq - tvd(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        prop_assert!(tvd(&p, &r).unwrap() <= pq + tvd(&q, &r).unwrap() + 1e-12);
    }

    #[test]
    fn rmse_ignores_element_order(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20), seed in any::<u64>()) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.iter().cloned().unzip();
        let mut idx: Vec<usize> = (0..a.len()).collect();
        idx.shuffle(&mut rng(seed));
        let pa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let pb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let x = rmse(&a, &b).unwrap();
        prop_assert!((x - rmse(&pa, &pb).unwrap()).abs() < 1e-12);
        prop_assert!(x >= 0.0);
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn metric_inputs_are_validated() {
    assert!(tvd(&[0.5, 0.5], &[1.0]).is_err());
    assert!(tvd(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    assert!(rmse(&[], &[]).is_err());
    assert_eq!(rmse(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0f64.sqrt());
}

/// Probabilists' Gauss-Hermite rule via the Golub-Welsch eigenproblem.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect()
}

/// Binary choice with one random coefficient: `P_c = E[softmax(β x)_c]`.
fn binary_oracle(x: [f64; 2], zeta: f64, omega: f64) -> [f64; 2] {
    static RULE: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    let p1: f64 = RULE
        .get_or_init(|| gauss_hermite(80))
        .iter()
        .map(|(node, w)| {
            let b = zeta + omega.sqrt() * node;
            w / (1.0 + (b * (x[0] - x[1])).exp())
        })
        .sum();
    [1.0 - p1, p1]
}

fn binary_set(x: [f64; 2]) -> ChoiceDataset {
    ChoiceDataset::new(2, vec![], vec!["x".into()], &[1], vec![], x.to_vec(), vec![0]).unwrap()
}

#[test]
fn gauss_hermite_rule_integrates_moments() {
    let rule = gauss_hermite(80);
    let moment = |p: i32| rule.iter().map(|(x, w)| w * x.powi(p)).sum::<f64>();
    assert!((moment(0) - 1.0).abs() < 1e-12);
    assert!((moment(2) - 1.0).abs() < 1e-10);
    assert!((moment(4) - 3.0).abs() < 1e-9);
}

#[test]
fn mixed_logit_matches_quadrature() {
    for (x, zeta, omega) in [([1.0, -0.5], 0.7, 1.5), ([0.3, 1.2], -1.0, 0.4), ([2.0, 0.0], 0.0, 3.0)] {
        let p = mixed_logit_distribution(&binary_set(x), &[], &[zeta], &DMatrix::from_element(1, 1, omega), 1_000_000, 3)
            .unwrap();
        let oracle = binary_oracle(x, zeta, omega);
        for c in 0..2 {
            assert!((p[0][c] - oracle[c]).abs() < 0.002, "{:?} vs {oracle:?}", p[0]);
        }
    }
}

#[test]
fn zero_covariance_gives_plain_logit() {
    let mut r = rng(1);
    let data = random_panel(&mut r, 3, 2, 4, 1, 2, 1.0);
    let (alpha, zeta) = ([0.3], [0.5, -1.0]);
    let p = mixed_logit_distribution(&data, &alpha, &zeta, &DMatrix::zeros(2, 2), 10, 1).unwrap();
    for (o, occ) in data.individuals().flat_map(|i| i.occasions().collect::<Vec<_>>()).enumerate() {
        let e: Vec<f64> = (0..4)
            .map(|c| (alpha[0] * occ.fixed[c] + zeta[0] * occ.random[2 * c] + zeta[1] * occ.random[2 * c + 1]).exp())
            .collect();
        let s: f64 = e.iter().sum();
        for c in 0..4 {
            assert!((p[o][c] - e[c] / s).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_alternatives_are_equiprobable() {
    let row = [0.4, -1.1];
    let random: Vec<f64> = (0..3).flat_map(|_| row).collect();
    let data = ChoiceDataset::new(3, vec![], vec!["a".into(), "b".into()], &[1], vec![], random, vec![1]).unwrap();
    let omega = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let p = mixed_logit_distribution(&data, &[], &[1.0, 2.0], &omega, 5000, 2).unwrap();
    for c in 0..3 {
        assert!((p[0][c] - 1.0 / 3.0).abs() < 1e-12);
    }
}

/// Nested Monte Carlo over an inverse-gamma/normal posterior, with the inner
/// integral done by quadrature.
#[test]
fn posterior_predictive_matches_nested_oracle() {
    let x = [1.0, -0.2];
    let data = binary_set(x);
    let (mu, s2, w, theta): (f64, f64, f64, f64) = (0.5, 0.09, 12.0, 8.0);
    let mut r = rng(2);
    let outer = 20_000;
    let mut oracle = 0.0;
    let gamma = Gamma::new(0.5 * w, 1.0).unwrap();
    for _ in 0..outer {
        let zeta = mu + s2.sqrt() * normal(&mut r);
        let omega = 0.5 * theta / gamma.sample(&mut r);
        oracle += binary_oracle(x, zeta, omega)[0];
    }
    oracle /= outer as f64;
    let post = PopulationPosterior::Variational {
        mu_alpha: DVector::zeros(0),
        sigma_alpha: DMatrix::zeros(0, 0),
        mu_zeta: DVector::from_element(1, mu),
        sigma_zeta: DMatrix::from_element(1, 1, s2),
        w,
        theta: DMatrix::from_element(1, 1, theta),
    };
    let p = posterior_predictive_distribution(&data, &post, 2000, 2000, 5).unwrap();
    assert!((p[0][0] - oracle).abs() < 0.01, "{} vs {oracle}", p[0][0]);

    let draws = vec![
        PopulationDraw { alpha: DVector::zeros(0), zeta: DVector::from_element(1, 0.2), omega: DMatrix::from_element(1, 1, 0.5) },
        PopulationDraw { alpha: DVector::zeros(0), zeta: DVector::from_element(1, 1.4), omega: DMatrix::from_element(1, 1, 2.0) },
    ];
    let exact = 0.5 * (binary_oracle(x, 0.2, 0.5)[0] + binary_oracle(x, 1.4, 2.0)[0]);
    let p = posterior_predictive_distribution(&data, &PopulationPosterior::Draws { draws }, 2, 200_000, 6).unwrap();
    assert!((p[0][0] - exact).abs() < 0.005, "{} vs {exact}", p[0][0]);
}

#[test]
fn degenerate_variational_posterior_is_a_point_mass() {
    let mut r = rng(3);
    let data = random_panel(&mut r, 4, 2, 3, 1, 2, 1.0);
    let omega = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let w = 1e7;
    let post = PopulationPosterior::Variational {
        mu_alpha: DVector::from_element(1, 0.4),
        sigma_alpha: DMatrix::from_element(1, 1, 1e-14),
        mu_zeta: DVector::from_vec(vec![0.5, -0.3]),
        sigma_zeta: DMatrix::identity(2, 2) * 1e-14,
        w,
        theta: &omega * (w - 3.0),
    };
    let p = posterior_predictive_distribution(&data, &post, 50, 20_000, 4).unwrap();
    let q = mixed_logit_distribution(&data, &[0.4], &[0.5, -0.3], &omega, 1_000_000, 4).unwrap();
    for (a, b) in p.iter().zip(&q) {
        assert!(tvd(a, b).unwrap() < 0.005);
    }
}

#[test]
fn predictive_rows_are_distributions_for_every_posterior_kind() {
    let (data, _) = scenario(3, 25, 3, 4);
    let eye = DMatrix::identity(4, 4);
    let l = data.num_fixed();
    let phi_len = l + 4 + 10;
    let mut phi = DVector::zeros(phi_len);
    for i in 0..4 {
        phi[l + 4 + i * (i + 1) / 2 + i] = 0.7;
    }
    let kinds = [
        PopulationPosterior::Variational {
            mu_alpha: DVector::zeros(l),
            sigma_alpha: DMatrix::identity(l, l) * 0.01,
            mu_zeta: DVector::zeros(4),
            sigma_zeta: &eye * 0.01,
            w: 30.0,
            theta: &eye * 25.0,
        },
        PopulationPosterior::Draws {
            draws: vec![PopulationDraw { alpha: DVector::zeros(l), zeta: DVector::zeros(4), omega: eye.clone() }; 3],
        },
        PopulationPosterior::Asymptotic { num_fixed: l, num_random: 4, phi, cov: DMatrix::identity(phi_len, phi_len) * 1e-3 },
    ];
    for post in &kinds {
        let p = posterior_predictive_distribution(&data, post, 20, 50, 1).unwrap();
        assert_eq!(p.len(), data.total_occasions());
        for row in &p {
            assert_eq!(row.len(), data.num_alternatives());
            assert!(row.iter().all(|x| *x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(p, posterior_predictive_distribution(&data, post, 20, 50, 1).unwrap());
    }
}

fn report(method: &str, replication: usize, value: f64, alpha: Option<f64>) -> ReplicationMetrics {
    ReplicationMetrics {
        method: method.into(),
        replication,
        wall_time_secs: value,
        errors: ParameterErrors { rmse_alpha: alpha, rmse_zeta: value, rmse_omega: 2.0 * value, rmse_beta: value },
        tvd: value / 100.0,
    }
}

#[test]
fn replication_summaries() {
    let reports = vec![
        report("B", 0, 1.0, None),
        report("A", 0, 0.0, Some(1.0)),
        report("B", 1, 2.0, None),
        report("A", 1, 2.0, Some(3.0)),
        report("B", 2, 6.0, None),
    ];
    let summary = summarize_replications(&reports).unwrap();
    let names: Vec<&str> = summary.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["B", "A"]);
    let (b, a) = (&summary.rows[0], &summary.rows[1]);
    assert_eq!((b.replications, a.replications), (3, 2));
    // {1, 2, 6}: mean 3, sample variance 7, s.e. √(7/3)
    assert!((b.rmse_zeta.mean - 3.0).abs() < 1e-12);
    assert!((b.rmse_zeta.se.unwrap() - (7.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((b.rmse_omega.mean - 6.0).abs() < 1e-12);
    assert!((b.tvd_percent.mean - 3.0).abs() < 1e-12);
    assert!(b.rmse_alpha.is_none());
    // {0, 2}: mean 1, s.e. 1
    assert_eq!(a.rmse_zeta.mean, 1.0);
    assert!((a.rmse_zeta.se.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(a.rmse_alpha.unwrap().mean, 2.0);

    let single = summarize_replications(&reports[..1]).unwrap();
    assert!(single.rows[0].rmse_zeta.se.is_none());
    assert!(summarize_replications(&[]).is_err());

    let csv = summary.to_csv(false);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,replications,rmse_alpha_mean,rmse_alpha_se,rmse_zeta_mean,rmse_zeta_se,rmse_omega_mean,rmse_omega_se,rmse_beta_mean,rmse_beta_se,tvd_pct_mean,tvd_pct_se"
    );
    assert_eq!(lines.next().unwrap(), "B,3,,,3.0000,1.5275,6.0000,3.0551,3.0000,1.5275,3.0000,1.5275");
    assert!(summary.to_csv(true).starts_with("method,replications,time_s_mean,time_s_se,"));
    let text = summary.to_text(false);
    assert!(text.contains("3.0000 (1.5275)"));
    assert!(text.lines().nth(3).unwrap().starts_with("A "));
}
