//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use mmnl::data::{build_true_population, generate_dataset, ChoiceDataset, Occasion, ScenarioConfig, TruePopulation};
use mmnl::elise::GaussianFactor;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `|a − b| / max(|a|, |b|, 1e-3)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let dn = f(&probe);
            probe[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Plain Cholesky–Banachiewicz factorization, independent of the library.
pub fn cholesky(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = a[(i, i)] - s;
                assert!(d > 0.0, "matrix is not positive definite");
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    l
}

/// Random symmetric positive definite matrix with average diagonal near `scale`.
pub fn random_spd(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| normal(rng));
    (&a * a.transpose()) * (scale / k as f64) + DMatrix::identity(k, k) * (0.1 * scale)
}

/// A dataset of `T` occasions for one individual with `N(0, scale²)` attributes.
pub fn random_individual(rng: &mut ChaCha8Rng, j: usize, l: usize, k: usize, t: usize, scale: f64) -> ChoiceDataset {
    let fixed = (0..t * j * l).map(|_| scale * normal(rng)).collect();
    let random = (0..t * j * k).map(|_| scale * normal(rng)).collect();
    let choices = (0..t).map(|_| rng.random_range(0..j)).collect();
    ChoiceDataset::new(
        j,
        (0..l).map(|i| format!("f{i}")).collect(),
        (0..k).map(|i| format!("r{i}")).collect(),
        &[t],
        fixed,
        random,
        choices,
    )
    .expect("valid fixture")
}

pub fn scenario(scenario: u8, n: usize, t: usize, seed: u64) -> (ChoiceDataset, TruePopulation) {
    let cfg = ScenarioConfig::new(scenario, n, t, seed).expect("known scenario");
    let pop = build_true_population(&cfg).expect("population");
    let data = generate_dataset(&cfg, &pop).expect("dataset");
    (data, pop)
}

/// One choice set with Gaussian factors for `α` and `β`.
pub struct EliseFixture {
    pub j: usize,
    pub l: usize,
    pub k: usize,
    pub data: ChoiceDataset,
    pub alpha: GaussianFactor,
    pub beta: GaussianFactor,
}

impl EliseFixture {
    pub fn occasion(&self) -> Occasion<'_> {
        self.data.individual(0).occasion(0)
    }
}

/// `(J, L, K)` of the frozen E-LSE fixtures.
pub const ELISE_SHAPES: [(usize, usize, usize); 10] = [
    (2, 0, 1),
    (2, 0, 2),
    (2, 2, 4),
    (3, 2, 1),
    (3, 0, 2),
    (3, 0, 4),
    (7, 0, 1),
    (7, 2, 2),
    (7, 0, 4),
    (7, 2, 4),
];

pub fn elise_fixture(index: usize) -> EliseFixture {
    let (j, l, k) = ELISE_SHAPES[index];
    let mut r = rng(1000 + index as u64);
    let data = random_individual(&mut r, j, l, k, 1, 0.6);
    let alpha = GaussianFactor::new(
        DVector::from_fn(l, |_, _| 0.5 * normal(&mut r)),
        if l == 0 { DMatrix::zeros(0, 0) } else { random_spd(&mut r, l, 0.1) },
    )
    .expect("PD alpha covariance");
    let beta = GaussianFactor::new(DVector::from_fn(k, |_, _| 0.5 * normal(&mut r)), random_spd(&mut r, k, 0.4))
        .expect("PD beta covariance");
    EliseFixture { j, l, k, data, alpha, beta }
}

/// Brute-force `E[LSE(X_F α + X_R β)]` with pseudo-random Gaussian draws;
/// returns the mean and its standard error.
pub fn elise_monte_carlo(f: &EliseFixture, draws: usize, seed: u64) -> (f64, f64) {
    let occ = f.occasion();
    let la = if f.l == 0 { DMatrix::zeros(0, 0) } else { cholesky(f.alpha.cov()) };
    let lb = cholesky(f.beta.cov());
    let mut r = rng(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut za = vec![0.0; f.l];
    let mut zb = vec![0.0; f.k];
    let mut v = vec![0.0; f.j];
    for _ in 0..draws {
        za.iter_mut().for_each(|z| *z = normal(&mut r));
        zb.iter_mut().for_each(|z| *z = normal(&mut r));
        let a: Vec<f64> = (0..f.l).map(|i| f.alpha.mean()[i] + (0..=i).map(|c| la[(i, c)] * za[c]).sum::<f64>()).collect();
        let b: Vec<f64> = (0..f.k).map(|i| f.beta.mean()[i] + (0..=i).map(|c| lb[(i, c)] * zb[c]).sum::<f64>()).collect();
        for (alt, vj) in v.iter_mut().enumerate() {
            *vj = (0..f.l).map(|i| occ.fixed[alt * f.l + i] * a[i]).sum::<f64>()
                + (0..f.k).map(|i| occ.random[alt * f.k + i] * b[i]).sum::<f64>();
        }
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let g = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        sum += g;
        sum_sq += g * g;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub const ELISE_ORACLE_DRAWS: usize = 1_000_000;
pub const ELISE_ORACLE_SEED: u64 = 77;

/// `(mean, s.e.)` of [`elise_monte_carlo`] with the constants above.
pub const ELISE_ORACLE: [(f64, f64); 10] = [
    (1.709233886491165e0, 4.774360291889658e-4),
    (5.978941599317161e-1, 6.912130438269998e-4),
    (9.578622199340470e-1, 3.748470666525032e-4),
    (1.101945106521365e0, 3.927577987053747e-5),
    (1.096232100365043e0, 6.415103420918371e-4),
    (1.566136076260427e0, 5.430146843677744e-4),
    (3.097444516732107e0, 2.214762361932392e-4),
    (2.292799449579802e0, 2.569006586566847e-4),
    (2.288229506330971e0, 5.528391350178531e-4),
    (2.591499091044327e0, 3.283634149103781e-4),
];

/// Random panel of `n` individuals with `t` occasions each.
pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, t: usize, j: usize, l: usize, k: usize, scale: f64) -> ChoiceDataset {
    let rows = n * t * j;
    ChoiceDataset::new(
        j,
        (0..l).map(|i| format!("f{i}")).collect(),
        (0..k).map(|i| format!("r{i}")).collect(),
        &vec![t; n],
        (0..rows * l).map(|_| scale * normal(rng)).collect(),
        (0..rows * k).map(|_| scale * normal(rng)).collect(),
        (0..n * t).map(|_| rng.random_range(0..j)).collect(),
    )
    .expect("valid panel")
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, b)| relative_error(*a, *b)).fold(0.0, f64::max)
}

/// Worst coordinate-wise relative error of the simulated log-likelihood
/// gradient at `points` random `φ` (N = 20, T = 3, K = 2, L = 1, D = 32).
pub fn msle_gradient_error(points: usize, seed: u64) -> f64 {
    use mmnl::msle::{msle_draws, phi_len, simulated_loglik};
    let mut r = rng(seed);
    let data = random_panel(&mut r, 20, 3, 4, 1, 2, 1.0);
    let draws = msle_draws(20, 2, 32, seed).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let mut phi: Vec<f64> = (0..phi_len(1, 2)).map(|_| 0.5 * normal(&mut r)).collect();
        for d in [3, 5] {
            phi[d] = phi[d].abs() + 0.2;
        }
        let mut g = vec![0.0; phi.len()];
        simulated_loglik(&data, &phi, &draws, Some(&mut g)).unwrap();
        let fd = central_gradient(|x| simulated_loglik(&data, x, &draws, None).unwrap(), &phi, 1e-5);
        worst = worst.max(max_relative_error(&g, &fd));
    }
    worst
}

/// Small scenario-3 posterior (N = 6, T = 3) with distinct β factors.
pub fn vb_fixture(with_mji: bool) -> (ChoiceDataset, mmnl::vb::Hyperparameters, mmnl::vb::VariationalPosterior) {
    use mmnl::vb::{Hyperparameters, VariationalPosterior};
    let (data, _) = scenario(3, 6, 3, 21);
    let hyper = Hyperparameters::diffuse(data.num_fixed(), data.num_random());
    let mut post = VariationalPosterior::initialize(&data, &hyper, with_mji).unwrap();
    let mut r = rng(4);
    for b in post.betas.iter_mut() {
        *b = GaussianFactor::new(DVector::from_fn(4, |_, _| 0.5 * normal(&mut r)), random_spd(&mut r, 4, 0.5)).unwrap();
    }
    if let Some(aux) = post.mji_aux.as_mut() {
        for o in 0..aux.num_occasions() {
            let e = aux.entry_mut(o);
            let raw: Vec<f64> = (0..e.len()).map(|_| normal(&mut r).exp()).collect();
            let s: f64 = raw.iter().sum();
            e.iter_mut().zip(&raw).for_each(|(a, v)| *a = v / s);
        }
    }
    (data, hyper, post)
}

/// Worst relative error of the `(μ, Σ)` gradients of the expected log joint
/// (the NCVMP inputs) for the α block and one β block.
pub fn ncvmp_gradient_error(treatment: mmnl::vb::Treatment, points: usize, seed: u64) -> f64 {
    use mmnl::vb::UpdateContext;
    let (data, hyper, post) = vb_fixture(treatment == mmnl::vb::Treatment::Mji);
    let ctx = UpdateContext::new(&data, &post, &hyper, treatment, None).unwrap();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for problem in [ctx.alpha_problem(), ctx.beta_problem(3)] {
        let p = problem.dim();
        for _ in 0..points {
            let mu: Vec<f64> = (0..p).map(|_| 0.5 * normal(&mut r)).collect();
            let sigma = random_spd(&mut r, p, 0.3);
            let (_, gm, gs) = problem.expected_log_joint(&mu, &sigma).unwrap();
            let fd_mu = central_gradient(|x| problem.expected_log_joint(x, &sigma).unwrap().0, &mu, 1e-5);
            worst = worst.max(max_relative_error(gm.as_slice(), &fd_mu));
            // Symmetric perturbations: direction E_ab + E_ba for a ≠ b.
            let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (0..=a).map(move |b| (a, b))).collect();
            let analytic: Vec<f64> = pairs.iter().map(|&(a, b)| if a == b { gs[(a, a)] } else { gs[(a, b)] + gs[(b, a)] }).collect();
            let numeric = central_gradient(
                |x| {
                    let mut s = sigma.clone();
                    for (&(a, b), v) in pairs.iter().zip(x) {
                        s[(a, b)] = *v;
                        s[(b, a)] = *v;
                    }
                    problem.expected_log_joint(&mu, &s).unwrap().0
                },
                &pairs.iter().map(|&(a, b)| sigma[(a, b)]).collect::<Vec<_>>(),
                1e-5,
            );
            worst = worst.max(max_relative_error(&analytic, &numeric));
        }
    }
    worst
}

/// Worst relative error of the packed quasi-Newton objective gradient for
/// the α block and one β block.
pub fn qn_gradient_error(treatment: mmnl::vb::Treatment, points: usize, seed: u64) -> f64 {
    use mmnl::vb::{BlockProblem, QmcDraws, UpdateContext};
    let (data, hyper, post) = vb_fixture(treatment == mmnl::vb::Treatment::Mji);
    let draws = QmcDraws::generate(data.num_individuals(), data.num_fixed(), data.num_random(), 32, seed).unwrap();
    let ctx = UpdateContext::new(&data, &post, &hyper, treatment, Some(&draws)).unwrap();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for problem in [ctx.alpha_problem(), ctx.beta_problem(3)] {
        let p = problem.dim();
        for _ in 0..points {
            let mu: Vec<f64> = (0..p).map(|_| 0.5 * normal(&mut r)).collect();
            let chol = cholesky(&random_spd(&mut r, p, 0.3));
            let theta = BlockProblem::pack(&mu, &chol);
            let mut g = vec![0.0; theta.len()];
            problem.qn_objective(&theta, &mut g);
            let mut scratch = vec![0.0; theta.len()];
            let fd = central_gradient(|x| problem.qn_objective(x, &mut scratch), &theta, 1e-5);
            worst = worst.max(max_relative_error(&g, &fd));
        }
    }
    worst
}

fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

pub fn random_hyper(r: &mut ChaCha8Rng, k: usize) -> mmnl::vb::Hyperparameters {
    let mut h = mmnl::vb::Hyperparameters::diffuse(0, k);
    h.nu = 1.0 + 3.0 * normal(r).abs();
    h.mu0 = DVector::from_fn(k, |_, _| normal(r));
    h.sigma0 = random_spd(r, k, 2.0);
    h.a_scale = DVector::from_fn(k, |_, _| 0.5 + normal(r).abs());
    h
}

pub fn random_factor(r: &mut ChaCha8Rng, k: usize) -> GaussianFactor {
    GaussianFactor::new(DVector::from_fn(k, |_, _| normal(r)), random_spd(r, k, 0.5)).unwrap()
}

/// Worst relative error of the conjugate updates of `q(ζ)`, `q(Ω)` and
/// `q(a)` against their closed forms, written out with explicit inverses,
/// over `cases` random valid states.
pub fn conjugate_closed_form_error(cases: usize, seed: u64) -> f64 {
    use mmnl::vb::{update_a_factors, update_omega_factor, update_zeta_factor};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut track = |got: f64, want: f64, scale: f64| worst = worst.max((got - want).abs() / scale.max(1.0));
    for case in 0..cases {
        let k = 1 + case % 4;
        let n = 1 + case % 7;
        let h = random_hyper(&mut r, k);
        let betas: Vec<GaussianFactor> = (0..n).map(|_| random_factor(&mut r, k)).collect();
        let zeta = random_factor(&mut r, k);
        let w = h.nu + n as f64 + k as f64 - 1.0;
        let c = 0.5 * (h.nu + k as f64);
        let d = DVector::from_fn(k, |_, _| 0.1 + normal(&mut r).abs());
        let theta = random_spd(&mut r, k, 3.0);

        let cov = inverse(&(inverse(&h.sigma0) + inverse(&theta) * (n as f64 * w)));
        let sum = betas.iter().fold(DVector::zeros(k), |a, b| a + b.mean());
        let mean = &cov * (inverse(&h.sigma0) * &h.mu0 + inverse(&theta) * sum * w);
        let got = update_zeta_factor(&h, w, &theta, &betas).unwrap();
        let scale = cov.amax();
        cov.iter().zip(got.cov().iter()).for_each(|(a, b)| track(*b, *a, scale));
        let scale = mean.amax();
        mean.iter().zip(got.mean().iter()).for_each(|(a, b)| track(*b, *a, scale));

        let mut expected = DMatrix::from_fn(k, k, |i, j| if i == j { 2.0 * h.nu * c / d[i] } else { 0.0 });
        expected += zeta.cov() * n as f64;
        for b in &betas {
            let dev = b.mean() - zeta.mean();
            expected += b.cov() + &dev * dev.transpose();
        }
        let got = update_omega_factor(&h, c, &d, &zeta, &betas);
        let scale = expected.amax();
        expected.iter().zip(got.iter()).for_each(|(a, b)| track(*b, *a, scale));
        track((&got - got.transpose()).amax(), 0.0, 1.0);

        let (c_new, d_new) = update_a_factors(&h, w, &theta).unwrap();
        track(c_new, c, c);
        let ti = inverse(&theta);
        for i in 0..k {
            let want = 1.0 / (h.a_scale[i] * h.a_scale[i]) + h.nu * w * ti[(i, i)];
            track(d_new[i], want, want);
        }
    }
    worst
}
