//! Maximum simulated likelihood for the mixed logit model.
//!
//! Parameters are stacked as `φ = [α, ζ, vech_row(L)]` with `Ω = LLᵀ`. The
//! optimizer works on the same vector with the diagonal of `L` on the log
//! scale, so `Ω̂` is positive definite by construction.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ChoiceDataset;
use crate::dist::standard_normals;
use crate::error::{Error, Result};
use crate::estimate::{unpack_phi, EstimateFile, PointEstimates, PopulationPosterior, ESTIMATE_SCHEMA_VERSION};
use crate::linalg;
use crate::mnl::{softmax_into, utilities};
use crate::optim::{self, BfgsOptions, Termination};
use crate::quasirandom::{mlhs_normal_draws, DrawBatch};
use crate::seed::{tag, SeedStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MslConfig {
    /// MLHS draws per individual.
    pub draws: usize,
    /// Pseudo-random draws for the conditional individual-level estimates.
    pub conditional_draws: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for MslConfig {
    fn default() -> Self {
        Self {
            draws: 200,
            conditional_draws: 10_000,
            seed: 0,
            max_iter: 1000,
            grad_tol: 1e-6,
        }
    }
}

/// Number of entries in `φ`.
pub fn phi_len(num_fixed: usize, num_random: usize) -> usize {
    num_fixed + num_random + linalg::lower_len(num_random)
}

/// Indices of the diagonal of `L` inside `φ`.
fn diagonal_indices(num_fixed: usize, num_random: usize) -> impl Iterator<Item = usize> {
    let base = num_fixed + num_random;
    (0..num_random).map(move |i| base + i * (i + 1) / 2 + i)
}

/// Per-individual MLHS batches (`D × K`) from the counter-based stream.
pub fn msle_draws(num_individuals: usize, num_random: usize, draws: usize, seed: u64) -> Result<Vec<DrawBatch>> {
    let s = SeedStream::new(seed);
    (0..num_individuals)
        .map(|n| mlhs_normal_draws(draws, num_random, s.derive(&[tag::MSLE_DRAWS, n as u64])))
        .collect()
}

/// Simulated log-likelihood contribution of individual `n` and its gradient
/// in natural `φ` coordinates.
fn individual_term(
    dataset: &ChoiceDataset,
    n: usize,
    alpha: &[f64],
    zeta: &[f64],
    chol: &DMatrix<f64>,
    draws: &DrawBatch,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let (l, k, j) = (alpha.len(), zeta.len(), dataset.num_alternatives());
    let ind = dataset.individual(n);
    let d_count = draws.num_draws();
    let mut s = vec![0.0; d_count];
    // per-draw gradients of Σ_t ln P w.r.t. (α, β)
    let mut g = if want_grad { vec![0.0; d_count * (l + k)] } else { Vec::new() };
    let mut beta = vec![0.0; k];
    let mut v = vec![0.0; j];
    let mut p = vec![0.0; j];
    for d in 0..d_count {
        linalg::affine_lower(zeta, chol, draws.draw(d), &mut beta);
        let gd = if want_grad { &mut g[d * (l + k)..(d + 1) * (l + k)] } else { &mut [][..] };
        for occ in ind.occasions() {
            utilities(&occ, alpha, &beta, &mut v);
            let lse = softmax_into(&v, &mut p);
            s[d] += v[occ.chosen] - lse;
            if want_grad {
                p[occ.chosen] -= 1.0;
                // ∂/∂(α, β) of ln P = −Xᵀ(p − e_y)
                for (c, &pc) in p.iter().enumerate() {
                    if l > 0 {
                        for (a, x) in occ.fixed[c * l..(c + 1) * l].iter().enumerate() {
                            gd[a] -= pc * x;
                        }
                    }
                    for (a, x) in occ.random[c * k..(c + 1) * k].iter().enumerate() {
                        gd[l + a] -= pc * x;
                    }
                }
            }
        }
    }
    let mut w = vec![0.0; d_count];
    let lse_s = softmax_into(&s, &mut w);
    let value = lse_s - (d_count as f64).ln();
    if !want_grad {
        return (value, Vec::new());
    }
    let mut grad = vec![0.0; phi_len(l, k)];
    for d in 0..d_count {
        let gd = &g[d * (l + k)..(d + 1) * (l + k)];
        let xi = draws.draw(d);
        for a in 0..l + k {
            grad[a] += w[d] * gd[a];
        }
        let mut idx = l + k;
        for r in 0..k {
            for c in 0..=r {
                grad[idx] += w[d] * gd[l + r] * xi[c];
                idx += 1;
            }
        }
    }
    (value, grad)
}

/// `Σ_n ln[(1/D) Σ_d Π_t P(y_nt | α, ζ + L ξ_nd)]`, with the gradient in
/// natural `φ` coordinates written into `grad` when given.
///
/// `draws` holds either one batch per individual or a single shared batch.
pub fn simulated_loglik(
    dataset: &ChoiceDataset,
    phi: &[f64],
    draws: &[DrawBatch],
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let (l, k, n) = (dataset.num_fixed(), dataset.num_random(), dataset.num_individuals());
    let len = phi_len(l, k);
    if phi.len() != len {
        return Err(Error::dims("parameter vector φ", len, phi.len()));
    }
    if draws.len() != n && draws.len() != 1 {
        return Err(Error::dims("draw batches", n, draws.len()));
    }
    if let Some(b) = draws.iter().find(|b| b.dim() != k || b.num_draws() == 0) {
        return Err(Error::dims("simulation draw dimension", k, b.dim()));
    }
    let alpha = &phi[..l];
    let zeta = &phi[l..l + k];
    let chol = linalg::unpack_lower(&phi[l + k..], k);
    let want_grad = grad.is_some();
    let parts: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let batch = if draws.len() == 1 { &draws[0] } else { &draws[i] };
            individual_term(dataset, i, alpha, zeta, &chol, batch, want_grad)
        })
        .collect();
    let mut value = 0.0;
    let mut acc = vec![0.0; if want_grad { len } else { 0 }];
    for (v, g) in parts {
        value += v;
        acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    if !value.is_finite() {
        return Err(Error::numerical("simulated log-likelihood", "non-finite value"));
    }
    if let Some(out) = grad {
        out.copy_from_slice(&acc);
    }
    Ok(value)
}

/// Maps optimizer coordinates (log-diagonal) to natural `φ`.
pub fn theta_to_phi(theta: &[f64], num_fixed: usize, num_random: usize) -> Vec<f64> {
    let mut phi = theta.to_vec();
    for i in diagonal_indices(num_fixed, num_random) {
        phi[i] = theta[i].exp();
    }
    phi
}

pub fn phi_to_theta(phi: &[f64], num_fixed: usize, num_random: usize) -> Vec<f64> {
    let mut theta = phi.to_vec();
    for i in diagonal_indices(num_fixed, num_random) {
        theta[i] = phi[i].ln();
    }
    theta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MslEstimate {
    pub num_fixed: usize,
    pub num_random: usize,
    #[serde(with = "crate::serde_mat::vector")]
    pub phi: DVector<f64>,
    /// Asymptotic covariance of `φ̂` from the BFGS inverse-Hessian
    /// approximation.
    #[serde(with = "crate::serde_mat::matrix")]
    pub var_phi: DMatrix<f64>,
    pub loglik: f64,
    pub start_loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl MslEstimate {
    pub fn alpha(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.phi.as_slice()[..self.num_fixed])
    }

    pub fn zeta(&self) -> DVector<f64> {
        let (l, k) = (self.num_fixed, self.num_random);
        DVector::from_column_slice(&self.phi.as_slice()[l..l + k])
    }

    pub fn chol(&self) -> DMatrix<f64> {
        let (l, k) = (self.num_fixed, self.num_random);
        linalg::unpack_lower(&self.phi.as_slice()[l + k..], k)
    }

    pub fn omega(&self) -> DMatrix<f64> {
        unpack_phi(self.phi.as_slice(), self.num_fixed, self.num_random).2
    }
}

/// BFGS on the negative simulated log-likelihood from `α = 0`, `ζ = 0`,
/// `L = 0.1 I`.
pub fn fit_msle(dataset: &ChoiceDataset, draws: &[DrawBatch], config: &MslConfig) -> Result<MslEstimate> {
    let (l, k) = (dataset.num_fixed(), dataset.num_random());
    let len = phi_len(l, k);
    let mut start = vec![0.0; len];
    for i in diagonal_indices(l, k) {
        start[i] = 0.1;
    }
    let theta0 = phi_to_theta(&start, l, k);
    let diag: Vec<usize> = diagonal_indices(l, k).collect();
    let mut failure = None;
    let mut objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let phi = theta_to_phi(theta, l, k);
        match simulated_loglik(dataset, &phi, draws, Some(grad)) {
            Ok(v) => {
                for g in grad.iter_mut() {
                    *g = -*g;
                }
                for &i in &diag {
                    grad[i] *= phi[i];
                }
                -v
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut g0 = vec![0.0; len];
    let start_value = -objective(&theta0, &mut g0);
    if !start_value.is_finite() {
        return Err(failure.unwrap_or_else(|| Error::numerical("simulated log-likelihood", "non-finite start")));
    }
    let opts = BfgsOptions {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        ..Default::default()
    };
    let res = optim::minimize(&mut objective, &theta0, &opts);
    let phi = theta_to_phi(res.x.as_slice(), l, k);
    let mut jac = DVector::from_element(len, 1.0);
    for &i in &diag {
        jac[i] = phi[i];
    }
    let mut var_phi = DMatrix::from_fn(len, len, |a, b| jac[a] * res.inv_hessian[(a, b)] * jac[b]);
    linalg::symmetrize(&mut var_phi);
    Ok(MslEstimate {
        num_fixed: l,
        num_random: k,
        phi: DVector::from_vec(phi),
        var_phi,
        loglik: -res.value,
        start_loglik: start_value,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.termination == Termination::Converged,
    })
}

/// Conditional means `E[β_n | y_n]` by importance weighting
/// `β_nd = ζ̂ + L̂ ξ_nd` with pseudo-random `ξ_nd`. Returns the estimates and
/// the number of individuals whose weights all vanished (those fall back to
/// `ζ̂`).
pub fn conditional_betas(
    dataset: &ChoiceDataset,
    estimate: &MslEstimate,
    num_draws: usize,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, usize)> {
    if num_draws == 0 {
        return Err(Error::InvalidArgument("conditional expectation needs at least one draw".into()));
    }
    let (l, k, j) = (estimate.num_fixed, estimate.num_random, dataset.num_alternatives());
    if dataset.num_fixed() != l || dataset.num_random() != k {
        return Err(Error::dims("estimate dimensions", l + k, dataset.num_fixed() + dataset.num_random()));
    }
    let alpha = estimate.alpha();
    let zeta = estimate.zeta();
    let chol = estimate.chol();
    let seeds = SeedStream::new(seed);
    let results: Vec<(DVector<f64>, bool)> = (0..dataset.num_individuals())
        .into_par_iter()
        .map(|n| {
            let mut rng = seeds.rng(&[tag::CONDITIONAL_DRAWS, n as u64]);
            let ind = dataset.individual(n);
            let mut xi = vec![0.0; k];
            let mut beta = vec![0.0; k];
            let mut v = vec![0.0; j];
            let mut p = vec![0.0; j];
            let mut log_w = Vec::with_capacity(num_draws);
            let mut betas = Vec::with_capacity(num_draws * k);
            for _ in 0..num_draws {
                standard_normals(&mut rng, &mut xi);
                linalg::affine_lower(zeta.as_slice(), &chol, &xi, &mut beta);
                let mut s = 0.0;
                for occ in ind.occasions() {
                    utilities(&occ, alpha.as_slice(), &beta, &mut v);
                    s += v[occ.chosen] - softmax_into(&v, &mut p);
                }
                log_w.push(s);
                betas.extend_from_slice(&beta);
            }
            let mut w = vec![0.0; num_draws];
            let total = softmax_into(&log_w, &mut w);
            if !total.is_finite() {
                return (zeta.clone(), true);
            }
            let mut mean = DVector::zeros(k);
            for (d, wd) in w.iter().enumerate() {
                for a in 0..k {
                    mean[a] += wd * betas[d * k + a];
                }
            }
            (mean, false)
        })
        .collect();
    let failures = results.iter().filter(|(_, f)| *f).count();
    Ok((results.into_iter().map(|(b, _)| b).collect(), failures))
}

#[derive(Clone, Debug)]
pub struct MslResult {
    pub estimate: MslEstimate,
    pub betas: Vec<DVector<f64>>,
    pub zero_weight_individuals: usize,
    pub wall_time_secs: f64,
}

/// Draw generation, BFGS fit and conditional individual-level estimates.
pub fn run_msle(dataset: &ChoiceDataset, config: &MslConfig) -> Result<MslResult> {
    if config.draws == 0 {
        return Err(Error::config("draws", "must be at least 1"));
    }
    if dataset.num_individuals() == 0 {
        return Err(Error::Empty("individuals"));
    }
    let start = Instant::now();
    let draws = msle_draws(dataset.num_individuals(), dataset.num_random(), config.draws, config.seed)?;
    let estimate = fit_msle(dataset, &draws, config)?;
    let (betas, zero_weight_individuals) =
        conditional_betas(dataset, &estimate, config.conditional_draws, config.seed)?;
    Ok(MslResult {
        estimate,
        betas,
        zero_weight_individuals,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

impl MslResult {
    pub fn point_estimates(&self) -> PointEstimates {
        PointEstimates {
            alpha: self.estimate.alpha(),
            zeta: self.estimate.zeta(),
            omega: self.estimate.omega(),
            betas: self.betas.clone(),
        }
    }

    pub fn population_posterior(&self) -> PopulationPosterior {
        PopulationPosterior::Asymptotic {
            num_fixed: self.estimate.num_fixed,
            num_random: self.estimate.num_random,
            phi: self.estimate.phi.clone(),
            cov: self.estimate.var_phi.clone(),
        }
    }

    pub fn estimate_file(&self) -> EstimateFile {
        EstimateFile {
            schema_version: ESTIMATE_SCHEMA_VERSION,
            method: "MSLE".into(),
            iterations: self.estimate.iterations,
            converged: self.estimate.converged,
            wall_time_secs: self.wall_time_secs,
            point: self.point_estimates(),
            posterior: self.population_posterior(),
        }
    }
}
