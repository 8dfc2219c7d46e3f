//! Blocked Gibbs sampler with random-walk Metropolis steps for `α` and
//! each `β_n`.
//!
//! One sweep draws `ζ`, `Ω` and `a` from their conditionals, then proposes
//! `β̃_n = β_n + √ρ_β chol(Ω) η` for every individual (in parallel), adapts
//! `ρ_β` toward the target acceptance rate, and finally proposes
//! `α̃ = α + √ρ_α P η` jointly over all individuals (see [`AlphaProposal`]).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ChoiceDataset;
use crate::dist::{sample_gaussian, sample_inverse_wishart, standard_normals};
use crate::error::{Error, Result};
use crate::estimate::{EstimateFile, PointEstimates, PopulationDraw, PopulationPosterior, ESTIMATE_SCHEMA_VERSION};
use crate::linalg;
use crate::mnl::lse;
use crate::seed::{tag, SeedStream};
use crate::vb::Hyperparameters;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub rho_beta_init: f64,
    pub rho_alpha: f64,
    pub target_acceptance: f64,
    pub adapt_increment: f64,
    pub rho_beta_floor: f64,
    /// Directory for per-chain draw CSV files; nothing is written when unset.
    pub draw_dir: Option<PathBuf>,
    /// Include every `β_n` in the draw files.
    pub store_betas: bool,
    pub alpha_proposal: AlphaProposal,
}

/// Shape of the random-walk proposal covariance for `α` (scaled by `ρ_α`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaProposal {
    /// `√ρ_α η`.
    #[default]
    Identity,
    /// `√ρ_α chol(Ξ₀) η`; only sensible when `Ξ₀` is of the order of the
    /// posterior scale.
    PriorCovariance,
}

impl AlphaProposal {
    pub fn chol(self, hyper: &Hyperparameters) -> Result<DMatrix<f64>> {
        let l = hyper.num_fixed();
        match self {
            Self::Identity => Ok(DMatrix::identity(l, l)),
            Self::PriorCovariance => linalg::chol_lower(&hyper.xi0, "prior covariance of fixed parameters"),
        }
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 2,
            iterations: 20_000,
            burn_in: 10_000,
            thin: 5,
            seed: 0,
            rho_beta_init: 0.1,
            rho_alpha: 0.01,
            target_acceptance: 0.3,
            adapt_increment: 0.001,
            rho_beta_floor: 1e-4,
            draw_dir: None,
            store_betas: false,
            alpha_proposal: AlphaProposal::Identity,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("chains", "must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config("burn_in", "must be smaller than iterations"));
        }
        if !(self.rho_beta_init > 0.0 && self.rho_alpha > 0.0 && self.rho_beta_floor > 0.0) {
            return Err(Error::config("rho", "step sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.target_acceptance) {
            return Err(Error::config("target_acceptance", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Current sampler state of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct McmcState {
    pub alpha: DVector<f64>,
    pub betas: Vec<DVector<f64>>,
    pub zeta: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub a: DVector<f64>,
    pub rho_alpha: f64,
    pub rho_beta: f64,
}

impl McmcState {
    /// `α = λ₀`, `β_n = ζ = μ₀`, `Ω = I`, `a_k = 1`; chains then call
    /// [`McmcState::disperse_betas`].
    pub fn initial(num_individuals: usize, hyper: &Hyperparameters, config: &McmcConfig) -> Self {
        let k = hyper.num_random();
        Self {
            alpha: hyper.lambda0.clone(),
            betas: vec![hyper.mu0.clone(); num_individuals],
            zeta: hyper.mu0.clone(),
            omega: DMatrix::identity(k, k),
            a: DVector::from_element(k, 1.0),
            rho_alpha: config.rho_alpha,
            rho_beta: config.rho_beta_init,
        }
    }

    /// Redraws every `β_n` from `N(ζ, Ω)` at the initial `Ω = I`, one stream
    /// per individual.
    pub fn disperse_betas(&mut self, rngs: &mut [ChaCha8Rng]) {
        for (b, rng) in self.betas.iter_mut().zip(rngs.iter_mut()) {
            standard_normals(rng, b.as_mut_slice());
            *b += &self.zeta;
        }
    }
}

/// `ζ | β, Ω ~ N(m, V)` with `V = (Σ₀⁻¹ + N Ω⁻¹)⁻¹` and
/// `m = V(Σ₀⁻¹ μ₀ + Ω⁻¹ Σ_n β_n)`.
pub fn gibbs_zeta(state: &McmcState, hyper: &Hyperparameters, rng: &mut impl Rng) -> Result<DVector<f64>> {
    let n = state.betas.len();
    if n == 0 {
        return Err(Error::Empty("individuals"));
    }
    let omega_inv = linalg::spd_inverse(&state.omega, "Ω draw")?;
    let sigma0_inv = linalg::spd_inverse(&hyper.sigma0, "prior covariance of ζ")?;
    let mut sum = DVector::zeros(state.zeta.len());
    for b in &state.betas {
        sum += b;
    }
    let cov = linalg::spd_inverse(&(&sigma0_inv + &omega_inv * n as f64), "conditional precision of ζ")?;
    let mean = &cov * (&sigma0_inv * &hyper.mu0 + &omega_inv * sum);
    let chol = linalg::chol_lower(&cov, "conditional covariance of ζ")?;
    Ok(sample_gaussian(rng, &mean, &chol))
}

/// `Ω | β, ζ, a ~ IW(ν + N + K − 1, 2ν diag(a) + Σ_n (β_n − ζ)(β_n − ζ)ᵀ)`.
pub fn gibbs_omega(state: &McmcState, hyper: &Hyperparameters, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let k = state.zeta.len();
    let dof = hyper.nu + state.betas.len() as f64 + k as f64 - 1.0;
    if dof <= k as f64 + 1.0 {
        return Err(Error::InvalidArgument(format!(
            "inverse-Wishart degrees of freedom {dof} must exceed K + 1 = {}",
            k + 1
        )));
    }
    let mut scale = DMatrix::from_diagonal(&(&state.a * (2.0 * hyper.nu)));
    for b in &state.betas {
        let dev = b - &state.zeta;
        scale += &dev * dev.transpose();
    }
    linalg::symmetrize(&mut scale);
    sample_inverse_wishart(rng, dof, &scale)
}

/// `a_k | Ω ~ Gamma((ν + K)/2, rate = A_k⁻² + ν (Ω⁻¹)_kk)`.
pub fn gibbs_a(state: &McmcState, hyper: &Hyperparameters, rng: &mut impl Rng) -> Result<DVector<f64>> {
    let k = state.zeta.len();
    let omega_inv = linalg::spd_inverse(&state.omega, "Ω draw")?;
    let shape = 0.5 * (hyper.nu + k as f64);
    let rates = hyper.a_rate();
    let mut out = DVector::zeros(k);
    for i in 0..k {
        let rate = rates[i] + hyper.nu * omega_inv[(i, i)];
        let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        out[i] = g.sample(rng).max(f64::MIN_POSITIVE);
    }
    Ok(out)
}

/// Moves `ρ_β` by one increment toward the target acceptance rate.
pub fn adapt_step(rho_beta: f64, acceptance: f64, config: &McmcConfig) -> f64 {
    let next = if acceptance < config.target_acceptance {
        rho_beta - config.adapt_increment
    } else if acceptance > config.target_acceptance {
        rho_beta + config.adapt_increment
    } else {
        rho_beta
    };
    next.max(config.rho_beta_floor)
}

/// Cached utility components and per-individual log-likelihoods.
pub struct LikelihoodCache {
    j: usize,
    /// `X_F α` per occasion, row-major over occasions.
    fixed_util: Vec<f64>,
    /// `X_R β_n` per occasion.
    random_util: Vec<f64>,
    loglik: Vec<f64>,
}

impl LikelihoodCache {
    pub fn new(dataset: &ChoiceDataset, alpha: &DVector<f64>, betas: &[DVector<f64>]) -> Self {
        let j = dataset.num_alternatives();
        let total = dataset.total_occasions();
        let mut cache = Self {
            j,
            fixed_util: vec![0.0; total * j],
            random_util: vec![0.0; total * j],
            loglik: vec![0.0; dataset.num_individuals()],
        };
        cache.fixed_util = fixed_utilities(dataset, alpha.as_slice());
        for (n, b) in betas.iter().enumerate() {
            let off = dataset.occasion_offset(n) * j;
            let len = dataset.occasions_of(n) * j;
            random_utilities(dataset, n, b.as_slice(), &mut cache.random_util[off..off + len]);
        }
        for n in 0..dataset.num_individuals() {
            let off = dataset.occasion_offset(n);
            let t = dataset.occasions_of(n);
            cache.loglik[n] = sum_loglik(
                &cache.fixed_util[off * j..(off + t) * j],
                &cache.random_util[off * j..(off + t) * j],
                &dataset.choices()[off..off + t],
                j,
            );
        }
        cache
    }

    pub fn loglik(&self) -> &[f64] {
        &self.loglik
    }
}

fn fixed_utilities(dataset: &ChoiceDataset, alpha: &[f64]) -> Vec<f64> {
    let j = dataset.num_alternatives();
    let l = alpha.len();
    let mut out = vec![0.0; dataset.total_occasions() * j];
    if l > 0 {
        linalg::row_major_matvec(dataset.fixed_block(), l, alpha, &mut out);
    }
    out
}

fn random_utilities(dataset: &ChoiceDataset, n: usize, beta: &[f64], out: &mut [f64]) {
    let k = beta.len();
    let j = dataset.num_alternatives();
    let start = dataset.occasion_offset(n) * j;
    let rows = dataset.occasions_of(n) * j;
    linalg::row_major_matvec(&dataset.random_block()[start * k..(start + rows) * k], k, beta, out);
}

fn sum_loglik(fixed: &[f64], random: &[f64], choices: &[usize], j: usize) -> f64 {
    let mut v = vec![0.0; j];
    choices
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            for c in 0..j {
                v[c] = fixed[t * j + c] + random[t * j + c];
            }
            v[y] - lse(&v)
        })
        .sum()
}

/// `−½ (x − m)ᵀ Ω⁻¹ (x − m)` via the lower Cholesky factor of `Ω`.
fn gaussian_kernel(chol: &DMatrix<f64>, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
    let dev = x - mean;
    let z = chol.solve_lower_triangular(&dev).expect("non-singular Cholesky factor");
    -0.5 * z.norm_squared()
}

/// One Metropolis step for every `β_n`; returns the average acceptance.
///
/// `rngs` holds one stream per individual so results do not depend on the
/// worker count.
pub fn rw_update_beta(
    state: &mut McmcState,
    dataset: &ChoiceDataset,
    cache: &mut LikelihoodCache,
    rngs: &mut [ChaCha8Rng],
) -> Result<f64> {
    let n = dataset.num_individuals();
    if n == 0 {
        return Ok(0.0);
    }
    let j = cache.j;
    let chol = linalg::chol_lower(&state.omega, "Ω draw")?;
    let step = state.rho_beta.sqrt();
    let zeta = &state.zeta;
    let fixed_util = &cache.fixed_util;
    let choices = dataset.choices();

    let mut random_chunks: Vec<&mut [f64]> = Vec::with_capacity(n);
    let mut rest = cache.random_util.as_mut_slice();
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(dataset.occasions_of(i) * j);
        random_chunks.push(head);
        rest = tail;
    }
    let accepted: usize = state
        .betas
        .par_iter_mut()
        .zip(cache.loglik.par_iter_mut())
        .zip(random_chunks.into_par_iter())
        .zip(rngs.par_iter_mut())
        .enumerate()
        .map(|(i, (((beta, ll), util), rng))| {
            let k = beta.len();
            let mut eta = vec![0.0; k];
            standard_normals(rng, &mut eta);
            let mut proposal = beta.clone();
            for r in 0..k {
                for c in 0..=r {
                    proposal[r] += step * chol[(r, c)] * eta[c];
                }
            }
            let off = dataset.occasion_offset(i);
            let t = dataset.occasions_of(i);
            let mut new_util = vec![0.0; t * j];
            random_utilities(dataset, i, proposal.as_slice(), &mut new_util);
            let new_ll = sum_loglik(&fixed_util[off * j..(off + t) * j], &new_util, &choices[off..off + t], j);
            let log_r = new_ll - *ll + gaussian_kernel(&chol, &proposal, zeta) - gaussian_kernel(&chol, beta, zeta);
            let u: f64 = rng.random();
            if u.ln() <= log_r {
                *beta = proposal;
                *ll = new_ll;
                util.copy_from_slice(&new_util);
                1
            } else {
                0
            }
        })
        .sum();
    Ok(accepted as f64 / n as f64)
}

/// One joint Metropolis step for `α` with proposal `α + √ρ_α P η`, where
/// `P = proposal_chol`; returns whether it was accepted.
pub fn rw_update_alpha(
    state: &mut McmcState,
    hyper: &Hyperparameters,
    dataset: &ChoiceDataset,
    cache: &mut LikelihoodCache,
    proposal_chol: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<bool> {
    let l = state.alpha.len();
    if l == 0 {
        return Ok(true);
    }
    let j = cache.j;
    let prior_chol = linalg::chol_lower(&hyper.xi0, "prior covariance of fixed parameters")?;
    let mut eta = vec![0.0; l];
    standard_normals(rng, &mut eta);
    let step = state.rho_alpha.sqrt();
    let mut proposal = state.alpha.clone();
    for r in 0..l {
        for c in 0..=r {
            proposal[r] += step * proposal_chol[(r, c)] * eta[c];
        }
    }
    let new_fixed = fixed_utilities(dataset, proposal.as_slice());
    let choices = dataset.choices();
    let new_ll: Vec<f64> = (0..dataset.num_individuals())
        .into_par_iter()
        .map(|i| {
            let off = dataset.occasion_offset(i);
            let t = dataset.occasions_of(i);
            sum_loglik(
                &new_fixed[off * j..(off + t) * j],
                &cache.random_util[off * j..(off + t) * j],
                &choices[off..off + t],
                j,
            )
        })
        .collect();
    let delta: f64 = new_ll.iter().zip(&cache.loglik).map(|(a, b)| a - b).sum();
    let log_r = delta + gaussian_kernel(&prior_chol, &proposal, &hyper.lambda0)
        - gaussian_kernel(&prior_chol, &state.alpha, &hyper.lambda0);
    let u: f64 = rng.random();
    if u.ln() <= log_r {
        state.alpha = proposal;
        cache.fixed_util = new_fixed;
        cache.loglik = new_ll;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Retained output of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<PopulationDraw>,
    pub a_draws: Vec<DVector<f64>>,
    pub beta_means: Vec<DVector<f64>>,
    pub beta_acceptance: f64,
    pub alpha_acceptance: f64,
    pub final_rho_beta: f64,
}

#[derive(Clone, Debug)]
pub struct McmcResult {
    pub chains: Vec<ChainOutput>,
    pub config: McmcConfig,
    pub wall_time_secs: f64,
}

struct DrawWriter {
    out: BufWriter<File>,
    path: PathBuf,
    store_betas: bool,
}

impl DrawWriter {
    fn create(dir: &Path, chain: usize, config: &McmcConfig, l: usize, k: usize, n: usize) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = draw_file_path(dir, chain);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let header = draw_header(l, k, if config.store_betas { n } else { 0 });
        (|| -> std::io::Result<()> {
            writeln!(
                out,
                "# chain={chain} iterations={} burn_in={} thin={} seed={}",
                config.iterations, config.burn_in, config.thin, config.seed
            )?;
            writeln!(out, "{}", header.join(","))
        })()
        .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out,
            path,
            store_betas: config.store_betas,
        })
    }

    fn write(&mut self, iteration: usize, state: &McmcState) -> Result<()> {
        let mut fields = vec![iteration.to_string()];
        fields.extend(state.alpha.iter().map(f64::to_string));
        fields.extend(state.zeta.iter().map(f64::to_string));
        fields.extend(linalg::pack_lower(&state.omega).iter().map(f64::to_string));
        fields.extend(state.a.iter().map(f64::to_string));
        if self.store_betas {
            for b in &state.betas {
                fields.extend(b.iter().map(f64::to_string));
            }
        }
        writeln!(self.out, "{}", fields.join(",")).map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn draw_file_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("chain_{chain}.csv"))
}

/// Column names of a draw file: `iteration`, `alpha_i`, `zeta_i`,
/// `omega_i_j` (lower triangle, row-major), `a_i`, then `beta_n_i` when
/// individual draws are stored.
pub fn draw_header(l: usize, k: usize, n: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string()];
    h.extend((0..l).map(|i| format!("alpha_{i}")));
    h.extend((0..k).map(|i| format!("zeta_{i}")));
    for i in 0..k {
        for j in 0..=i {
            h.push(format!("omega_{i}_{j}"));
        }
    }
    h.extend((0..k).map(|i| format!("a_{i}")));
    for nn in 0..n {
        h.extend((0..k).map(|i| format!("beta_{nn}_{i}")));
    }
    h
}

/// Reads the population-level draws (`α`, `ζ`, `Ω`) back from a draw file.
pub fn read_draw_file(path: &Path, l: usize, k: usize) -> Result<Vec<PopulationDraw>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|s| !s.starts_with('#'));
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::schema(path, "missing header"))?.split(',').collect();
    let expected = draw_header(l, k, 0);
    if header.len() < expected.len() || header[..expected.len()] != expected.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(Error::schema(path, "unexpected draw-file header"));
    }
    let m = linalg::lower_len(k);
    lines
        .enumerate()
        .map(|(row, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::schema(path, format!("row {}: {e}", row + 1)))?;
            if vals.len() != header.len() {
                return Err(Error::schema(path, format!("row {} has {} fields", row + 1, vals.len())));
            }
            let lower = linalg::unpack_lower(&vals[1 + l + k..1 + l + k + m], k);
            let mut omega = &lower + lower.transpose();
            for i in 0..k {
                omega[(i, i)] = lower[(i, i)];
            }
            Ok(PopulationDraw {
                alpha: DVector::from_column_slice(&vals[1..1 + l]),
                zeta: DVector::from_column_slice(&vals[1 + l..1 + l + k]),
                omega,
            })
        })
        .collect()
}

fn run_chain(dataset: &ChoiceDataset, hyper: &Hyperparameters, config: &McmcConfig, chain: usize) -> Result<ChainOutput> {
    let (l, k, n) = (dataset.num_fixed(), dataset.num_random(), dataset.num_individuals());
    let seeds = SeedStream::new(config.seed).child(&[tag::MCMC_CHAIN, chain as u64]);
    let mut rng = seeds.rng(&[]);
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| seeds.rng(&[i as u64 + 1])).collect();
    let mut state = McmcState::initial(n, hyper, config);
    state.disperse_betas(&mut rngs);
    let mut cache = LikelihoodCache::new(dataset, &state.alpha, &state.betas);
    let proposal_chol = config.alpha_proposal.chol(hyper)?;
    let mut writer = match &config.draw_dir {
        Some(dir) => Some(DrawWriter::create(dir, chain, config, l, k, n)?),
        None => None,
    };
    let retained = config.retained_per_chain();
    let mut draws = Vec::with_capacity(retained);
    let mut a_draws = Vec::with_capacity(retained);
    let mut beta_sums = vec![DVector::zeros(k); n];
    let (mut beta_acc, mut alpha_acc) = (0.0, 0usize);

    for it in 1..=config.iterations {
        let fail = |e: Error| Error::numerical("MCMC sweep", format!("chain {chain}, sweep {it}: {e}"));
        state.zeta = gibbs_zeta(&state, hyper, &mut rng).map_err(fail)?;
        state.omega = gibbs_omega(&state, hyper, &mut rng).map_err(fail)?;
        state.a = gibbs_a(&state, hyper, &mut rng).map_err(fail)?;
        let acc = rw_update_beta(&mut state, dataset, &mut cache, &mut rngs).map_err(fail)?;
        beta_acc += acc;
        state.rho_beta = adapt_step(state.rho_beta, acc, config);
        if rw_update_alpha(&mut state, hyper, dataset, &mut cache, &proposal_chol, &mut rng).map_err(fail)? {
            alpha_acc += 1;
        }
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 && draws.len() < retained {
            draws.push(PopulationDraw {
                alpha: state.alpha.clone(),
                zeta: state.zeta.clone(),
                omega: state.omega.clone(),
            });
            a_draws.push(state.a.clone());
            for (s, b) in beta_sums.iter_mut().zip(&state.betas) {
                *s += b;
            }
            if let Some(w) = writer.as_mut() {
                w.write(it, &state)?;
            }
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let count = draws.len().max(1) as f64;
    Ok(ChainOutput {
        draws,
        a_draws,
        beta_means: beta_sums.into_iter().map(|s| s / count).collect(),
        beta_acceptance: beta_acc / config.iterations as f64,
        alpha_acceptance: alpha_acc as f64 / config.iterations as f64,
        final_rho_beta: state.rho_beta,
    })
}

/// Runs all chains in parallel and keeps the post-burn-in thinned draws.
pub fn run_mcmc(dataset: &ChoiceDataset, hyper: &Hyperparameters, config: &McmcConfig) -> Result<McmcResult> {
    config.validate()?;
    hyper.validate(dataset.num_fixed(), dataset.num_random())?;
    if dataset.num_individuals() == 0 {
        return Err(Error::Empty("individuals"));
    }
    let start = Instant::now();
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(dataset, hyper, config, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(McmcResult {
        chains,
        config: config.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

impl McmcResult {
    pub fn all_draws(&self) -> Vec<PopulationDraw> {
        self.chains.iter().flat_map(|c| c.draws.iter().cloned()).collect()
    }

    pub fn num_retained(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// Posterior means over all retained draws of all chains.
    pub fn point_estimates(&self) -> Result<PointEstimates> {
        let draws = self.all_draws();
        let mean = crate::estimate::draw_mean(&draws).ok_or(Error::Empty("retained draws"))?;
        let n = self.chains[0].beta_means.len();
        let chains = self.chains.len() as f64;
        let betas = (0..n)
            .map(|i| self.chains.iter().map(|c| &c.beta_means[i]).sum::<DVector<f64>>() / chains)
            .collect();
        Ok(PointEstimates {
            alpha: mean.alpha,
            zeta: mean.zeta,
            omega: mean.omega,
            betas,
        })
    }

    pub fn estimate_file(&self) -> Result<EstimateFile> {
        Ok(EstimateFile {
            schema_version: ESTIMATE_SCHEMA_VERSION,
            method: "MCMC".into(),
            iterations: self.config.iterations,
            converged: true,
            wall_time_secs: self.wall_time_secs,
            point: self.point_estimates()?,
            posterior: PopulationPosterior::Draws { draws: self.all_draws() },
        })
    }
}
