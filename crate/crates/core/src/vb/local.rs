//! Non-conjugate factor updates for `q(α)` and `q(β_n)`.
//!
//! A [`BlockProblem`] collects, for one Gaussian factor, every choice
//! occasion it touches with the other factor's contribution frozen into
//! offsets. It exposes the block's expected log joint (up to constants) with
//! analytic gradients, the NCVMP fixed-point step and the quasi-Newton
//! objective over `(μ, chol Σ)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VariationalPosterior;
use crate::data::ChoiceDataset;
use crate::elise::{delta_kernel, mji_kernel, mji_quadratic_terms, qmc_kernel, GaussianFactor};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{self, BfgsOptions, Termination};
use crate::quasirandom::{mlhs_normal_draws, DrawBatch};
use crate::seed::{tag, SeedStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Treatment {
    Delta,
    Qmc,
    Mji,
}

/// MLHS draws generated once per run: one `D × L` batch shared by all
/// individuals and one `D × K` batch per individual.
#[derive(Clone, Debug)]
pub struct QmcDraws {
    pub fixed: DrawBatch,
    pub random: Vec<DrawBatch>,
}

impl QmcDraws {
    pub fn generate(num_individuals: usize, num_fixed: usize, num_random: usize, draws: usize, seed: u64) -> Result<Self> {
        let s = SeedStream::new(seed);
        Ok(Self {
            fixed: mlhs_normal_draws(draws, num_fixed, s.derive(&[tag::QMC_FIXED]))?,
            random: (0..num_individuals)
                .map(|n| mlhs_normal_draws(draws, num_random, s.derive(&[tag::QMC_RANDOM, n as u64])))
                .collect::<Result<_>>()?,
        })
    }
}

enum Terms<'a> {
    Delta { off_v: Vec<f64>, off_s: Vec<f64> },
    Mji { aux: &'a [f64], off_v: Vec<f64>, off_q: Vec<f64> },
    Qmc { xi: &'a [f64], off: Vec<f64> },
}

struct BlockOccasion<'a> {
    x: &'a [f64],
    chosen: usize,
    terms: Terms<'a>,
}

pub struct BlockProblem<'a> {
    chunks: Vec<Vec<BlockOccasion<'a>>>,
    dim: usize,
    j: usize,
    treatment: Treatment,
    prior_prec: DMatrix<f64>,
    prior_mean: DVector<f64>,
}

/// Frozen snapshot of the global factors used to build block problems.
pub struct UpdateContext<'a> {
    dataset: &'a ChoiceDataset,
    post: &'a VariationalPosterior,
    treatment: Treatment,
    draws: Option<&'a QmcDraws>,
    beta_prior_prec: DMatrix<f64>,
    alpha_prior_prec: DMatrix<f64>,
    lambda0: DVector<f64>,
}

/// `X Σ Xᵀ` for row-major `x` (`J × P`), returned row-major `J × J`.
fn sandwich(x: &[f64], j: usize, sigma: &DMatrix<f64>) -> Vec<f64> {
    let p = sigma.nrows();
    let mut out = vec![0.0; j * j];
    if p == 0 {
        return out;
    }
    let mut xs = vec![0.0; p];
    for r in 0..j {
        let xr = &x[r * p..(r + 1) * p];
        for c in 0..p {
            xs[c] = (0..p).map(|b| xr[b] * sigma[(b, c)]).sum();
        }
        for c in 0..=r {
            let v: f64 = xs.iter().zip(&x[c * p..(c + 1) * p]).map(|(a, b)| a * b).sum();
            out[r * j + c] = v;
            out[c * j + r] = v;
        }
    }
    out
}

/// Per-draw utilities `X(μ + L ξ_d)`, row-major `D × J`.
fn draw_utilities(x: &[f64], j: usize, mean: &[f64], chol: &DMatrix<f64>, xi: &[f64], draws: usize) -> Vec<f64> {
    let p = mean.len();
    if p == 0 {
        return vec![0.0; draws * j];
    }
    let mut out = vec![0.0; draws * j];
    let mut g = vec![0.0; p];
    for d in 0..draws {
        linalg::affine_lower(mean, chol, &xi[d * p..(d + 1) * p], &mut g);
        linalg::row_major_matvec(x, p, &g, &mut out[d * j..(d + 1) * j]);
    }
    out
}

impl<'a> UpdateContext<'a> {
    pub fn new(
        dataset: &'a ChoiceDataset,
        post: &'a VariationalPosterior,
        hyper: &super::Hyperparameters,
        treatment: Treatment,
        draws: Option<&'a QmcDraws>,
    ) -> Result<Self> {
        if treatment == Treatment::Qmc && draws.is_none() {
            return Err(Error::InvalidArgument("QMC treatment requires simulation draws".into()));
        }
        if treatment == Treatment::Mji && post.mji_aux.is_none() {
            return Err(Error::InvalidArgument("MJI treatment requires auxiliary parameters".into()));
        }
        let theta_inv = linalg::spd_inverse(&post.theta, "inverse-Wishart scale Θ")?;
        Ok(Self {
            dataset,
            post,
            treatment,
            draws,
            beta_prior_prec: theta_inv * post.w,
            alpha_prior_prec: linalg::spd_inverse(&hyper.xi0, "prior covariance of fixed parameters")?,
            lambda0: hyper.lambda0.clone(),
        })
    }

    /// Draw count, or 0 for deterministic treatments.
    fn num_draws(&self) -> usize {
        self.draws.map_or(0, |d| d.fixed.num_draws())
    }

    pub fn beta_problem(&self, n: usize) -> BlockProblem<'a> {
        let ds = self.dataset;
        let post = self.post;
        let j = ds.num_alternatives();
        let l = ds.num_fixed();
        let ind = ds.individual(n);
        let offset = ds.occasion_offset(n);
        let alpha_mean = post.alpha.mean().as_slice();
        let alpha_draw_utils = |x: &[f64]| -> Vec<f64> {
            let draws = self.draws.expect("QMC draws");
            draw_utilities(x, j, alpha_mean, post.alpha.chol(), draws.fixed.as_slice(), self.num_draws())
        };
        let occasions = ind
            .occasions()
            .enumerate()
            .map(|(t, occ)| {
                let mut off_v = vec![0.0; j];
                linalg::row_major_matvec(occ.fixed, l, alpha_mean, &mut off_v);
                let terms = match self.treatment {
                    Treatment::Delta => Terms::Delta {
                        off_v,
                        off_s: sandwich(occ.fixed, j, post.alpha.cov()),
                    },
                    Treatment::Mji => {
                        let aux = post.mji_aux.as_ref().expect("MJI auxiliaries").entry(offset + t);
                        let mut off_q = vec![0.0; j];
                        mji_quadratic_terms(occ.fixed, j, post.alpha.cov(), aux, &mut off_q);
                        Terms::Mji { aux, off_v, off_q }
                    }
                    Treatment::Qmc => Terms::Qmc {
                        xi: self.draws.expect("QMC draws").random[n].as_slice(),
                        off: alpha_draw_utils(occ.fixed),
                    },
                };
                BlockOccasion {
                    x: occ.random,
                    chosen: occ.chosen,
                    terms,
                }
            })
            .collect();
        BlockProblem {
            chunks: vec![occasions],
            dim: ds.num_random(),
            j,
            treatment: self.treatment,
            prior_prec: self.beta_prior_prec.clone(),
            prior_mean: post.zeta.mean().clone(),
        }
    }

    pub fn alpha_problem(&self) -> BlockProblem<'a> {
        let ds = self.dataset;
        let post = self.post;
        let j = ds.num_alternatives();
        let k = ds.num_random();
        let chunks = (0..ds.num_individuals())
            .into_par_iter()
            .map(|n| {
                let beta = &post.betas[n];
                let offset = ds.occasion_offset(n);
                ds.individual(n)
                    .occasions()
                    .enumerate()
                    .map(|(t, occ)| {
                        let mut off_v = vec![0.0; j];
                        linalg::row_major_matvec(occ.random, k, beta.mean().as_slice(), &mut off_v);
                        let terms = match self.treatment {
                            Treatment::Delta => Terms::Delta {
                                off_v,
                                off_s: sandwich(occ.random, j, beta.cov()),
                            },
                            Treatment::Mji => {
                                let aux = post.mji_aux.as_ref().expect("MJI auxiliaries").entry(offset + t);
                                let mut off_q = vec![0.0; j];
                                mji_quadratic_terms(occ.random, j, beta.cov(), aux, &mut off_q);
                                Terms::Mji { aux, off_v, off_q }
                            }
                            Treatment::Qmc => {
                                let draws = self.draws.expect("QMC draws");
                                Terms::Qmc {
                                    xi: draws.fixed.as_slice(),
                                    off: draw_utilities(
                                        occ.random,
                                        j,
                                        beta.mean().as_slice(),
                                        beta.chol(),
                                        draws.random[n].as_slice(),
                                        draws.random[n].num_draws(),
                                    ),
                                }
                            }
                        };
                        BlockOccasion {
                            x: occ.fixed,
                            chosen: occ.chosen,
                            terms,
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        BlockProblem {
            chunks,
            dim: ds.num_fixed(),
            j,
            treatment: self.treatment,
            prior_prec: self.alpha_prior_prec.clone(),
            prior_mean: self.lambda0.clone(),
        }
    }
}

/// Likelihood-surrogate value with gradients: `(value, ∂/∂μ, ∂/∂Σ or ∂/∂L)`.
type Eval = (f64, Vec<f64>, DMatrix<f64>);

#[derive(Clone, Debug)]
pub struct NcvmpStep {
    pub factor: GaussianFactor,
    /// The fixed-point covariance failed the eigenvalue guard and the
    /// previous covariance was kept.
    pub reverted: bool,
}

#[derive(Clone, Debug)]
pub struct QnStep {
    pub factor: GaussianFactor,
    pub objective_before: f64,
    pub objective_after: f64,
    pub termination: Termination,
}

impl BlockProblem<'_> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn treatment(&self) -> Treatment {
        self.treatment
    }

    pub fn num_occasions(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum()
    }

    fn reduce(&self, per_chunk: impl Fn(&[BlockOccasion<'_>]) -> Eval + Sync) -> Eval {
        let p = self.dim;
        let parts: Vec<Eval> = if self.chunks.len() > 1 {
            self.chunks.par_iter().map(|c| per_chunk(c)).collect()
        } else {
            self.chunks.iter().map(|c| per_chunk(c)).collect()
        };
        let mut value = 0.0;
        let mut gm = vec![0.0; p];
        let mut gs = DMatrix::zeros(p, p);
        for (v, m, s) in parts {
            value += v;
            gm.iter_mut().zip(&m).for_each(|(a, b)| *a += b);
            gs += s;
        }
        (value, gm, gs)
    }

    /// `Σ_o [x_{o,y} μ − E-LSE_o]` with gradients in `(μ, Σ)`.
    fn loglik_sigma(&self, mu: &[f64], sigma: &DMatrix<f64>) -> Eval {
        let (p, j) = (self.dim, self.j);
        self.reduce(|occs| {
            let mut value = 0.0;
            let mut gm = vec![0.0; p];
            let mut ge = vec![0.0; p];
            let mut gs = DMatrix::zeros(p, p);
            for o in occs {
                let xy = &o.x[o.chosen * p..(o.chosen + 1) * p];
                value += xy.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>();
                gm.iter_mut().zip(xy).for_each(|(g, x)| *g += x);
                value -= match &o.terms {
                    Terms::Delta { off_v, off_s } => {
                        delta_kernel(o.x, j, mu, sigma, off_v, Some(off_s), Some(&mut ge), Some(&mut gs))
                    }
                    Terms::Mji { aux, off_v, off_q } => {
                        mji_kernel(o.x, j, mu, sigma, aux, off_v, off_q, Some(&mut ge), Some(&mut gs))
                    }
                    Terms::Qmc { .. } => unreachable!("QMC blocks are evaluated through the Cholesky factor"),
                };
            }
            gm.iter_mut().zip(&ge).for_each(|(a, b)| *a -= b);
            (value, gm, -gs)
        })
    }

    /// Same likelihood surrogate with gradients in `(μ, L)` (lower triangle).
    fn loglik_chol(&self, mu: &[f64], chol: &DMatrix<f64>) -> Eval {
        let (p, j) = (self.dim, self.j);
        if self.treatment != Treatment::Qmc {
            let sigma = chol * chol.transpose();
            let (v, gm, gs) = self.loglik_sigma(mu, &sigma);
            let gl = (&gs * chol * 2.0).lower_triangle();
            return (v, gm, gl);
        }
        self.reduce(|occs| {
            let mut value = 0.0;
            let mut gm = vec![0.0; p];
            let mut ge = vec![0.0; p];
            let mut gl = DMatrix::zeros(p, p);
            for o in occs {
                let xy = &o.x[o.chosen * p..(o.chosen + 1) * p];
                value += xy.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>();
                gm.iter_mut().zip(xy).for_each(|(g, x)| *g += x);
                let Terms::Qmc { xi, off } = &o.terms else {
                    unreachable!("treatment mismatch")
                };
                value -= qmc_kernel(o.x, j, mu, chol, xi, off, Some(&mut ge), Some(&mut gl));
            }
            gm.iter_mut().zip(&ge).for_each(|(a, b)| *a -= b);
            (value, gm, -gl)
        })
    }

    fn prior_terms(&self, mu: &[f64], sigma: &DMatrix<f64>) -> (f64, DVector<f64>) {
        let dev = DVector::from_column_slice(mu) - &self.prior_mean;
        let pdev = &self.prior_prec * &dev;
        let trace = self.prior_prec.component_mul(sigma).sum();
        (-0.5 * (trace + dev.dot(&pdev)), pdev)
    }

    /// Block expected log joint (entropy excluded) with gradients in
    /// `(μ, Σ)`. Not available for the QMC treatment.
    pub fn expected_log_joint(&self, mu: &[f64], sigma: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        if self.treatment == Treatment::Qmc {
            return Err(Error::UnsupportedMethod {
                name: "NCVMP-QMC".into(),
                reason: "covariance gradients are only derived for the delta and MJI treatments",
            });
        }
        let (ll, gm, gs) = self.loglik_sigma(mu, sigma);
        let (prior, pdev) = self.prior_terms(mu, sigma);
        let gm = DVector::from_vec(gm) - pdev;
        let gs = gs - &self.prior_prec * 0.5;
        Ok((ll + prior, gm, gs))
    }

    /// Block ELBO contribution (expected log joint plus `½ ln|Σ|`).
    pub fn elbo(&self, mu: &[f64], chol: &DMatrix<f64>) -> f64 {
        let (ll, _, _) = self.loglik_chol(mu, chol);
        let sigma = chol * chol.transpose();
        let (prior, _) = self.prior_terms(mu, &sigma);
        ll + prior + chol.diagonal().iter().map(|d| d.abs().ln()).sum::<f64>()
    }

    /// `Σ ← −(2 ∂E/∂Σ)⁻¹`, then `μ ← μ + Σ ∂E/∂μ`, both gradients taken at
    /// the incoming point.
    pub fn ncvmp_step(&self, current: &GaussianFactor) -> Result<NcvmpStep> {
        let mu = current.mean().as_slice();
        let (_, gm, gs) = self.expected_log_joint(mu, current.cov())?;
        let mut m = gs * -2.0;
        linalg::symmetrize(&mut m);
        let candidate = m.try_inverse().map(|mut inv| {
            linalg::symmetrize(&mut inv);
            inv
        });
        let (cov, reverted) = match candidate {
            Some(c) if c.iter().all(|v| v.is_finite()) && linalg::min_eigenvalue(&c) >= 1e-8 => (c, false),
            _ => (current.cov().clone(), true),
        };
        let mean = current.mean() + &cov * gm;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("NCVMP update", "non-finite mean"));
        }
        Ok(NcvmpStep {
            factor: GaussianFactor::new(mean, cov)?,
            reverted,
        })
    }

    /// Packs `(μ, L)` with the diagonal of `L` on the log scale.
    pub fn pack(mu: &[f64], chol: &DMatrix<f64>) -> Vec<f64> {
        let p = mu.len();
        let mut theta = mu.to_vec();
        for i in 0..p {
            for j in 0..=i {
                theta.push(if i == j { chol[(i, i)].max(1e-150).ln() } else { chol[(i, j)] });
            }
        }
        theta
    }

    pub fn unpack(theta: &[f64], p: usize) -> (Vec<f64>, DMatrix<f64>) {
        let mu = theta[..p].to_vec();
        let mut chol = DMatrix::zeros(p, p);
        let mut idx = p;
        for i in 0..p {
            for j in 0..=i {
                chol[(i, j)] = if i == j { theta[idx].exp() } else { theta[idx] };
                idx += 1;
            }
        }
        (mu, chol)
    }

    /// Negative block ELBO in packed coordinates, with its gradient.
    pub fn qn_objective(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.dim;
        let (mu, chol) = Self::unpack(theta, p);
        let (ll, gm, mut gl) = self.loglik_chol(&mu, &chol);
        let sigma = &chol * chol.transpose();
        let (prior, pdev) = self.prior_terms(&mu, &sigma);
        gl -= (&self.prior_prec * &chol).lower_triangle();
        let entropy: f64 = theta_log_diag(theta, p).sum();
        for i in 0..p {
            grad[i] = -(gm[i] - pdev[i]);
        }
        let mut idx = p;
        for i in 0..p {
            for j in 0..=i {
                grad[idx] = if i == j { -(gl[(i, i)] * chol[(i, i)] + 1.0) } else { -gl[(i, j)] };
                idx += 1;
            }
        }
        -(ll + prior + entropy)
    }

    pub fn qn_update(&self, current: &GaussianFactor, opts: &BfgsOptions) -> Result<QnStep> {
        let p = self.dim;
        let start = Self::pack(current.mean().as_slice(), current.chol());
        let mut g = vec![0.0; start.len()];
        let before = -self.qn_objective(&start, &mut g);
        let result = optim::minimize(|x, g| self.qn_objective(x, g), &start, opts);
        let (mu, chol) = Self::unpack(result.x.as_slice(), p);
        Ok(QnStep {
            factor: GaussianFactor::from_chol(DVector::from_vec(mu), chol)?,
            objective_before: before,
            objective_after: -result.value,
            termination: result.termination,
        })
    }
}

fn theta_log_diag(theta: &[f64], p: usize) -> impl Iterator<Item = f64> + '_ {
    (0..p).map(move |i| theta[p + i * (i + 1) / 2 + i])
}
