//! Expected log-sum-exp `E_q[LSE(X Γ)]` under a Gaussian `q(Γ)`.
//!
//! Three treatments are provided: a second-order Taylor (delta-method)
//! approximation, quasi-Monte Carlo averaging over fixed standard-normal
//! draws, and the modified Jensen (MJI) upper bound with its auxiliary
//! simplex. The public functions work on one [`Occasion`] with separate
//! fixed- and random-parameter factors; the `*_kernel` functions work on one
//! parameter block with the other block's contribution folded into offsets
//! and also accumulate gradients.

use nalgebra::{DMatrix, DVector};

use crate::data::Occasion;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mnl::{lse, softmax_into};
use crate::quasirandom::DrawBatch;

pub const MJI_TOLERANCE: f64 = 1e-8;
pub const MJI_MAX_SWEEPS: usize = 100;
const MJI_DAMPING: f64 = 0.5;

/// Gaussian factor with a cached lower Cholesky factor. Zero-variance
/// directions are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFactor {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianFactor {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::dims("factor covariance", k, cov.nrows()));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(Error::NotPositiveDefinite("factor covariance is not symmetric"));
        }
        let chol = match nalgebra::Cholesky::new(cov.clone()) {
            Some(c) => c.l(),
            None if linalg::min_eigenvalue(&cov) >= -1e-12 * scale => linalg::chol_lower_psd(&cov),
            None => return Err(Error::NotPositiveDefinite("factor covariance")),
        };
        Ok(Self { mean, cov, chol })
    }

    pub fn from_chol(mean: DVector<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if chol.nrows() != k || chol.ncols() != k {
            return Err(Error::dims("factor Cholesky", k, chol.nrows()));
        }
        let chol = chol.lower_triangle();
        let cov = &chol * chol.transpose();
        Ok(Self { mean, cov, chol })
    }

    /// Point mass at `mean`.
    pub fn point(mean: DVector<f64>) -> Self {
        let k = mean.len();
        Self {
            mean,
            cov: DMatrix::zeros(k, k),
            chol: DMatrix::zeros(k, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }
}

/// One simplex vector `a_nt` per choice occasion, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct MjiAuxiliary {
    num_alternatives: usize,
    values: Vec<f64>,
}

impl MjiAuxiliary {
    pub fn uniform(num_occasions: usize, num_alternatives: usize) -> Self {
        Self {
            num_alternatives,
            values: vec![1.0 / num_alternatives as f64; num_occasions * num_alternatives],
        }
    }

    pub fn num_occasions(&self) -> usize {
        self.values.len() / self.num_alternatives.max(1)
    }

    pub fn entry(&self, occasion: usize) -> &[f64] {
        let j = self.num_alternatives;
        &self.values[occasion * j..(occasion + 1) * j]
    }

    pub fn entry_mut(&mut self, occasion: usize) -> &mut [f64] {
        let j = self.num_alternatives;
        &mut self.values[occasion * j..(occasion + 1) * j]
    }

    /// Contiguous entries for occasions `start..end`.
    pub fn range_mut(&mut self, start: usize, end: usize) -> &mut [f64] {
        let j = self.num_alternatives;
        &mut self.values[start * j..end * j]
    }

    pub fn validate(&self) -> Result<()> {
        for o in 0..self.num_occasions() {
            check_simplex(self.entry(o))?;
        }
        Ok(())
    }
}

pub fn check_simplex(a: &[f64]) -> Result<()> {
    let sum: f64 = a.iter().sum();
    if (sum - 1.0).abs() > 1e-10 || a.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::NotSimplex { sum });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MjiRefresh {
    pub sweeps: usize,
    pub max_change: f64,
    pub converged: bool,
}

/// Joint design `[X_F X_R]` (row-major `J × (L+K)`), mean and block-diagonal
/// covariance of `Γ = [α; β]`.
struct Composite {
    x: Vec<f64>,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

fn composite(occ: &Occasion<'_>, alpha: &GaussianFactor, beta: &GaussianFactor) -> Result<Composite> {
    let (l, k) = (occ.num_fixed(), occ.num_random());
    if alpha.dim() != l {
        return Err(Error::dims("fixed-parameter factor", l, alpha.dim()));
    }
    if beta.dim() != k {
        return Err(Error::dims("random-parameter factor", k, beta.dim()));
    }
    let j = occ.num_alternatives;
    let p = l + k;
    let mut x = Vec::with_capacity(j * p);
    for r in 0..j {
        x.extend_from_slice(&occ.fixed[r * l..(r + 1) * l]);
        x.extend_from_slice(&occ.random[r * k..(r + 1) * k]);
    }
    let mut mean = alpha.mean().as_slice().to_vec();
    mean.extend_from_slice(beta.mean().as_slice());
    let mut cov = DMatrix::zeros(p, p);
    cov.view_mut((0, 0), (l, l)).copy_from(alpha.cov());
    cov.view_mut((l, l), (k, k)).copy_from(beta.cov());
    let mut chol = DMatrix::zeros(p, p);
    chol.view_mut((0, 0), (l, l)).copy_from(alpha.chol());
    chol.view_mut((l, l), (k, k)).copy_from(beta.chol());
    Ok(Composite { x, mean, cov, chol })
}

pub fn elise_delta(occ: &Occasion<'_>, alpha: &GaussianFactor, beta: &GaussianFactor) -> Result<f64> {
    let c = composite(occ, alpha, beta)?;
    let j = occ.num_alternatives;
    Ok(delta_kernel(&c.x, j, &c.mean, &c.cov, &vec![0.0; j], None, None, None))
}

/// QMC average over paired draws: row `d` of `alpha_draws` and of
/// `beta_draws` together form `ξ_d`.
pub fn elise_qmc(
    occ: &Occasion<'_>,
    alpha: &GaussianFactor,
    beta: &GaussianFactor,
    alpha_draws: &DrawBatch,
    beta_draws: &DrawBatch,
) -> Result<f64> {
    let c = composite(occ, alpha, beta)?;
    if alpha_draws.dim() != alpha.dim() {
        return Err(Error::dims("fixed-parameter draws", alpha.dim(), alpha_draws.dim()));
    }
    if beta_draws.dim() != beta.dim() {
        return Err(Error::dims("random-parameter draws", beta.dim(), beta_draws.dim()));
    }
    let d = beta_draws.num_draws();
    if alpha_draws.num_draws() != d {
        return Err(Error::dims("draw count", d, alpha_draws.num_draws()));
    }
    let mut xi = Vec::with_capacity(d * (alpha.dim() + beta.dim()));
    for r in 0..d {
        xi.extend_from_slice(alpha_draws.draw(r));
        xi.extend_from_slice(beta_draws.draw(r));
    }
    let j = occ.num_alternatives;
    Ok(qmc_kernel(&c.x, j, &c.mean, &c.chol, &xi, &vec![0.0; d * j], None, None))
}

pub fn elise_mji_bound(
    occ: &Occasion<'_>,
    alpha: &GaussianFactor,
    beta: &GaussianFactor,
    aux: &[f64],
) -> Result<f64> {
    let c = composite(occ, alpha, beta)?;
    let j = occ.num_alternatives;
    if aux.len() != j {
        return Err(Error::dims("auxiliary simplex", j, aux.len()));
    }
    check_simplex(aux)?;
    Ok(mji_kernel(&c.x, j, &c.mean, &c.cov, aux, &vec![0.0; j], &vec![0.0; j], None, None))
}

/// Iterates the auxiliary fixed point with damping until the largest change
/// falls below [`MJI_TOLERANCE`] or [`MJI_MAX_SWEEPS`] is reached.
pub fn mji_refresh_aux(
    occ: &Occasion<'_>,
    alpha: &GaussianFactor,
    beta: &GaussianFactor,
    aux: &mut [f64],
) -> Result<MjiRefresh> {
    let c = composite(occ, alpha, beta)?;
    let j = occ.num_alternatives;
    if aux.len() != j {
        return Err(Error::dims("auxiliary simplex", j, aux.len()));
    }
    check_simplex(aux)?;
    Ok(mji_fixed_point(&c.x, j, &c.mean, &c.cov, aux))
}

/// Undamped right-hand side of the auxiliary equation evaluated at `aux`.
pub fn mji_aux_map(x: &[f64], j: usize, mean: &[f64], cov: &DMatrix<f64>, aux: &[f64], out: &mut [f64]) {
    let p = mean.len();
    let mut abar = vec![0.0; p];
    linalg::row_major_tmatvec_add(x, p, aux, &mut abar);
    let mut u = vec![0.0; j];
    for (k, uk) in u.iter_mut().enumerate() {
        let xk = &x[k * p..(k + 1) * p];
        let mut quad = 0.0;
        for a in 0..p {
            let mut row = 0.0;
            for b in 0..p {
                row += cov[(a, b)] * xk[b];
            }
            quad += (xk[a] - 2.0 * abar[a]) * row;
        }
        *uk = xk.iter().zip(mean).map(|(xi, m)| xi * m).sum::<f64>() + 0.5 * quad;
    }
    softmax_into(&u, out);
}

pub(crate) fn mji_fixed_point(x: &[f64], j: usize, mean: &[f64], cov: &DMatrix<f64>, aux: &mut [f64]) -> MjiRefresh {
    let mut next = vec![0.0; j];
    let mut max_change = f64::INFINITY;
    for sweep in 1..=MJI_MAX_SWEEPS {
        mji_aux_map(x, j, mean, cov, aux, &mut next);
        max_change = 0.0;
        let mut sum = 0.0;
        for (a, &n) in aux.iter_mut().zip(&next) {
            let blended = (1.0 - MJI_DAMPING) * *a + MJI_DAMPING * n;
            max_change = f64::max(max_change, (blended - *a).abs());
            *a = blended;
            sum += blended;
        }
        aux.iter_mut().for_each(|a| *a /= sum);
        if max_change < MJI_TOLERANCE {
            return MjiRefresh {
                sweeps: sweep,
                max_change,
                converged: true,
            };
        }
    }
    MjiRefresh {
        sweeps: MJI_MAX_SWEEPS,
        max_change,
        converged: false,
    }
}

/// Delta-method E-LSE for one block with design `x` (row-major `J × P`),
/// mean `mu` and covariance `sigma`. `off_v` adds fixed utilities and
/// `off_s` (row-major `J × J`) the other block's utility covariance.
///
/// Accumulates `∂/∂μ` into `grad_mu` and `∂/∂Σ` into `grad_sigma`.
#[allow(clippy::too_many_arguments)]
pub fn delta_kernel(
    x: &[f64],
    j: usize,
    mu: &[f64],
    sigma: &DMatrix<f64>,
    off_v: &[f64],
    off_s: Option<&[f64]>,
    grad_mu: Option<&mut [f64]>,
    grad_sigma: Option<&mut DMatrix<f64>>,
) -> f64 {
    let p_dim = mu.len();
    let mut v = vec![0.0; j];
    linalg::row_major_matvec(x, p_dim, mu, &mut v);
    v.iter_mut().zip(off_v).for_each(|(a, b)| *a += b);
    let mut p = vec![0.0; j];
    let g = softmax_into(&v, &mut p);

    // S = off_s + X Σ Xᵀ
    let mut xs = vec![0.0; j * p_dim];
    for r in 0..j {
        let xr = &x[r * p_dim..(r + 1) * p_dim];
        for c in 0..p_dim {
            let mut acc = 0.0;
            for b in 0..p_dim {
                acc += xr[b] * sigma[(b, c)];
            }
            xs[r * p_dim + c] = acc;
        }
    }
    let mut s = vec![0.0; j * j];
    for r in 0..j {
        for c in 0..=r {
            let mut acc: f64 = xs[r * p_dim..(r + 1) * p_dim]
                .iter()
                .zip(&x[c * p_dim..(c + 1) * p_dim])
                .map(|(a, b)| a * b)
                .sum();
            if let Some(o) = off_s {
                acc += o[r * j + c];
            }
            s[r * j + c] = acc;
            s[c * j + r] = acc;
        }
    }
    let mut sp = vec![0.0; j];
    for r in 0..j {
        sp[r] = (0..j).map(|c| s[r * j + c] * p[c]).sum();
    }
    let ps: f64 = (0..j).map(|r| p[r] * s[r * j + r]).sum();
    let psp: f64 = p.iter().zip(&sp).map(|(a, b)| a * b).sum();
    let value = g + 0.5 * (ps - psp);

    if let Some(gm) = grad_mu {
        // ∂/∂v = p + ½ H (diag(S) − 2 S p) with H z = p∘z − p (pᵀz)
        let z: Vec<f64> = (0..j).map(|r| s[r * j + r] - 2.0 * sp[r]).collect();
        let pz: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
        let gv: Vec<f64> = (0..j).map(|r| p[r] + 0.5 * p[r] * (z[r] - pz)).collect();
        linalg::row_major_tmatvec_add(x, p_dim, &gv, gm);
    }
    if let Some(gs) = grad_sigma {
        let mut xp = vec![0.0; p_dim];
        linalg::row_major_tmatvec_add(x, p_dim, &p, &mut xp);
        for r in 0..j {
            let xr = &x[r * p_dim..(r + 1) * p_dim];
            for a in 0..p_dim {
                let w = 0.5 * p[r] * xr[a];
                for b in 0..p_dim {
                    gs[(a, b)] += w * xr[b];
                }
            }
        }
        for a in 0..p_dim {
            for b in 0..p_dim {
                gs[(a, b)] -= 0.5 * xp[a] * xp[b];
            }
        }
    }
    value
}

/// MJI bound for one block. `aux` is the occasion's simplex over
/// alternatives, `off_v` the other block's mean utilities and `off_q` its
/// centred quadratic terms `d_k V_other d_kᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn mji_kernel(
    x: &[f64],
    j: usize,
    mu: &[f64],
    sigma: &DMatrix<f64>,
    aux: &[f64],
    off_v: &[f64],
    off_q: &[f64],
    grad_mu: Option<&mut [f64]>,
    grad_sigma: Option<&mut DMatrix<f64>>,
) -> f64 {
    let p_dim = mu.len();
    let mut abar = vec![0.0; p_dim];
    linalg::row_major_tmatvec_add(x, p_dim, aux, &mut abar);
    let mut d = vec![0.0; j * p_dim];
    let mut u = vec![0.0; j];
    for k in 0..j {
        let xk = &x[k * p_dim..(k + 1) * p_dim];
        let dk = &mut d[k * p_dim..(k + 1) * p_dim];
        for a in 0..p_dim {
            dk[a] = xk[a] - abar[a];
        }
        let q = linalg::quad_form(sigma, dk) + off_q[k];
        u[k] = off_v[k] + xk.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() + 0.5 * q;
    }
    let mut r = vec![0.0; j];
    let value = softmax_into(&u, &mut r);
    if let Some(gm) = grad_mu {
        linalg::row_major_tmatvec_add(x, p_dim, &r, gm);
    }
    if let Some(gs) = grad_sigma {
        for k in 0..j {
            let dk = &d[k * p_dim..(k + 1) * p_dim];
            for a in 0..p_dim {
                let w = 0.5 * r[k] * dk[a];
                for b in 0..p_dim {
                    gs[(a, b)] += w * dk[b];
                }
            }
        }
    }
    value
}

/// Centred quadratic terms `(X_k − ā) V (X_k − ā)ᵀ` of a block, used as
/// `off_q` when the other block is optimized.
pub fn mji_quadratic_terms(x: &[f64], j: usize, cov: &DMatrix<f64>, aux: &[f64], out: &mut [f64]) {
    let p_dim = cov.nrows();
    if p_dim == 0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut abar = vec![0.0; p_dim];
    linalg::row_major_tmatvec_add(x, p_dim, aux, &mut abar);
    let mut dk = vec![0.0; p_dim];
    for (k, o) in out.iter_mut().enumerate().take(j) {
        for a in 0..p_dim {
            dk[a] = x[k * p_dim + a] - abar[a];
        }
        *o = linalg::quad_form(cov, &dk);
    }
}

/// QMC E-LSE for one block: average over draws `xi` (row-major `D × P`) of
/// `LSE(off_d + X(μ + L ξ_d))`, with `off` row-major `D × J`.
///
/// Accumulates `∂/∂μ` into `grad_mu` and `∂/∂L` (lower triangle) into
/// `grad_chol`.
#[allow(clippy::too_many_arguments)]
pub fn qmc_kernel(
    x: &[f64],
    j: usize,
    mu: &[f64],
    chol: &DMatrix<f64>,
    xi: &[f64],
    off: &[f64],
    grad_mu: Option<&mut [f64]>,
    grad_chol: Option<&mut DMatrix<f64>>,
) -> f64 {
    let p_dim = mu.len();
    let num_draws = off.len() / j;
    let mut xm = vec![0.0; j];
    linalg::row_major_matvec(x, p_dim, mu, &mut xm);
    // XL, row-major J × P
    let mut xl = vec![0.0; j * p_dim];
    for r in 0..j {
        for c in 0..p_dim {
            let mut acc = 0.0;
            for b in c..p_dim {
                acc += x[r * p_dim + b] * chol[(b, c)];
            }
            xl[r * p_dim + c] = acc;
        }
    }
    let want_grad = grad_mu.is_some() || grad_chol.is_some();
    let mut u = vec![0.0; j];
    let mut p = vec![0.0; j];
    let mut p_sum = vec![0.0; j];
    let mut p_xi = vec![0.0; j * p_dim];
    let mut total = 0.0;
    for d in 0..num_draws {
        let xid = &xi[d * p_dim..(d + 1) * p_dim];
        for k in 0..j {
            let mut acc = off[d * j + k] + xm[k];
            for c in 0..p_dim {
                acc += xl[k * p_dim + c] * xid[c];
            }
            u[k] = acc;
        }
        if want_grad {
            total += softmax_into(&u, &mut p);
            for k in 0..j {
                p_sum[k] += p[k];
                for c in 0..p_dim {
                    p_xi[k * p_dim + c] += p[k] * xid[c];
                }
            }
        } else {
            total += lse(&u);
        }
    }
    let inv = 1.0 / num_draws as f64;
    if let Some(gm) = grad_mu {
        let scaled: Vec<f64> = p_sum.iter().map(|x| x * inv).collect();
        linalg::row_major_tmatvec_add(x, p_dim, &scaled, gm);
    }
    if let Some(gl) = grad_chol {
        for a in 0..p_dim {
            for c in 0..=a {
                let acc: f64 = (0..j).map(|k| x[k * p_dim + a] * p_xi[k * p_dim + c]).sum();
                gl[(a, c)] += acc * inv;
            }
        }
    }
    total * inv
}
