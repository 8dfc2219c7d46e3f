use nalgebra::{DMatrix, DVector};

use super::Hyperparameters;
use crate::data::ChoiceDataset;
use crate::elise::{GaussianFactor, MjiAuxiliary};
use crate::error::{Error, Result};
use crate::linalg;

/// Mean-field variational posterior
/// `q(α) q(ζ) q(Ω) Π_k q(a_k) Π_n q(β_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalPosterior {
    pub alpha: GaussianFactor,
    pub zeta: GaussianFactor,
    /// Inverse-Wishart degrees of freedom `ν + N + K − 1`.
    pub w: f64,
    /// Inverse-Wishart scale.
    pub theta: DMatrix<f64>,
    /// Gamma shape `(ν + K)/2`.
    pub c: f64,
    /// Gamma rates.
    pub d: DVector<f64>,
    pub betas: Vec<GaussianFactor>,
    pub mji_aux: Option<MjiAuxiliary>,
}

impl VariationalPosterior {
    /// Neutral starting point: zero means and identity covariances for
    /// `α`, `ζ` and every `β_n`, `d_k = A_k⁻² + ν w`, and `Θ` evaluated from
    /// those factors.
    pub fn initialize(dataset: &ChoiceDataset, hyper: &Hyperparameters, with_mji: bool) -> Result<Self> {
        let (l, k, n) = (dataset.num_fixed(), dataset.num_random(), dataset.num_individuals());
        hyper.validate(l, k)?;
        let unit = |dim: usize| GaussianFactor::new(DVector::zeros(dim), DMatrix::identity(dim, dim));
        let w = hyper.nu + n as f64 + k as f64 - 1.0;
        let c = 0.5 * (hyper.nu + k as f64);
        let d = hyper.a_rate().map(|r| r + hyper.nu * w);
        let zeta = unit(k)?;
        let betas = vec![unit(k)?; n];
        let theta = update_omega_factor(hyper, c, &d, &zeta, &betas);
        Ok(Self {
            alpha: unit(l)?,
            zeta,
            w,
            theta,
            c,
            d,
            betas,
            mji_aux: with_mji.then(|| MjiAuxiliary::uniform(dataset.total_occasions(), dataset.num_alternatives())),
        })
    }

    pub fn num_individuals(&self) -> usize {
        self.betas.len()
    }

    pub fn num_random(&self) -> usize {
        self.zeta.dim()
    }

    pub fn num_fixed(&self) -> usize {
        self.alpha.dim()
    }

    /// Stopping-rule vector `[μ_α, μ_ζ, diag(Θ), d]`.
    pub fn monitored(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_fixed() + 3 * self.num_random());
        v.extend(self.alpha.mean().iter());
        v.extend(self.zeta.mean().iter());
        v.extend(self.theta.diagonal().iter());
        v.extend(self.d.iter());
        v
    }

    pub fn monitored_names(num_fixed: usize, num_random: usize) -> Vec<String> {
        let mut names = Vec::new();
        names.extend((0..num_fixed).map(|i| format!("mu_alpha_{i}")));
        names.extend((0..num_random).map(|i| format!("mu_zeta_{i}")));
        names.extend((0..num_random).map(|i| format!("theta_{i}{i}")));
        names.extend((0..num_random).map(|i| format!("d_{i}")));
        names
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !linalg::is_positive_definite(&self.theta) {
            return Err(Error::NotPositiveDefinite("inverse-Wishart scale Θ"));
        }
        if self.d.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::numerical("gamma rates", "non-positive rate"));
        }
        Ok(())
    }
}

/// `Σ_ζ = (Σ₀⁻¹ + N w Θ⁻¹)⁻¹`, `μ_ζ = Σ_ζ (Σ₀⁻¹ μ₀ + w Θ⁻¹ Σ_n μ_βn)`.
pub fn update_zeta_factor(
    hyper: &Hyperparameters,
    w: f64,
    theta: &DMatrix<f64>,
    betas: &[GaussianFactor],
) -> Result<GaussianFactor> {
    let k = hyper.num_random();
    let theta_inv = linalg::spd_inverse(theta, "inverse-Wishart scale Θ")?;
    let sigma0_inv = linalg::spd_inverse(&hyper.sigma0, "prior covariance of ζ")?;
    let n = betas.len() as f64;
    let precision = &sigma0_inv + &theta_inv * (n * w);
    let cov = linalg::spd_inverse(&precision, "precision of q(ζ)")?;
    let mut beta_sum = DVector::zeros(k);
    for b in betas {
        beta_sum += b.mean();
    }
    let mean = &cov * (&sigma0_inv * &hyper.mu0 + &theta_inv * beta_sum * w);
    GaussianFactor::new(mean, cov)
}

/// `Θ = 2ν diag(c/d) + N Σ_ζ + Σ_n [Σ_βn + (μ_βn − μ_ζ)(μ_βn − μ_ζ)ᵀ]`.
pub fn update_omega_factor(
    hyper: &Hyperparameters,
    c: f64,
    d: &DVector<f64>,
    zeta: &GaussianFactor,
    betas: &[GaussianFactor],
) -> DMatrix<f64> {
    let mut theta = DMatrix::from_diagonal(&d.map(|dk| 2.0 * hyper.nu * c / dk));
    theta += zeta.cov() * betas.len() as f64;
    for b in betas {
        let dev = b.mean() - zeta.mean();
        theta += b.cov();
        theta += &dev * dev.transpose();
    }
    linalg::symmetrize(&mut theta);
    theta
}

/// `c = (ν + K)/2`, `d_k = A_k⁻² + ν w (Θ⁻¹)_kk`.
pub fn update_a_factors(hyper: &Hyperparameters, w: f64, theta: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let k = hyper.num_random();
    let theta_inv = linalg::spd_inverse(theta, "inverse-Wishart scale Θ")?;
    let rate = hyper.a_rate();
    let d = DVector::from_fn(k, |i, _| rate[i] + hyper.nu * w * theta_inv[(i, i)]);
    Ok((0.5 * (hyper.nu + k as f64), d))
}
