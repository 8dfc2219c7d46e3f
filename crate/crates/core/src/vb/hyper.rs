use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Prior constants shared by the variational and MCMC estimators.
///
/// `α ~ N(λ₀, Ξ₀)`, `ζ ~ N(μ₀, Σ₀)`, `Ω | a ~ IW(ν + K − 1, 2ν diag(a))`,
/// `a_k ~ Gamma(½, A_k⁻²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(with = "crate::serde_mat::vector")]
    pub lambda0: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub xi0: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub mu0: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub sigma0: DMatrix<f64>,
    pub nu: f64,
    #[serde(with = "crate::serde_mat::vector")]
    pub a_scale: DVector<f64>,
}

impl Hyperparameters {
    /// Diffuse defaults: `ν = 2`, `A_k = 10³`, zero means and `10³·I`
    /// covariances.
    pub fn diffuse(num_fixed: usize, num_random: usize) -> Self {
        Self {
            lambda0: DVector::zeros(num_fixed),
            xi0: DMatrix::identity(num_fixed, num_fixed) * 1e3,
            mu0: DVector::zeros(num_random),
            sigma0: DMatrix::identity(num_random, num_random) * 1e3,
            nu: 2.0,
            a_scale: DVector::from_element(num_random, 1e3),
        }
    }

    pub fn num_fixed(&self) -> usize {
        self.lambda0.len()
    }

    pub fn num_random(&self) -> usize {
        self.mu0.len()
    }

    /// Prior inverse-Wishart degrees of freedom `ν + K − 1`.
    pub fn omega_dof(&self) -> f64 {
        self.nu + self.num_random() as f64 - 1.0
    }

    /// Gamma shape of the `a_k` prior.
    pub fn a_shape(&self) -> f64 {
        0.5
    }

    /// Gamma rates `A_k⁻²` of the `a_k` prior.
    pub fn a_rate(&self) -> DVector<f64> {
        self.a_scale.map(|a| 1.0 / (a * a))
    }

    pub fn validate(&self, num_fixed: usize, num_random: usize) -> Result<()> {
        if self.lambda0.len() != num_fixed {
            return Err(Error::dims("prior mean of fixed parameters", num_fixed, self.lambda0.len()));
        }
        if self.xi0.nrows() != num_fixed || self.xi0.ncols() != num_fixed {
            return Err(Error::dims("prior covariance of fixed parameters", num_fixed, self.xi0.nrows()));
        }
        if self.mu0.len() != num_random {
            return Err(Error::dims("prior mean of ζ", num_random, self.mu0.len()));
        }
        if self.sigma0.nrows() != num_random || self.sigma0.ncols() != num_random {
            return Err(Error::dims("prior covariance of ζ", num_random, self.sigma0.nrows()));
        }
        if self.a_scale.len() != num_random {
            return Err(Error::dims("half-t scales", num_random, self.a_scale.len()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument("ν must be positive".into()));
        }
        if self.a_scale.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("half-t scales must be positive".into()));
        }
        if !linalg::is_positive_definite(&self.xi0) {
            return Err(Error::NotPositiveDefinite("prior covariance of fixed parameters"));
        }
        if !linalg::is_positive_definite(&self.sigma0) {
            return Err(Error::NotPositiveDefinite("prior covariance of ζ"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants() {
        let h = Hyperparameters::diffuse(7, 4);
        assert_eq!(h.omega_dof(), 5.0);
        assert_eq!(h.a_shape(), 0.5);
        assert!((h.a_rate()[0] - 1e-6).abs() < 1e-20);
        h.validate(7, 4).unwrap();
        assert!(h.validate(0, 4).is_err());
    }

    #[test]
    fn rejects_bad_prior() {
        let mut h = Hyperparameters::diffuse(0, 2);
        h.sigma0[(0, 0)] = -1.0;
        assert!(h.validate(0, 2).is_err());
        let mut h = Hyperparameters::diffuse(0, 2);
        h.nu = 0.0;
        assert!(h.validate(0, 2).is_err());
    }
}
