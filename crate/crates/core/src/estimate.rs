//! Method-agnostic estimation output: point estimates, a population-level
//! posterior (or sampling distribution) and the estimate JSON file.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::SeedStream;

pub const ESTIMATE_SCHEMA_VERSION: u32 = 1;

/// Attempts per asymptotic draw before giving up on a positive definite `Ω`.
const MAX_REDRAWS: usize = 100;

/// Point estimates of the fixed parameters, population mean and covariance
/// of the random parameters, and the individual-level random parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    #[serde(with = "crate::serde_mat::vector")]
    pub alpha: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub zeta: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub omega: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vectors")]
    pub betas: Vec<DVector<f64>>,
}

/// One joint draw of the population-level parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationDraw {
    #[serde(with = "crate::serde_mat::vector")]
    pub alpha: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub zeta: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub omega: DMatrix<f64>,
}

/// Distribution over `(α, ζ, Ω)` used by the posterior predictive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PopulationPosterior {
    /// `q(α) q(ζ) q(Ω)` with `q(Ω) = IW(w, Θ)`.
    Variational {
        #[serde(with = "crate::serde_mat::vector")]
        mu_alpha: DVector<f64>,
        #[serde(with = "crate::serde_mat::matrix")]
        sigma_alpha: DMatrix<f64>,
        #[serde(with = "crate::serde_mat::vector")]
        mu_zeta: DVector<f64>,
        #[serde(with = "crate::serde_mat::matrix")]
        sigma_zeta: DMatrix<f64>,
        w: f64,
        #[serde(with = "crate::serde_mat::matrix")]
        theta: DMatrix<f64>,
    },
    /// Retained sampler draws.
    Draws { draws: Vec<PopulationDraw> },
    /// Asymptotic normal over `φ = [α, ζ, vech_row(chol Ω)]`.
    Asymptotic {
        num_fixed: usize,
        num_random: usize,
        #[serde(with = "crate::serde_mat::vector")]
        phi: DVector<f64>,
        #[serde(with = "crate::serde_mat::matrix")]
        cov: DMatrix<f64>,
    },
}

/// Splits `φ = [α, ζ, lower rows of L]` and returns `(α, ζ, LLᵀ)`.
pub fn unpack_phi(phi: &[f64], num_fixed: usize, num_random: usize) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let (l, k) = (num_fixed, num_random);
    let chol = linalg::unpack_lower(&phi[l + k..], k);
    let mut omega = &chol * chol.transpose();
    linalg::symmetrize(&mut omega);
    (
        DVector::from_column_slice(&phi[..l]),
        DVector::from_column_slice(&phi[l..l + k]),
        omega,
    )
}

impl PopulationPosterior {
    pub fn num_fixed(&self) -> usize {
        match self {
            Self::Variational { mu_alpha, .. } => mu_alpha.len(),
            Self::Draws { draws } => draws.first().map_or(0, |d| d.alpha.len()),
            Self::Asymptotic { num_fixed, .. } => *num_fixed,
        }
    }

    pub fn num_random(&self) -> usize {
        match self {
            Self::Variational { mu_zeta, .. } => mu_zeta.len(),
            Self::Draws { draws } => draws.first().map_or(0, |d| d.zeta.len()),
            Self::Asymptotic { num_random, .. } => *num_random,
        }
    }

    /// `count` draws of `(α, ζ, Ω)`. Stored sampler draws are thinned
    /// evenly (or reused cyclically when fewer than `count` are stored).
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<PopulationDraw>> {
        let mut rng = SeedStream::new(seed).rng(&[]);
        match self {
            Self::Variational {
                mu_alpha,
                sigma_alpha,
                mu_zeta,
                sigma_zeta,
                w,
                theta,
            } => {
                let la = linalg::chol_lower(sigma_alpha, "covariance of q(α)")?;
                let lz = linalg::chol_lower(sigma_zeta, "covariance of q(ζ)")?;
                (0..count)
                    .map(|_| {
                        Ok(PopulationDraw {
                            alpha: dist::sample_gaussian(&mut rng, mu_alpha, &la),
                            zeta: dist::sample_gaussian(&mut rng, mu_zeta, &lz),
                            omega: dist::sample_inverse_wishart(&mut rng, *w, theta)?,
                        })
                    })
                    .collect()
            }
            Self::Draws { draws } => {
                if draws.is_empty() {
                    return Err(Error::Empty("posterior draws"));
                }
                Ok((0..count).map(|i| draws[i * draws.len() / count.max(1) % draws.len()].clone()).collect())
            }
            Self::Asymptotic {
                num_fixed,
                num_random,
                phi,
                cov,
            } => {
                let chol = linalg::chol_lower_psd(cov);
                (0..count)
                    .map(|_| {
                        for _ in 0..MAX_REDRAWS {
                            let p = dist::sample_gaussian(&mut rng, phi, &chol);
                            let (alpha, zeta, omega) = unpack_phi(p.as_slice(), *num_fixed, *num_random);
                            if linalg::is_positive_definite(&omega) {
                                return Ok(PopulationDraw { alpha, zeta, omega });
                            }
                        }
                        Err(Error::numerical(
                            "asymptotic predictive draw",
                            format!("no positive definite Ω in {MAX_REDRAWS} attempts"),
                        ))
                    })
                    .collect()
            }
        }
    }
}

/// Contents of an estimate JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub schema_version: u32,
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
    pub point: PointEstimates,
    pub posterior: PopulationPosterior,
}

impl EstimateFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let est: Self = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::schema(path, e.to_string()))?;
        if est.schema_version != ESTIMATE_SCHEMA_VERSION {
            return Err(Error::schema(
                path,
                format!("unsupported estimate schema version {}", est.schema_version),
            ));
        }
        let (l, k) = (est.point.alpha.len(), est.point.zeta.len());
        if est.point.omega.nrows() != k
            || est.point.omega.ncols() != k
            || est.point.betas.iter().any(|b| b.len() != k)
            || est.posterior.num_fixed() != l
            || est.posterior.num_random() != k
        {
            return Err(Error::schema(path, "inconsistent parameter dimensions"));
        }
        Ok(est)
    }
}

/// Mean of a set of population draws, used as a Monte Carlo check.
pub fn draw_mean(draws: &[PopulationDraw]) -> Option<PopulationDraw> {
    let first = draws.first()?;
    let n = draws.len() as f64;
    let mut acc = PopulationDraw {
        alpha: DVector::zeros(first.alpha.len()),
        zeta: DVector::zeros(first.zeta.len()),
        omega: DMatrix::zeros(first.omega.nrows(), first.omega.ncols()),
    };
    for d in draws {
        acc.alpha += &d.alpha;
        acc.zeta += &d.zeta;
        acc.omega += &d.omega;
    }
    acc.alpha /= n;
    acc.zeta /= n;
    acc.omega /= n;
    Some(acc)
}
