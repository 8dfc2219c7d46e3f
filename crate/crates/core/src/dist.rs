//! Multivariate samplers: Gaussian and (inverse-)Wishart via the Bartlett
//! decomposition.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Fills `out` with independent standard normals.
pub fn standard_normals(rng: &mut impl Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// `mean + L ξ` with `ξ ~ N(0, I)`, `L` lower triangular.
pub fn sample_gaussian(rng: &mut impl Rng, mean: &DVector<f64>, chol: &DMatrix<f64>) -> DVector<f64> {
    let k = mean.len();
    let mut xi = vec![0.0; k];
    standard_normals(rng, &mut xi);
    let mut out = vec![0.0; k];
    linalg::affine_lower(mean.as_slice(), chol, &xi, &mut out);
    DVector::from_vec(out)
}

/// `W ~ Wishart(dof, V)` given the lower Cholesky factor of `V`.
pub fn sample_wishart_chol(rng: &mut impl Rng, dof: f64, scale_chol: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = scale_chol.nrows();
    if !(dof > k as f64 - 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Wishart degrees of freedom {dof} must exceed dimension minus one ({k} - 1)"
        )));
    }
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let chi = ChiSquared::new(dof - i as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = scale_chol * a;
    let mut w = &la * la.transpose();
    linalg::symmetrize(&mut w);
    Ok(w)
}

/// `Ω ~ IW(dof, S)`, i.e. `Ω⁻¹ ~ Wishart(dof, S⁻¹)`, with mean
/// `S / (dof − K − 1)`.
pub fn sample_inverse_wishart(rng: &mut impl Rng, dof: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = linalg::spd_inverse(scale, "inverse-Wishart scale")?;
    let chol = linalg::chol_lower(&inv, "inverse-Wishart scale")?;
    let w = sample_wishart_chol(rng, dof, &chol)?;
    let mut omega = linalg::spd_inverse(&w, "Wishart draw")?;
    linalg::symmetrize(&mut omega);
    Ok(omega)
}
