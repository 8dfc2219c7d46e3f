//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Lower-triangular packing is row-major including the diagonal:
//! `(0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...`. The same ordering defines
//! the unique elements of a covariance matrix for RMSE reporting.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub fn cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(context))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn chol_lower(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, context)?.l())
}

/// Lower Cholesky factor that tolerates positive semi-definite input (zero
/// variance directions map to zero columns).
pub fn chol_lower_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    let mut l = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d <= 1e-300 {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..k {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}

pub fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, context)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn log_det_spd(m: &DMatrix<f64>, context: &'static str) -> Result<f64> {
    let l = chol_lower(m, context)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || Cholesky::new(m.clone()).is_some()
}

pub fn lower_len(k: usize) -> usize {
    k * (k + 1) / 2
}

pub fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(lower_len(k));
    for i in 0..k {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn unpack_lower(values: &[f64], k: usize) -> DMatrix<f64> {
    debug_assert_eq!(values.len(), lower_len(k));
    let mut m = DMatrix::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in 0..=i {
            m[(i, j)] = values[idx];
            idx += 1;
        }
    }
    m
}

pub fn dvec(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

/// `A · B` where `A` is a `rows × cols` row-major slice and `b` has `cols` entries.
#[inline]
pub fn row_major_matvec(a: &[f64], cols: usize, b: &[f64], out: &mut [f64]) {
    if cols == 0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    for (o, row) in out.iter_mut().zip(a.chunks_exact(cols)) {
        *o = row.iter().zip(b).map(|(x, y)| x * y).sum();
    }
}

/// `Aᵀ · v` accumulated into `out` for a row-major `rows × cols` slice.
#[inline]
pub fn row_major_tmatvec_add(a: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    if cols == 0 {
        return;
    }
    for (row, &vi) in a.chunks_exact(cols).zip(v) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x * vi;
        }
    }
}

/// Quadratic form `xᵀ M x` for a small dense matrix.
#[inline]
pub fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = x.len();
    let mut s = 0.0;
    for i in 0..k {
        let mut row = 0.0;
        for j in 0..k {
            row += m[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}

/// Lower-triangular matrix times vector, `L ξ`, added onto `mean`.
#[inline]
pub fn affine_lower(mean: &[f64], l: &DMatrix<f64>, xi: &[f64], out: &mut [f64]) {
    let k = mean.len();
    for i in 0..k {
        let mut s = mean[i];
        for j in 0..=i {
            s += l[(i, j)] * xi[j];
        }
        out[i] = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_packing_is_row_major() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 3.0, 0.0, 4.0, 5.0, 6.0]);
        assert_eq!(pack_lower(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unpack_lower(&pack_lower(&m), 3), m);
    }

    #[test]
    fn psd_cholesky_handles_zero_matrix() {
        let z = DMatrix::zeros(3, 3);
        assert_eq!(chol_lower_psd(&z), z);
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = chol_lower_psd(&m);
        assert!((&l * l.transpose() - &m).norm() < 1e-12);
    }

    #[test]
    fn inverse_of_singular_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inverse(&m, "test").is_err());
    }
}
