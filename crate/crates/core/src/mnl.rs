//! Multinomial logit primitives: log-sum-exp, choice probabilities, the
//! softmax curvature `diag(p) − ppᵀ` and panel sequence log-likelihoods.

use nalgebra::DMatrix;

use crate::data::{Individual, Occasion};
use crate::error::{Error, Result};

/// Max-shifted log-sum-exp. Returns `-inf` for an empty slice.
#[inline]
pub fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Writes the softmax of `v` into `p` and returns `LSE(v)`.
#[inline]
pub fn softmax_into(v: &[f64], p: &mut [f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (pi, &vi) in p.iter_mut().zip(v) {
        *pi = (vi - m).exp();
        s += *pi;
    }
    let inv = 1.0 / s;
    p.iter_mut().for_each(|x| *x *= inv);
    m + s.ln()
}

fn check_utilities(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty("utility vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("utilities must be finite".into()));
    }
    Ok(())
}

pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    check_utilities(v)?;
    Ok(lse(v))
}

pub fn choice_probabilities(v: &[f64]) -> Result<Vec<f64>> {
    check_utilities(v)?;
    let mut p = vec![0.0; v.len()];
    softmax_into(v, &mut p);
    Ok(p)
}

/// `diag(p) − ppᵀ`, the Hessian of LSE expressed through probabilities.
pub fn softmax_curvature(p: &[f64]) -> Result<DMatrix<f64>> {
    if p.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-8 || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::NotSimplex { sum });
    }
    let j = p.len();
    Ok(DMatrix::from_fn(j, j, |a, b| if a == b { p[a] - p[a] * p[b] } else { -p[a] * p[b] }))
}

/// Deterministic utilities of one occasion: `X_F α + X_R β`.
#[inline]
pub fn utilities(occ: &Occasion<'_>, alpha: &[f64], beta: &[f64], out: &mut [f64]) {
    let (l, k) = (alpha.len(), beta.len());
    for (j, o) in out.iter_mut().enumerate() {
        let mut v = 0.0;
        if l > 0 {
            v += occ.fixed[j * l..(j + 1) * l].iter().zip(alpha).map(|(x, a)| x * a).sum::<f64>();
        }
        v += occ.random[j * k..(j + 1) * k].iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
        *o = v;
    }
}

/// `ln P(y_n | α, β_n) = Σ_t [V_{nt,y} − LSE(V_nt)]`.
pub fn sequence_log_likelihood(ind: &Individual<'_>, alpha: &[f64], beta: &[f64]) -> Result<f64> {
    if alpha.len() != ind.num_fixed {
        return Err(Error::dims("fixed parameters", ind.num_fixed, alpha.len()));
    }
    if beta.len() != ind.num_random {
        return Err(Error::dims("random parameters", ind.num_random, beta.len()));
    }
    let mut v = vec![0.0; ind.num_alternatives];
    Ok(ind
        .occasions()
        .map(|occ| {
            utilities(&occ, alpha, beta, &mut v);
            v[occ.chosen] - lse(&v)
        })
        .sum())
}

/// Deterministic utilities `V_ntj` of one choice set.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityBlock {
    values: Vec<f64>,
}

impl UtilityBlock {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_utilities(&values)?;
        Ok(Self { values })
    }

    pub fn from_occasion(occ: &Occasion<'_>, alpha: &[f64], beta: &[f64]) -> Result<Self> {
        if alpha.len() != occ.num_fixed() {
            return Err(Error::dims("fixed parameters", occ.num_fixed(), alpha.len()));
        }
        if beta.len() != occ.num_random() {
            return Err(Error::dims("random parameters", occ.num_random(), beta.len()));
        }
        let mut v = vec![0.0; occ.num_alternatives];
        utilities(occ, alpha, beta, &mut v);
        Self::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_sum_exp(&self) -> f64 {
        lse(&self.values)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.values.len()];
        softmax_into(&self.values, &mut p);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ChoiceDataset;
    use proptest::prelude::*;

    /// Pairwise summation of exp in extended form via sorted accumulation.
    fn oracle_lse(v: &[f64]) -> f64 {
        let mut terms: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for t in terms {
            let y = t - c;
            let z = s + y;
            c = (z - s) - y;
            s = z;
        }
        s.ln()
    }

    #[test]
    fn lse_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let frozen = oracle_lse(&[1.0, 2.0, 3.0]);
        assert!((frozen - 3.407605964).abs() < 1e-9);
        assert!((log_sum_exp(&[1.0, 2.0, 3.0]).unwrap() - 3.407605964444380).abs() < 1e-12);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn probability_examples() {
        let p = choice_probabilities(&[0.0; 7]).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
        let p = choice_probabilities(&[2f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_examples() {
        let h = softmax_curvature(&[0.5, 0.5]).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]));
        assert_eq!(softmax_curvature(&[1.0, 0.0]).unwrap(), DMatrix::zeros(2, 2));
        assert!(matches!(softmax_curvature(&[0.5, 0.6]), Err(Error::NotSimplex { .. })));
    }

    #[test]
    fn uniform_sequence_likelihood() {
        let ds = ChoiceDataset::new(
            7,
            vec![],
            vec!["x".into()],
            &[5],
            vec![],
            (0..35).map(|i| i as f64 * 0.1).collect(),
            vec![0, 1, 2, 3, 4],
        )
        .unwrap();
        let ll = sequence_log_likelihood(&ds.individual(0), &[], &[0.0]).unwrap();
        assert!((ll - 5.0 * (1.0f64 / 7.0).ln()).abs() < 1e-12);
        assert!((ll + 9.7296).abs() < 1e-4);
        assert!(sequence_log_likelihood(&ds.individual(0), &[], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn empty_sequence_likelihood_is_zero() {
        let ds = ChoiceDataset::new(3, vec![], vec!["x".into()], &[0], vec![], vec![], vec![]).unwrap();
        assert_eq!(sequence_log_likelihood(&ds.individual(0), &[], &[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn frozen_sequence_fixture() {
        // N=1, T=2, J=3, L=1, K=1.
        let ds = ChoiceDataset::new(
            3,
            vec!["f".into()],
            vec!["r".into()],
            &[2],
            vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.0],
            vec![0.2, -0.4, 1.0, 2.0, 0.0, -1.0],
            vec![2, 0],
        )
        .unwrap();
        let (a, b) = (0.7, -1.3);
        let mut oracle = 0.0;
        let fixed = [[1.0, 0.0, -1.0], [0.5, 0.5, 0.0]];
        let random = [[0.2, -0.4, 1.0], [2.0, 0.0, -1.0]];
        for (t, &y) in [2usize, 0].iter().enumerate() {
            let v: Vec<f64> = (0..3).map(|j| fixed[t][j] * a + random[t][j] * b).collect();
            let denom: f64 = v.iter().map(|x| x.exp()).sum();
            oracle += (v[y].exp() / denom).ln();
        }
        let ll = sequence_log_likelihood(&ds.individual(0), &[a], &[b]).unwrap();
        assert!((ll - oracle).abs() < 1e-13);
        assert!((ll - -7.112392128093679).abs() < 1e-12, "{ll}");
    }

    proptest! {
        #[test]
        fn lse_shift_invariance(v in prop::collection::vec(-50.0f64..50.0, 1..9), c in -500.0f64..500.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((lse(&shifted) - lse(&v) - c).abs() < 1e-10);
            let p = choice_probabilities(&v).unwrap();
            let q = choice_probabilities(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn probabilities_match_direct_formula(v in prop::collection::vec(-5.0f64..5.0, 5)) {
            let p = choice_probabilities(&v).unwrap();
            let denom: f64 = v.iter().map(|x| x.exp()).sum();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (pi, vi) in p.iter().zip(&v) {
                prop_assert!((pi - vi.exp() / denom).abs() < 1e-12);
                prop_assert!(*pi > 0.0 && *pi <= 1.0);
            }
        }

        #[test]
        fn gradient_and_hessian_match_finite_differences(v in prop::collection::vec(-3.0f64..3.0, 4)) {
            let p = choice_probabilities(&v).unwrap();
            let h = softmax_curvature(&p).unwrap();
            let eps = 1e-4;
            for i in 0..4 {
                let mut up = v.clone();
                let mut dn = v.clone();
                up[i] += eps;
                dn[i] -= eps;
                let g = (lse(&up) - lse(&dn)) / (2.0 * eps);
                prop_assert!((g - p[i]).abs() <= 1e-6 * p[i].abs().max(1e-3));
                let pu = choice_probabilities(&up).unwrap();
                let pd = choice_probabilities(&dn).unwrap();
                for j in 0..4 {
                    let fd = (pu[j] - pd[j]) / (2.0 * eps);
                    prop_assert!((fd - h[(j, i)]).abs() <= 1e-6 * h[(j, i)].abs().max(1e-3));
                }
            }
        }

        #[test]
        fn curvature_is_psd_with_zero_rows(v in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let p = choice_probabilities(&v).unwrap();
            let h = softmax_curvature(&p).unwrap();
            prop_assert!(crate::linalg::min_eigenvalue(&h) >= -1e-12);
            for r in 0..h.nrows() {
                prop_assert!(h.row(r).sum().abs() < 1e-12);
            }
        }
    }
}
