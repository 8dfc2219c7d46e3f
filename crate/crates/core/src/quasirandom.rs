//! Standard-normal simulation draws: i.i.d. pseudo-random and Modified
//! Latin Hypercube Sampling (MLHS).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seed::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawKind {
    Pseudo,
    Mlhs,
}

/// `D × K` standard-normal deviates stored row-major (one draw per row).
#[derive(Clone, Debug, PartialEq)]
pub struct DrawBatch {
    draws: Vec<f64>,
    num_draws: usize,
    dim: usize,
    kind: DrawKind,
    seed: u64,
}

impl DrawBatch {
    pub fn num_draws(&self) -> usize {
        self.num_draws
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DrawKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draw(&self, d: usize) -> &[f64] {
        &self.draws[d * self.dim..(d + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.num_draws).map(move |d| self.draw(d))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.draws
    }

    /// The same draws with row `d` taken from row `order[d]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.num_draws];
        if order.len() != self.num_draws || !order.iter().all(|&d| d < self.num_draws && !std::mem::replace(&mut seen[d], true)) {
            return Err(Error::InvalidArgument("draw order must be a permutation of the draw indices".into()));
        }
        Ok(Self {
            draws: order.iter().flat_map(|&d| self.draw(d).iter().copied()).collect(),
            ..self.clone()
        })
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_inverse_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {u} outside (0, 1)")));
    }
    Ok(std_normal().inverse_cdf(u))
}

fn check_shape(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidArgument("at least one draw is required".into()));
    }
    Ok(())
}

/// MLHS uniforms, row-major `D × K`, together with the per-dimension shifts.
pub fn mlhs_uniforms(d: usize, k: usize, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; d * k];
    let mut shifts = Vec::with_capacity(k);
    let mut column: Vec<f64> = Vec::with_capacity(d);
    for dim in 0..k {
        let mut s: f64 = rng.random();
        while s == 0.0 {
            s = rng.random();
        }
        shifts.push(s);
        column.clear();
        column.extend((0..d).map(|i| (i as f64 + s) / d as f64));
        column.shuffle(rng);
        for (i, &u) in column.iter().enumerate() {
            out[i * k + dim] = u;
        }
    }
    (out, shifts)
}

pub fn mlhs_normal_draws(d: usize, k: usize, seed: u64) -> Result<DrawBatch> {
    check_shape(d)?;
    let mut rng = SeedStream::new(seed).rng(&[]);
    let (u, _) = mlhs_uniforms(d, k, &mut rng);
    let phi = std_normal();
    Ok(DrawBatch {
        draws: u.into_iter().map(|x| phi.inverse_cdf(x)).collect(),
        num_draws: d,
        dim: k,
        kind: DrawKind::Mlhs,
        seed,
    })
}

pub fn pseudo_normal_draws(d: usize, k: usize, seed: u64) -> Result<DrawBatch> {
    check_shape(d)?;
    let mut rng = SeedStream::new(seed).rng(&[]);
    Ok(DrawBatch {
        draws: (0..d * k).map(|_| rng.sample(StandardNormal)).collect(),
        num_draws: d,
        dim: k,
        kind: DrawKind::Pseudo,
        seed,
    })
}
