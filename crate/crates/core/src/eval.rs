//! Parameter-recovery RMSE, predictive choice distributions and TVD, and
//! replication summaries rendered as CSV or aligned text.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ChoiceDataset, Occasion, TruePopulation};
use crate::dist::standard_normals;
use crate::error::{Error, Result};
use crate::estimate::{PointEstimates, PopulationPosterior};
use crate::linalg;
use crate::mnl::{softmax_into, utilities};
use crate::seed::{tag, SeedStream};

/// Decision-makers in the out-of-sample validation set.
pub const VALIDATION_INDIVIDUALS: usize = 25;

/// Tolerance on the probability mass of a choice distribution.
const SIMPLEX_TOL: f64 = 1e-6;

/// `√[(1/M) Σ (θ̂ − θ)²]`.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::dims("RMSE operands", truth.len(), estimate.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("RMSE operands"));
    }
    let ss: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Unique covariance elements: row-major lower triangle including the
/// diagonal.
pub fn unique_elements(m: &DMatrix<f64>) -> Vec<f64> {
    linalg::pack_lower(m)
}

fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|&x| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&x)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotSimplex { sum });
    }
    Ok(())
}

/// `½ Σ_j |p_j − q_j|`.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dims("choice distributions", p.len(), q.len()));
    }
    check_simplex(p)?;
    check_simplex(q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// TVD averaged over choice sets.
pub fn mean_tvd(truth: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::dims("predictive choice sets", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("predictive choice sets"));
    }
    let mut total = 0.0;
    for (p, q) in truth.iter().zip(predicted) {
        total += tvd(p, q)?;
    }
    Ok(total / truth.len() as f64)
}

/// Errors of one estimate against the generating population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrors {
    /// `None` when the model has no fixed parameters.
    pub rmse_alpha: Option<f64>,
    pub rmse_zeta: f64,
    pub rmse_omega: f64,
    pub rmse_beta: f64,
}

/// RMSE of `α̂` against `α`, of `ζ̂`/`Ω̂` against the sample moments of the
/// true individual parameters, and of the stacked `β̂_1:N`.
pub fn parameter_errors(est: &PointEstimates, pop: &TruePopulation) -> Result<ParameterErrors> {
    let rmse_alpha = if pop.alpha.is_empty() {
        None
    } else {
        Some(rmse(est.alpha.as_slice(), pop.alpha.as_slice())?)
    };
    if est.betas.len() != pop.betas.len() {
        return Err(Error::dims("individual parameters", pop.betas.len(), est.betas.len()));
    }
    let stacked = |v: &[nalgebra::DVector<f64>]| v.iter().flat_map(|b| b.iter().cloned()).collect::<Vec<_>>();
    Ok(ParameterErrors {
        rmse_alpha,
        rmse_zeta: rmse(est.zeta.as_slice(), pop.sample_mean.as_slice())?,
        rmse_omega: rmse(&unique_elements(&est.omega), &unique_elements(&pop.sample_cov))?,
        rmse_beta: rmse(&stacked(&est.betas), &stacked(&pop.betas))?,
    })
}

fn validation_occasions(validation: &ChoiceDataset) -> Vec<Occasion<'_>> {
    validation.individuals().flat_map(|ind| ind.occasions().collect::<Vec<_>>()).collect()
}

/// Sum over `draws` of the logit probabilities at `β = ζ + Lξ`, per occasion.
fn accumulate_mixed_logit(
    occasions: &[Occasion<'_>],
    alpha: &[f64],
    zeta: &[f64],
    chol: &DMatrix<f64>,
    draws: usize,
    rng: &mut impl rand::Rng,
    j: usize,
) -> Vec<f64> {
    let k = zeta.len();
    let mut acc = vec![0.0; occasions.len() * j];
    let mut xi = vec![0.0; k];
    let mut beta = vec![0.0; k];
    let mut v = vec![0.0; j];
    let mut p = vec![0.0; j];
    for _ in 0..draws {
        standard_normals(rng, &mut xi);
        linalg::affine_lower(zeta, chol, &xi, &mut beta);
        for (o, occ) in occasions.iter().enumerate() {
            utilities(occ, alpha, &beta, &mut v);
            softmax_into(&v, &mut p);
            acc[o * j..(o + 1) * j].iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
    }
    acc
}

fn into_rows(flat: Vec<f64>, j: usize, scale: f64) -> Vec<Vec<f64>> {
    flat.chunks(j).map(|c| c.iter().map(|x| x * scale).collect()).collect()
}

const TRUE_CHUNK: usize = 10_000;

/// Mixed-logit choice probabilities per validation occasion at fixed
/// `(α, ζ, Ω)`, simulated with `draws` pseudo-random `β` draws.
pub fn mixed_logit_distribution(
    validation: &ChoiceDataset,
    alpha: &[f64],
    zeta: &[f64],
    omega: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if draws == 0 {
        return Err(Error::InvalidArgument("predictive simulation needs at least one draw".into()));
    }
    if alpha.len() != validation.num_fixed() || zeta.len() != validation.num_random() {
        return Err(Error::dims(
            "population parameters",
            validation.num_fixed() + validation.num_random(),
            alpha.len() + zeta.len(),
        ));
    }
    let j = validation.num_alternatives();
    let occasions = validation_occasions(validation);
    let chol = linalg::chol_lower_psd(omega);
    let seeds = SeedStream::new(seed);
    let chunks = draws.div_ceil(TRUE_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = TRUE_CHUNK.min(draws - c * TRUE_CHUNK);
            let mut rng = seeds.rng(&[tag::TRUE_PREDICTIVE, c as u64]);
            accumulate_mixed_logit(&occasions, alpha, zeta, &chol, count, &mut rng, j)
        })
        .collect();
    let mut total = vec![0.0; occasions.len() * j];
    for part in parts {
        total.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    Ok(into_rows(total, j, 1.0 / draws as f64))
}

/// True predictive choice distribution under the generating population.
pub fn true_choice_distribution(
    validation: &ChoiceDataset,
    pop: &TruePopulation,
    draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    mixed_logit_distribution(validation, pop.alpha.as_slice(), pop.zeta.as_slice(), &pop.omega, draws, seed)
}

/// Posterior predictive choice distribution: the mixed-logit probability
/// averaged over `outer` population draws, each integrated with `inner`
/// pseudo-random `β` draws.
pub fn posterior_predictive_distribution(
    validation: &ChoiceDataset,
    posterior: &PopulationPosterior,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if outer == 0 || inner == 0 {
        return Err(Error::InvalidArgument("predictive simulation needs at least one draw".into()));
    }
    if posterior.num_fixed() != validation.num_fixed() || posterior.num_random() != validation.num_random() {
        return Err(Error::dims(
            "posterior dimensions",
            validation.num_fixed() + validation.num_random(),
            posterior.num_fixed() + posterior.num_random(),
        ));
    }
    let seeds = SeedStream::new(seed);
    let population = posterior.sample(outer, seeds.derive(&[tag::PREDICTIVE_OUTER]))?;
    let j = validation.num_alternatives();
    let occasions = validation_occasions(validation);
    let parts: Vec<Vec<f64>> = population
        .par_iter()
        .enumerate()
        .map(|(s, draw)| {
            let chol = linalg::chol_lower_psd(&draw.omega);
            let mut rng = seeds.rng(&[tag::PREDICTIVE_INNER, s as u64]);
            accumulate_mixed_logit(&occasions, draw.alpha.as_slice(), draw.zeta.as_slice(), &chol, inner, &mut rng, j)
        })
        .collect();
    let mut total = vec![0.0; occasions.len() * j];
    for part in parts {
        total.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    Ok(into_rows(total, j, 1.0 / (outer * inner) as f64))
}

/// Draw counts for the predictive distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveConfig {
    pub true_draws: usize,
    pub inner_draws: usize,
    pub mcmc_outer: usize,
    pub vb_outer: usize,
    pub msle_outer: usize,
}

impl PredictiveConfig {
    /// Counts used in the original study.
    pub fn full() -> Self {
        Self {
            true_draws: 1_000_000,
            inner_draws: 10_000,
            mcmc_outer: 20_000,
            vb_outer: 500,
            msle_outer: 500,
        }
    }

    /// Outer draw count for a posterior of the given kind.
    pub fn outer_for(&self, posterior: &PopulationPosterior) -> usize {
        match posterior {
            PopulationPosterior::Variational { .. } => self.vb_outer,
            PopulationPosterior::Draws { .. } => self.mcmc_outer,
            PopulationPosterior::Asymptotic { .. } => self.msle_outer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("predictive.true_draws", self.true_draws),
            ("predictive.inner_draws", self.inner_draws),
            ("predictive.mcmc_outer", self.mcmc_outer),
            ("predictive.vb_outer", self.vb_outer),
            ("predictive.msle_outer", self.msle_outer),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

impl Default for PredictiveConfig {
    /// Desk-scale counts.
    fn default() -> Self {
        Self {
            true_draws: 1_000_000,
            inner_draws: 2_000,
            mcmc_outer: 1_000,
            vb_outer: 500,
            msle_outer: 500,
        }
    }
}

/// Metrics of one method on one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub method: String,
    pub replication: usize,
    pub wall_time_secs: f64,
    pub errors: ParameterErrors,
    /// Mean TVD as a fraction in `[0, 1]`.
    pub tvd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation over `√R`; `None` for a single replication.
    pub se: Option<f64>,
}

/// `s/√R` with the unbiased sample standard deviation.
pub fn standard_error(values: &[f64]) -> Result<f64> {
    let r = values.len();
    if r < 2 {
        return Err(Error::InvalidArgument(format!(
            "standard error needs at least 2 replications, got {r}"
        )));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    Ok((var / r as f64).sqrt())
}

pub fn summarize(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::Empty("replications"));
    }
    Ok(MetricSummary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        se: standard_error(values).ok(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replications: usize,
    pub wall_time_secs: MetricSummary,
    pub rmse_alpha: Option<MetricSummary>,
    pub rmse_zeta: MetricSummary,
    pub rmse_omega: MetricSummary,
    pub rmse_beta: MetricSummary,
    /// Mean TVD in percent.
    pub tvd_percent: MetricSummary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictiveReport {
    pub rows: Vec<MethodSummary>,
}

/// Groups replications by method (first-appearance order) and summarizes
/// each metric.
pub fn summarize_replications(reports: &[ReplicationMetrics]) -> Result<PredictiveReport> {
    if reports.is_empty() {
        return Err(Error::Empty("replications"));
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let rows = methods
        .into_iter()
        .map(|m| {
            let group: Vec<&ReplicationMetrics> = reports.iter().filter(|r| r.method == m).collect();
            let col = |f: &dyn Fn(&ReplicationMetrics) -> f64| summarize(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let alphas: Option<Vec<f64>> = group.iter().map(|r| r.errors.rmse_alpha).collect();
            Ok(MethodSummary {
                method: m.to_string(),
                replications: group.len(),
                wall_time_secs: col(&|r| r.wall_time_secs)?,
                rmse_alpha: alphas.map(|a| summarize(&a)).transpose()?,
                rmse_zeta: col(&|r| r.errors.rmse_zeta)?,
                rmse_omega: col(&|r| r.errors.rmse_omega)?,
                rmse_beta: col(&|r| r.errors.rmse_beta)?,
                tvd_percent: col(&|r| 100.0 * r.tvd)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveReport { rows })
}

fn fmt_value(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_value)
}

impl PredictiveReport {
    fn columns(&self, with_time: bool) -> Vec<(&'static str, Vec<Option<MetricSummary>>)> {
        let mut cols = Vec::new();
        if with_time {
            cols.push(("time_s", self.rows.iter().map(|r| Some(r.wall_time_secs)).collect()));
        }
        if self.rows.iter().any(|r| r.rmse_alpha.is_some()) {
            cols.push(("rmse_alpha", self.rows.iter().map(|r| r.rmse_alpha).collect()));
        }
        cols.push(("rmse_zeta", self.rows.iter().map(|r| Some(r.rmse_zeta)).collect()));
        cols.push(("rmse_omega", self.rows.iter().map(|r| Some(r.rmse_omega)).collect()));
        cols.push(("rmse_beta", self.rows.iter().map(|r| Some(r.rmse_beta)).collect()));
        cols.push(("tvd_pct", self.rows.iter().map(|r| Some(r.tvd_percent)).collect()));
        cols
    }

    /// One row per method with `<metric>_mean,<metric>_se` column pairs.
    /// Wall time is included only when `with_time` is set, so the timing-free
    /// table is reproducible byte for byte.
    pub fn to_csv(&self, with_time: bool) -> String {
        let cols = self.columns(with_time);
        let mut out = String::from("method,replications");
        for (name, _) in &cols {
            let _ = write!(out, ",{name}_mean,{name}_se");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{},{}", row.method, row.replications);
            for (_, values) in &cols {
                let m = values[i];
                let _ = write!(out, ",{},{}", fmt_opt(m.map(|m| m.mean)), fmt_opt(m.and_then(|m| m.se)));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned table with methods as rows and `mean (s.e.)` cells.
    pub fn to_text(&self, with_time: bool) -> String {
        let cols = self.columns(with_time);
        let mut header = vec!["Method".to_string()];
        header.extend(cols.iter().map(|(n, _)| n.to_string()));
        let mut table = vec![header];
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.method.clone()];
            for (_, values) in &cols {
                line.push(match values[i] {
                    None => "-".into(),
                    Some(MetricSummary { mean, se: Some(se) }) => format!("{} ({})", fmt_value(mean), fmt_value(se)),
                    Some(MetricSummary { mean, se: None }) => fmt_value(mean),
                });
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (r, line) in table.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if r == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}
