//! Mean-field variational Bayes for the mixed logit model.
//!
//! Conjugate factors (`ζ`, `Ω`, `a`) have closed-form updates. The Gaussian
//! factors of `α` and each `β_n` are refreshed either by quasi-Newton
//! maximization of their ELBO contribution or by NCVMP fixed-point steps,
//! with the intractable expected log-sum-exp replaced by a delta-method,
//! QMC or MJI-bound surrogate.

mod hyper;
pub mod local;
mod monitor;
mod state;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ChoiceDataset;
use crate::elise::{mji_refresh_aux, GaussianFactor};
use crate::error::{Error, Result};
use crate::estimate::{EstimateFile, PointEstimates, PopulationPosterior, ESTIMATE_SCHEMA_VERSION};
use crate::optim::{BfgsOptions, Termination};

pub use hyper::Hyperparameters;
pub use local::{BlockProblem, NcvmpStep, QmcDraws, QnStep, Treatment, UpdateContext};
pub use monitor::{relative_change, ConvergenceMonitor};
pub use state::{update_a_factors, update_omega_factor, update_zeta_factor, VariationalPosterior};
pub use trace::{TraceRow, VbTrace, TRACE_FIXED_COLUMNS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Qn,
    Ncvmp,
}

/// The five supported combinations of update rule and E-LSE treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    NcvmpDelta,
    NcvmpMji,
    QnDelta,
    QnQmc,
    QnMji,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::NcvmpDelta,
        Variant::NcvmpMji,
        Variant::QnDelta,
        Variant::QnQmc,
        Variant::QnMji,
    ];

    pub fn new(rule: UpdateRule, treatment: Treatment) -> Result<Self> {
        match (rule, treatment) {
            (UpdateRule::Ncvmp, Treatment::Delta) => Ok(Self::NcvmpDelta),
            (UpdateRule::Ncvmp, Treatment::Mji) => Ok(Self::NcvmpMji),
            (UpdateRule::Ncvmp, Treatment::Qmc) => Err(Error::UnsupportedMethod {
                name: "NCVMP-QMC".into(),
                reason: "fixed-point updates with simulated E-LSE are numerically unstable",
            }),
            (UpdateRule::Qn, Treatment::Delta) => Ok(Self::QnDelta),
            (UpdateRule::Qn, Treatment::Qmc) => Ok(Self::QnQmc),
            (UpdateRule::Qn, Treatment::Mji) => Ok(Self::QnMji),
        }
    }

    pub fn rule(self) -> UpdateRule {
        match self {
            Self::NcvmpDelta | Self::NcvmpMji => UpdateRule::Ncvmp,
            _ => UpdateRule::Qn,
        }
    }

    pub fn treatment(self) -> Treatment {
        match self {
            Self::NcvmpDelta | Self::QnDelta => Treatment::Delta,
            Self::QnQmc => Treatment::Qmc,
            Self::NcvmpMji | Self::QnMji => Treatment::Mji,
        }
    }

    /// Display label, e.g. `VB-QN-MJI`.
    pub fn label(self) -> &'static str {
        match self {
            Self::NcvmpDelta => "VB-NCVMP-Delta",
            Self::NcvmpMji => "VB-NCVMP-MJI",
            Self::QnDelta => "VB-QN-Delta",
            Self::QnQmc => "VB-QN-QMC",
            Self::QnMji => "VB-QN-MJI",
        }
    }

    /// Short command-line key, e.g. `qn-mji`.
    pub fn key(self) -> &'static str {
        match self {
            Self::NcvmpDelta => "ncvmp-delta",
            Self::NcvmpMji => "ncvmp-mji",
            Self::QnDelta => "qn-delta",
            Self::QnQmc => "qn-qmc",
            Self::QnMji => "qn-mji",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `ncvmp-delta`, `qn-qmc`, ... with an optional `vb-` prefix,
    /// case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let key = lower.strip_prefix("vb-").unwrap_or(&lower);
        let (rule, treatment) = key
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("unknown VB variant `{s}`")))?;
        let rule = match rule {
            "qn" => UpdateRule::Qn,
            "ncvmp" => UpdateRule::Ncvmp,
            _ => return Err(Error::InvalidArgument(format!("unknown VB update rule in `{s}`"))),
        };
        let treatment = match treatment {
            "delta" => Treatment::Delta,
            "qmc" => Treatment::Qmc,
            "mji" => Treatment::Mji,
            _ => return Err(Error::InvalidArgument(format!("unknown E-LSE treatment in `{s}`"))),
        };
        Variant::new(rule, treatment)
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.key().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VbConfig {
    pub tolerance: f64,
    pub window: usize,
    pub max_iter: usize,
    /// Draws per individual for the QMC treatment.
    pub qmc_draws: usize,
    pub seed: u64,
    #[serde(skip)]
    pub bfgs: BfgsOptions,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.005,
            window: 5,
            max_iter: 500,
            qmc_draws: 64,
            seed: 0,
            bfgs: BfgsOptions::default(),
        }
    }
}

/// Safeguard and inner-solver events accumulated over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VbDiagnostics {
    pub ncvmp_reverts: usize,
    pub qn_unconverged: usize,
    pub qn_ascent_violations: usize,
    pub mji_unconverged: usize,
}

#[derive(Clone, Debug)]
pub struct VbResult {
    pub variant: Variant,
    pub posterior: VariationalPosterior,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
    pub trace: VbTrace,
    pub diagnostics: VbDiagnostics,
}

/// `α̂ = μ_α`, `ζ̂ = μ_ζ`, `Ω̂ = Θ/(w − K − 1)`, `β̂_n = μ_βn`.
pub fn vb_point_estimates(post: &VariationalPosterior) -> Result<PointEstimates> {
    let k = post.num_random() as f64;
    let denom = post.w - k - 1.0;
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse-Wishart mean undefined: w = {} must exceed K + 1 = {}",
            post.w,
            k + 1.0
        )));
    }
    Ok(PointEstimates {
        alpha: post.alpha.mean().clone(),
        zeta: post.zeta.mean().clone(),
        omega: &post.theta / denom,
        betas: post.betas.iter().map(|b| b.mean().clone()).collect(),
    })
}

impl VbResult {
    pub fn point_estimates(&self) -> Result<PointEstimates> {
        vb_point_estimates(&self.posterior)
    }

    pub fn population_posterior(&self) -> PopulationPosterior {
        let p = &self.posterior;
        PopulationPosterior::Variational {
            mu_alpha: p.alpha.mean().clone(),
            sigma_alpha: p.alpha.cov().clone(),
            mu_zeta: p.zeta.mean().clone(),
            sigma_zeta: p.zeta.cov().clone(),
            w: p.w,
            theta: p.theta.clone(),
        }
    }

    pub fn estimate_file(&self) -> Result<EstimateFile> {
        Ok(EstimateFile {
            schema_version: ESTIMATE_SCHEMA_VERSION,
            method: self.variant.label().to_string(),
            iterations: self.iterations,
            converged: self.converged,
            wall_time_secs: self.wall_time_secs,
            point: self.point_estimates()?,
            posterior: self.population_posterior(),
        })
    }
}

/// Outcome of one local factor update.
#[derive(Clone, Debug)]
pub struct LocalUpdate {
    pub factor: GaussianFactor,
    pub reverted: bool,
    pub termination: Option<Termination>,
    /// Objective value before and after (QN only).
    pub objective: Option<(f64, f64)>,
}

fn apply_rule(problem: &BlockProblem<'_>, current: &GaussianFactor, rule: UpdateRule, opts: &BfgsOptions) -> Result<LocalUpdate> {
    match rule {
        UpdateRule::Ncvmp => {
            let step = problem.ncvmp_step(current)?;
            Ok(LocalUpdate {
                factor: step.factor,
                reverted: step.reverted,
                termination: None,
                objective: None,
            })
        }
        UpdateRule::Qn => {
            let step = problem.qn_update(current, opts)?;
            Ok(LocalUpdate {
                factor: step.factor,
                reverted: false,
                termination: Some(step.termination),
                objective: Some((step.objective_before, step.objective_after)),
            })
        }
    }
}

/// Refreshes `q(α)` against a frozen snapshot of the other factors.
pub fn update_alpha(ctx: &UpdateContext<'_>, current: &GaussianFactor, rule: UpdateRule, opts: &BfgsOptions) -> Result<LocalUpdate> {
    apply_rule(&ctx.alpha_problem(), current, rule, opts)
}

/// Refreshes `q(β_n)` against a frozen snapshot of the other factors.
pub fn update_beta(
    ctx: &UpdateContext<'_>,
    n: usize,
    current: &GaussianFactor,
    rule: UpdateRule,
    opts: &BfgsOptions,
) -> Result<LocalUpdate> {
    apply_rule(&ctx.beta_problem(n), current, rule, opts)
}

fn record(diag: &mut VbDiagnostics, u: &LocalUpdate) {
    if u.reverted {
        diag.ncvmp_reverts += 1;
    }
    if matches!(u.termination, Some(t) if t != Termination::Converged) {
        diag.qn_unconverged += 1;
    }
    if let Some((before, after)) = u.objective {
        if after < before - 1e-9 * (1.0 + before.abs()) {
            diag.qn_ascent_violations += 1;
        }
    }
}

/// Coordinate ascent: `α`, then every `β_n` in parallel, then `ζ`, `Ω`,
/// `a`, then the MJI auxiliaries, until the moving-average stopping rule
/// fires or `max_iter` is reached.
pub fn run_vb(dataset: &ChoiceDataset, hyper: &Hyperparameters, variant: Variant, config: &VbConfig) -> Result<VbResult> {
    let start = Instant::now();
    let (l, k, n) = (dataset.num_fixed(), dataset.num_random(), dataset.num_individuals());
    if n == 0 {
        return Err(Error::Empty("individuals"));
    }
    if config.max_iter == 0 || config.window == 0 {
        return Err(Error::InvalidArgument("iteration cap and window must be positive".into()));
    }
    let treatment = variant.treatment();
    let rule = variant.rule();
    let mut post = VariationalPosterior::initialize(dataset, hyper, treatment == Treatment::Mji)?;
    let draws = if treatment == Treatment::Qmc {
        if config.qmc_draws == 0 {
            return Err(Error::InvalidArgument("QMC treatment needs at least one draw".into()));
        }
        Some(QmcDraws::generate(n, l, k, config.qmc_draws, config.seed)?)
    } else {
        None
    };
    let mut monitor = ConvergenceMonitor::new(config.tolerance, config.window);
    let mut trace = VbTrace {
        names: VariationalPosterior::monitored_names(l, k),
        rows: Vec::new(),
    };
    let mut diagnostics = VbDiagnostics::default();
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let t0 = Instant::now();
        if l > 0 {
            let ctx = UpdateContext::new(dataset, &post, hyper, treatment, draws.as_ref())?;
            let u = update_alpha(&ctx, &post.alpha, rule, &config.bfgs)?;
            record(&mut diagnostics, &u);
            post.alpha = u.factor;
        }
        let t1 = Instant::now();
        let updates = {
            let ctx = UpdateContext::new(dataset, &post, hyper, treatment, draws.as_ref())?;
            (0..n)
                .into_par_iter()
                .map(|i| update_beta(&ctx, i, &post.betas[i], rule, &config.bfgs))
                .collect::<Result<Vec<_>>>()?
        };
        for (slot, u) in post.betas.iter_mut().zip(updates) {
            record(&mut diagnostics, &u);
            *slot = u.factor;
        }
        let t2 = Instant::now();
        post.zeta = update_zeta_factor(hyper, post.w, &post.theta, &post.betas)?;
        post.theta = update_omega_factor(hyper, post.c, &post.d, &post.zeta, &post.betas);
        let (c, d) = update_a_factors(hyper, post.w, &post.theta)?;
        post.c = c;
        post.d = d;
        let t3 = Instant::now();
        if post.mji_aux.is_some() {
            diagnostics.mji_unconverged += refresh_mji(dataset, &mut post)?;
        }
        let t4 = Instant::now();
        post.check_invariants()?;
        let monitored = post.monitored();
        if monitored.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("variational iteration", format!("non-finite state at iteration {iterations}")));
        }
        let delta = monitor.observe(&monitored);
        trace.rows.push(TraceRow {
            iteration: iterations,
            delta,
            alpha_secs: (t1 - t0).as_secs_f64(),
            beta_secs: (t2 - t1).as_secs_f64(),
            conjugate_secs: (t3 - t2).as_secs_f64(),
            aux_secs: (t4 - t3).as_secs_f64(),
            monitored,
        });
        if monitor.converged() {
            break;
        }
    }

    Ok(VbResult {
        variant,
        posterior: post,
        iterations,
        converged: monitor.converged(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        trace,
        diagnostics,
    })
}

/// Refreshes every occasion's auxiliary simplex; returns how many failed to
/// reach the fixed-point tolerance.
fn refresh_mji(dataset: &ChoiceDataset, post: &mut VariationalPosterior) -> Result<usize> {
    let aux = post.mji_aux.as_ref().expect("MJI auxiliaries");
    let alpha = &post.alpha;
    let refreshed = (0..dataset.num_individuals())
        .into_par_iter()
        .map(|i| {
            let offset = dataset.occasion_offset(i);
            let mut unconverged = 0;
            let mut values = Vec::new();
            for (t, occ) in dataset.individual(i).occasions().enumerate() {
                let mut a = aux.entry(offset + t).to_vec();
                if !mji_refresh_aux(&occ, alpha, &post.betas[i], &mut a)?.converged {
                    unconverged += 1;
                }
                values.extend(a);
            }
            Ok((values, unconverged))
        })
        .collect::<Result<Vec<_>>>()?;
    let aux = post.mji_aux.as_mut().expect("MJI auxiliaries");
    let mut total = 0;
    for (i, (values, unconverged)) in refreshed.into_iter().enumerate() {
        let start = dataset.occasion_offset(i);
        aux.range_mut(start, start + dataset.occasions_of(i)).copy_from_slice(&values);
        total += unconverged;
    }
    Ok(total)
}
