use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_with, ExperimentConfig, Method, MethodSettings};
use crate::data::{build_true_population, generate_dataset, generate_validation, ChoiceDataset, ScenarioConfig, TruePopulation};
use crate::error::{Error, Result};
use crate::eval::{
    mean_tvd, parameter_errors, posterior_predictive_distribution, summarize_replications, true_choice_distribution,
    ReplicationMetrics,
};
use crate::seed::{mix64, tag, SeedStream};

/// Seed slot of the data-generating stream of a replication; methods use
/// their [`Method::index`].
pub const DATA_SLOT: u64 = 0xFF;

/// Packs `(scenario, N, T, replication, slot)` into disjoint bit fields
/// (8/20/10/16/10 bits) and scrambles the result with the base seed. Both
/// steps are bijections, so distinct cells get distinct seeds.
pub fn cell_seed(base: u64, scenario: u8, individuals: usize, occasions: usize, replication: usize, slot: u64) -> u64 {
    debug_assert!(individuals < 1 << 20 && occasions < 1 << 10 && replication < 1 << 16 && slot < 1 << 10);
    let packed = (scenario as u64) << 56
        | (individuals as u64) << 36
        | (occasions as u64) << 26
        | (replication as u64) << 10
        | slot;
    mix64(base ^ mix64(packed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub scenario: u8,
    pub individuals: usize,
    pub occasions: usize,
    pub replication: usize,
    pub method: Method,
}

impl CellId {
    /// File stem, e.g. `s1_n500_t5_r0_vb-ncvmp-delta`.
    pub fn name(&self) -> String {
        format!(
            "s{}_n{}_t{}_r{}_{}",
            self.scenario,
            self.individuals,
            self.occasions,
            self.replication,
            self.method.key()
        )
    }

    fn group(&self) -> GroupId {
        GroupId {
            scenario: self.scenario,
            individuals: self.individuals,
            occasions: self.occasions,
            replication: self.replication,
        }
    }

    pub fn seed(&self, base: u64) -> u64 {
        cell_seed(base, self.scenario, self.individuals, self.occasions, self.replication, self.method.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct GroupId {
    scenario: u8,
    individuals: usize,
    occasions: usize,
    replication: usize,
}

impl GroupId {
    fn data_seed(&self, base: u64) -> u64 {
        cell_seed(base, self.scenario, self.individuals, self.occasions, self.replication, DATA_SLOT)
    }
}

/// Persisted outcome of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellId,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub metrics: ReplicationMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub cell: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    /// Every completed cell in grid order, including cells from earlier runs.
    pub results: Vec<CellResult>,
    pub failures: Vec<Failure>,
    /// Cells skipped because the manifest already listed them.
    pub resumed: usize,
    pub tables: Vec<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
struct Manifest {
    completed: BTreeSet<String>,
}

const MANIFEST: &str = "manifest.json";
const RESOLVED_CONFIG: &str = "config.toml";

fn grid(config: &ExperimentConfig) -> Vec<CellId> {
    let mut cells = Vec::new();
    for &scenario in &config.scenarios {
        for &individuals in &config.individuals {
            for &occasions in &config.occasions {
                for replication in 0..config.replications {
                    for &method in &config.methods {
                        cells.push(CellId {
                            scenario,
                            individuals,
                            occasions,
                            replication,
                            method,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(Manifest::default());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(&path, e.to_string()))
}

fn cell_path(dir: &Path, cell: &CellId) -> PathBuf {
    dir.join("cells").join(format!("{}.json", cell.name()))
}

struct GroupData {
    pop: TruePopulation,
    dataset: ChoiceDataset,
    validation: ChoiceDataset,
    truth: Vec<Vec<f64>>,
}

fn prepare_group(config: &ExperimentConfig, group: GroupId) -> Result<GroupData> {
    let seed = group.data_seed(config.seed);
    let scenario = ScenarioConfig::new(group.scenario, group.individuals, group.occasions, seed)?;
    let pop = build_true_population(&scenario)?;
    let dataset = generate_dataset(&scenario, &pop)?;
    let validation = generate_validation(&scenario, &pop, config.validation_individuals)?;
    let truth_seed = SeedStream::new(seed).derive(&[tag::TRUE_PREDICTIVE]);
    let truth = true_choice_distribution(&validation, &pop, config.predictive.true_draws, truth_seed)?;
    Ok(GroupData {
        pop,
        dataset,
        validation,
        truth,
    })
}

fn run_cell(config: &ExperimentConfig, cell: CellId, data: &GroupData) -> Result<(CellResult, crate::estimate::EstimateFile)> {
    let settings = MethodSettings {
        mcmc: crate::mcmc::McmcConfig {
            draw_dir: None,
            ..config.mcmc.clone()
        },
        vb: config.vb.clone(),
        msle: config.msle.clone(),
    };
    let seed = cell.seed(config.seed);
    let out = estimate_with(&data.dataset, cell.method, &settings, seed)?;
    let est = out.estimate;
    let errors = parameter_errors(&est.point, &data.pop)?;
    let predicted = posterior_predictive_distribution(
        &data.validation,
        &est.posterior,
        config.predictive.outer_for(&est.posterior),
        config.predictive.inner_draws,
        SeedStream::new(seed).derive(&[tag::PREDICTIVE_OUTER]),
    )?;
    let tvd = mean_tvd(&data.truth, &predicted)?;
    let result = CellResult {
        cell,
        seed,
        iterations: est.iterations,
        converged: est.converged,
        metrics: ReplicationMetrics {
            method: cell.method.label().to_string(),
            replication: cell.replication,
            wall_time_secs: est.wall_time_secs,
            errors,
            tvd,
        },
    };
    Ok((result, est))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every pending cell of the grid, persisting each result as soon as it
/// completes, then rewrites the summary tables.
///
/// Cells listed in the output directory's manifest are skipped, so an
/// interrupted run resumes where it stopped. A failing cell is recorded and
/// the remaining cells still run.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let resolved = config.to_toml()?;
    let config_path = dir.join(RESOLVED_CONFIG);
    if config_path.exists() {
        let previous = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        if previous != resolved {
            return Err(Error::config(
                "output_dir",
                format!("{} holds results of a different configuration", dir.display()),
            ));
        }
    } else {
        write_file(&config_path, &resolved)?;
    }

    let manifest = read_manifest(dir)?;
    let cells = grid(config);
    let pending: Vec<CellId> = cells
        .iter()
        .filter(|c| !(manifest.completed.contains(&c.name()) && cell_path(dir, c).exists()))
        .copied()
        .collect();
    let resumed = cells.len() - pending.len();
    let groups: BTreeSet<GroupId> = pending.iter().map(|c| c.group()).collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;

    let manifest = Mutex::new(manifest);
    let failures = Mutex::new(Vec::new());
    pool.install(|| {
        let prepared: HashMap<GroupId, std::result::Result<GroupData, String>> = groups
            .par_iter()
            .map(|&g| {
                let data = catch_unwind(AssertUnwindSafe(|| prepare_group(config, g)))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e| e.to_string()));
                (g, data)
            })
            .collect();
        pending.par_iter().for_each(|&cell| {
            let outcome = match &prepared[&cell.group()] {
                Err(msg) => Err(format!("data generation failed: {msg}")),
                Ok(data) => catch_unwind(AssertUnwindSafe(|| run_cell(config, cell, data)))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e| e.to_string())),
            };
            let persisted = outcome.and_then(|(result, est)| {
                // single writer for all result files and the manifest
                let mut m = manifest.lock().expect("manifest lock");
                let mut write = || -> Result<()> {
                    if config.save_estimates {
                        let path = dir.join("estimates").join(format!("{}.json", cell.name()));
                        fs::create_dir_all(path.parent().expect("estimate dir")).map_err(|e| Error::io(dir, e))?;
                        est.save(&path)?;
                    }
                    write_file(&cell_path(dir, &cell), &serde_json::to_string_pretty(&result)?)?;
                    m.completed.insert(cell.name());
                    write_file(&dir.join(MANIFEST), &serde_json::to_string_pretty(&*m)?)
                };
                write().map_err(|e| e.to_string())
            });
            if let Err(message) = persisted {
                failures.lock().expect("failure lock").push(Failure {
                    cell: cell.name(),
                    message,
                });
            }
        });
    });

    let mut failures = failures.into_inner().expect("failure lock");
    let order: HashMap<String, usize> = cells.iter().enumerate().map(|(i, c)| (c.name(), i)).collect();
    failures.sort_by_key(|f| order[&f.cell]);
    let mut text = String::from("cell,message\n");
    for f in &failures {
        let _ = writeln!(text, "{},\"{}\"", f.cell, f.message.replace('"', "'"));
    }
    write_file(&dir.join("failures.csv"), &text)?;

    let results = collect_results(config)?;
    let tables = write_reports(config, &results)?;
    Ok(ExperimentOutcome {
        results,
        failures,
        resumed,
        tables,
    })
}

/// Loads the persisted results of every completed cell of the grid, in grid
/// order.
pub fn collect_results(config: &ExperimentConfig) -> Result<Vec<CellResult>> {
    let dir = &config.output_dir;
    let manifest = read_manifest(dir)?;
    grid(config)
        .into_iter()
        .filter(|c| manifest.completed.contains(&c.name()))
        .map(|c| {
            let path = cell_path(dir, &c);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let result: CellResult = serde_json::from_str(&text).map_err(|e| Error::schema(&path, e.to_string()))?;
            if result.cell != c {
                return Err(Error::schema(&path, "cell identity does not match file name"));
            }
            Ok(result)
        })
        .collect()
}

/// Writes per-design tables under `<output_dir>/tables/`:
/// `<design>.csv` and `<design>.txt` carry the accuracy metrics only and are
/// reproducible byte for byte; `<design>_timing.csv` adds wall times.
/// `replications.csv` lists every completed cell without timings.
pub fn write_reports(config: &ExperimentConfig, results: &[CellResult]) -> Result<Vec<PathBuf>> {
    let dir = config.output_dir.join("tables");
    let mut designs: BTreeMap<(u8, usize, usize), Vec<&CellResult>> = BTreeMap::new();
    for r in results {
        designs
            .entry((r.cell.scenario, r.cell.individuals, r.cell.occasions))
            .or_default()
            .push(r);
    }
    let mut written = Vec::new();
    for ((scenario, n, t), group) in designs {
        let mut metrics: Vec<(usize, ReplicationMetrics)> = group
            .iter()
            .map(|r| {
                let rank = config.methods.iter().position(|m| *m == r.cell.method).unwrap_or(usize::MAX);
                (rank * (1 << 16) + r.cell.replication, r.metrics.clone())
            })
            .collect();
        metrics.sort_by_key(|(k, _)| *k);
        let metrics: Vec<ReplicationMetrics> = metrics.into_iter().map(|(_, m)| m).collect();
        let report = summarize_replications(&metrics)?;
        let stem = format!("s{scenario}_n{n}_t{t}");
        let title = format!("Scenario {scenario}, N = {n}, T = {t}\n\n");
        for (name, contents) in [
            (format!("{stem}.csv"), report.to_csv(false)),
            (format!("{stem}.txt"), format!("{title}{}", report.to_text(false))),
            (format!("{stem}_timing.csv"), report.to_csv(true)),
        ] {
            let path = dir.join(name);
            write_file(&path, &contents)?;
            written.push(path);
        }
    }
    let mut rows = String::from("scenario,individuals,occasions,replication,method,seed,iterations,converged,rmse_alpha,rmse_zeta,rmse_omega,rmse_beta,tvd\n");
    for r in results {
        let e = &r.metrics.errors;
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.scenario,
            r.cell.individuals,
            r.cell.occasions,
            r.cell.replication,
            r.cell.method.label(),
            r.seed,
            r.iterations,
            r.converged,
            e.rmse_alpha.map_or_else(String::new, |v| v.to_string()),
            e.rmse_zeta,
            e.rmse_omega,
            e.rmse_beta,
            r.metrics.tvd
        );
    }
    let path = dir.join("replications.csv");
    write_file(&path, &rows)?;
    written.push(path);
    Ok(written)
}

/// Loads the resolved configuration stored in a results directory.
pub fn stored_config(dir: &Path) -> Result<ExperimentConfig> {
    let path = dir.join(RESOLVED_CONFIG);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config { constraint, .. } => Error::schema(&path, constraint),
        other => other,
    })?;
    config.output_dir = dir.to_path_buf();
    Ok(config)
}
