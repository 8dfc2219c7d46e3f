use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmnl::data::{build_true_population, generate_dataset, generate_validation, load_dataset, save_dataset, ScenarioConfig};
use mmnl::estimate::EstimateFile;
use mmnl::eval::{self, PredictiveConfig, VALIDATION_INDIVIDUALS};
use mmnl::experiment::{self, estimate_with, Method, MethodSettings, WORKERS_ENV};
use mmnl::seed::{tag, SeedStream};
use mmnl::{Error, Result};

#[derive(Parser)]
#[command(name = "mxl", version, about = "Mixed logit estimation and simulation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training dataset (and optionally a validation set).
    Generate(GenerateArgs),
    /// Fit one method to one dataset and write the estimate JSON.
    Estimate(EstimateArgs),
    /// Score a stored estimate against the dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Run a full experiment grid from a TOML config.
    Reproduce(ReproduceArgs),
    /// Rebuild the tables of a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    scenario: u8,
    #[arg(long, short = 'n', default_value_t = 500)]
    individuals: usize,
    #[arg(long, short = 't', default_value_t = 5)]
    occasions: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Overrides the calibrated attribute scale.
    #[arg(long)]
    attribute_scale: Option<f64>,
    /// Training CSV; a JSON sidecar with the same stem is written next to it.
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Also write a validation set here.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, default_value_t = VALIDATION_INDIVIDUALS)]
    validation_individuals: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, short = 'd')]
    data: PathBuf,
    /// mcmc, msle, or a VB variant (vb-ncvmp-delta, vb-ncvmp-mji, vb-qn-delta, vb-qn-qmc, vb-qn-mji).
    #[arg(long, short = 'm')]
    method: Method,
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// VB: per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// MCMC: directory for per-chain draw CSVs.
    #[arg(long)]
    draw_dir: Option<PathBuf>,
    /// MCMC: also store every individual's draws.
    #[arg(long)]
    store_betas: bool,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// VB: relative-change tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// VB: iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// MSLE: simulation draws per individual.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, short = 'e')]
    estimate: PathBuf,
    /// Training CSV whose sidecar holds the ground truth.
    #[arg(long, short = 'd')]
    data: PathBuf,
    /// Validation CSV; enables the predictive TVD.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    true_draws: Option<usize>,
    #[arg(long)]
    outer_draws: Option<usize>,
    #[arg(long)]
    inner_draws: Option<usize>,
    /// Write the metrics as JSON.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, short = 'c')]
    config: PathBuf,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method list.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory written by `reproduce`.
    #[arg(long, short = 'd')]
    dir: PathBuf,
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut config = ScenarioConfig::new(args.scenario, args.individuals, args.occasions, args.seed)?;
    if let Some(scale) = args.attribute_scale {
        config.attribute_scale = scale;
    }
    let pop = build_true_population(&config)?;
    let dataset = generate_dataset(&config, &pop)?;
    save_dataset(&args.out, &dataset, Some(&config), Some(&pop))?;
    println!("wrote {} ({} individuals, {} occasions)", args.out.display(), dataset.num_individuals(), dataset.total_occasions());
    if let Some(path) = args.validation {
        let validation = generate_validation(&config, &pop, args.validation_individuals)?;
        save_dataset(&path, &validation, Some(&config), Some(&pop))?;
        println!("wrote {} ({} individuals)", path.display(), validation.num_individuals());
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let mut settings = MethodSettings::default();
    let m = &mut settings.mcmc;
    m.chains = args.chains.unwrap_or(m.chains);
    m.iterations = args.iterations.unwrap_or(m.iterations);
    m.burn_in = args.burn_in.unwrap_or(if args.iterations.is_some() { m.iterations / 2 } else { m.burn_in });
    m.thin = args.thin.unwrap_or(m.thin);
    m.draw_dir = args.draw_dir;
    m.store_betas = args.store_betas;
    settings.vb.tolerance = args.tolerance.unwrap_or(settings.vb.tolerance);
    settings.vb.max_iter = args.max_iter.unwrap_or(settings.vb.max_iter);
    settings.msle.draws = args.draws.unwrap_or(settings.msle.draws);
    let out = estimate_with(&data.dataset, args.method, &settings, args.seed)?;
    out.estimate.save(&args.out)?;
    if let (Some(path), Some(trace)) = (args.trace, &out.trace) {
        trace.write_csv(&path)?;
    }
    let e = &out.estimate;
    println!(
        "{}: {} iterations, converged = {}, {:.2} s",
        e.method, e.iterations, e.converged, e.wall_time_secs
    );
    println!("zeta = {:?}", e.point.zeta.as_slice());
    if !e.point.alpha.is_empty() {
        println!("alpha = {:?}", e.point.alpha.as_slice());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let est = EstimateFile::load(&args.estimate)?;
    let data = load_dataset(&args.data)?;
    let truth = data.truth()?;
    let errors = eval::parameter_errors(&est.point, truth)?;
    let mut report = serde_json::json!({
        "method": est.method,
        "wall_time_secs": est.wall_time_secs,
        "rmse_alpha": errors.rmse_alpha,
        "rmse_zeta": errors.rmse_zeta,
        "rmse_omega": errors.rmse_omega,
        "rmse_beta": errors.rmse_beta,
    });
    if let Some(path) = &args.validation {
        let validation = load_dataset(path)?;
        let defaults = PredictiveConfig::default();
        let seeds = SeedStream::new(args.seed);
        let p_true = eval::true_choice_distribution(
            &validation.dataset,
            truth,
            args.true_draws.unwrap_or(defaults.true_draws),
            seeds.derive(&[tag::TRUE_PREDICTIVE]),
        )?;
        let p_hat = eval::posterior_predictive_distribution(
            &validation.dataset,
            &est.posterior,
            args.outer_draws.unwrap_or_else(|| defaults.outer_for(&est.posterior)),
            args.inner_draws.unwrap_or(defaults.inner_draws),
            seeds.derive(&[tag::PREDICTIVE_OUTER]),
        )?;
        report["tvd_percent"] = serde_json::json!(100.0 * eval::mean_tvd(&p_true, &p_hat)?);
    }
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(path) = args.out {
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

/// Returns whether any cell failed.
fn reproduce(args: ReproduceArgs) -> Result<bool> {
    let mut config = experiment::validate_config(&args.config)?;
    if let Some(dir) = args.output {
        config.output_dir = dir;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(m) = args.methods {
        config.methods = m;
    }
    config.validate()?;
    let outcome = experiment::run_experiment(&config, args.workers)?;
    println!(
        "{} cells completed ({} resumed), {} failed",
        outcome.results.len(),
        outcome.resumed,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("cell {} failed: {}", f.cell, f.message);
    }
    for path in &outcome.tables {
        println!("wrote {}", path.display());
    }
    Ok(!outcome.failures.is_empty())
}

fn report(args: ReportArgs) -> Result<()> {
    let config = experiment::stored_config(&args.dir)?;
    let results = experiment::collect_results(&config)?;
    for path in experiment::write_reports(&config, &results)? {
        if path.extension().is_some_and(|e| e == "txt") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a).map(|_| false),
        Command::Estimate(a) => estimate(a).map(|_| false),
        Command::Evaluate(a) => evaluate(a).map(|_| false),
        Command::Reproduce(a) => reproduce(a),
        Command::Report(a) => report(a).map(|_| false),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
