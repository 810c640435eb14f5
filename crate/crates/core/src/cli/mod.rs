//! Command-line front end: `simulate`, `estimate`, `benchmark` and
//! `register`.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors
//! (bad flags, unknown names, invalid configuration). `FUNCAUSE_THREADS`
//! caps the worker pool.

pub mod bench;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::elastic::WarpingFunction;
use crate::estimators::{estimate, register, DoseResponseCurve, EstimateOptions, Estimator, RegisterTarget, Tuned};
use crate::fdata::{load_dataset, save_dataset, write_curve_table, Dataset, DatasetFormat};
use crate::frechet::Metric;
use crate::inference::{effect_ci, EffectCI};
use crate::simgen::{generate, Scenario, ScenarioConfig};
use crate::{Error, Result};

use config::{ConfigFile, RunConfig};

/// Version tag written into every JSON output.
pub const SCHEMA_VERSION: u32 = 1;

pub const THREADS_ENV: &str = "FUNCAUSE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "funcause",
    version,
    about = "Causal effects on functional outcomes: simulation, estimation, benchmarks and elastic registration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write it with its ground truth.
    Simulate(SimulateArgs),
    /// Estimate the dynamic treatment effect on a dataset.
    Estimate(EstimateArgs),
    /// Run the replicate × sample size × estimator grid and write reports.
    Benchmark(BenchmarkArgs),
    /// Elastically register outcome and/or covariate curves.
    Register(RegisterArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Csv,
    Json,
}

impl From<FileFormat> for DatasetFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => DatasetFormat::Csv,
            FileFormat::Json => DatasetFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Config file; its [scenario] section sets the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of outcome grid points.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicate: Option<u64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub confounding: Option<f64>,
    /// Directory for `dataset.csv` (or `.json`) and `ground_truth.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    pub format: FileFormat,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Dataset file (CSV, or JSON by extension).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: Estimator,
    /// Config file with [tuning] and [estimation] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Add a confidence interval for the effect norm.
    #[arg(long)]
    pub ci: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Fixed ridge penalty instead of holdout tuning.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// uniform or inverse-propensity (Fréchet estimators).
    #[arg(long)]
    pub weighting: Option<String>,
    /// Comma-separated treatment levels for a dose response.
    #[arg(long, value_delimiter = ',')]
    pub dose_levels: Vec<f64>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    /// Comma-separated estimator names.
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    pub estimators: Vec<Estimator>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_target)]
    pub target: RegisterTarget,
    /// Moving-average window applied before taking derivatives.
    #[arg(long)]
    pub smoothing_window: Option<usize>,
    /// Directory for `registered.csv` and the warp tables.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_estimator(s: &str) -> std::result::Result<Estimator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_target(s: &str) -> std::result::Result<RegisterTarget, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Register(a) => cmd_register(&a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    let cfg = match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    cfg.check_known(config::SCHEMA)?;
    Ok(cfg)
}

fn data_format(path: &Path) -> DatasetFormat {
    DatasetFormat::from_path(path)
}

pub fn simulate_config(a: &SimulateArgs) -> Result<ScenarioConfig> {
    let cfg = load_config(&a.config)?;
    let mut sc = config::scenario_config(&cfg)?;
    if let Some(s) = a.scenario {
        sc.scenario = s;
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { sc.$f = v; })* };
    }
    set!(n, t, seed, replicate, noise, shift, confounding);
    sc.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(sc)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let sc = simulate_config(a)?;
    let (ds, truth) = generate(&sc)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let ext = match a.format {
        FileFormat::Csv => "csv",
        FileFormat::Json => "json",
    };
    let data_path = a.out_dir.join(format!("dataset.{ext}"));
    save_dataset(&ds, &data_path, a.format.into())?;
    let truth_path = a.out_dir.join("ground_truth.json");
    std::fs::write(&truth_path, truth.to_json()?)?;
    println!(
        "wrote {} ({} samples, {} grid points) and {}",
        data_path.display(),
        ds.len(),
        ds.outcome_grid().len(),
        truth_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EffectOutput {
    pub metric: Metric,
    pub scalar_norm: f64,
    pub grid: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EstimateOutput {
    pub schema_version: u32,
    pub estimator: String,
    pub data: String,
    pub n: usize,
    pub grid_points: usize,
    pub effect: EffectOutput,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<EffectCI>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned: Option<Tuned>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dose: Option<DoseResponseCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    pub runtime_seconds: f64,
}

pub fn estimate_options(a: &EstimateArgs) -> Result<EstimateOptions> {
    let cfg = load_config(&a.config)?;
    let mut opts = config::estimate_options(&cfg)?;
    if let Some(l) = a.lambda {
        opts.lambda = Some(l);
    }
    if let Some(w) = &a.weighting {
        opts.weighting = config::parse_weighting(w)?;
    }
    if !a.dose_levels.is_empty() {
        opts.dose_levels = a.dose_levels.clone();
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {}", a.level)));
    }
    config::validate_options(&opts)?;
    Ok(opts)
}

pub fn estimate_dataset(ds: &Dataset, a: &EstimateArgs) -> Result<EstimateOutput> {
    let opts = estimate_options(a)?;
    let start = Instant::now();
    let res = estimate(ds, a.estimator, &opts)?;
    let ci = if a.ci {
        Some(effect_ci(ds, &res.effect.delta, a.level)?)
    } else {
        None
    };
    let runtime_seconds = start.elapsed().as_secs_f64();
    Ok(EstimateOutput {
        schema_version: SCHEMA_VERSION,
        estimator: a.estimator.name().to_string(),
        data: a.data.display().to_string(),
        n: ds.len(),
        grid_points: ds.outcome_grid().len(),
        effect: EffectOutput {
            metric: res.effect.metric,
            scalar_norm: res.effect.scalar_norm,
            grid: res.effect.delta.grid().points().to_vec(),
            delta: res.effect.delta.values().to_vec(),
        },
        ci,
        tuned: res.tuned,
        dose: res.dose,
        rounds: res.rounds,
        converged: res.converged,
        runtime_seconds,
    })
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    // Validate options before the (possibly slow) load.
    estimate_options(a)?;
    let ds = load_dataset(&a.data, data_format(&a.data))?;
    let out = estimate_dataset(&ds, a)?;
    let json = serde_json::to_string_pretty(&out)?;
    match &a.output {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{json}")?;
        }
    }
    Ok(())
}

pub fn benchmark_config(a: &BenchmarkArgs) -> Result<RunConfig> {
    let cfg = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut run = RunConfig::from_file(&cfg)?;
    if let Some(s) = a.scenario {
        run.scenario.scenario = s;
    }
    if !a.estimators.is_empty() {
        run.estimators = a.estimators.clone();
    }
    if !a.sizes.is_empty() {
        run.sizes = a.sizes.clone();
        run.scenario.n = run.sizes[0];
    }
    if let Some(r) = a.replicates {
        run.replicates = r;
    }
    if let Some(s) = a.seed {
        run.scenario.seed = s;
    }
    if let Some(t) = a.t {
        run.scenario.t = t;
    }
    if let Some(d) = &a.out_dir {
        run.out_dir = d.clone();
    }
    run.validate()?;
    Ok(run)
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let run = benchmark_config(a)?;
    let report = bench::run_benchmark(&run)?;
    bench::write_report(&report, &run.out_dir)?;
    println!("{:<22} {:>6} {:>24} {:>10}", "estimator", "n", "mae (spread)", "seconds");
    for (row, secs) in report.summary.iter().zip(&report.summary_seconds) {
        println!("{:<22} {:>6} {:>24} {:>10.2}", row.estimator, row.n, row.cell, secs);
    }
    println!("reports written to {}", run.out_dir.display());
    Ok(())
}

fn write_warps(path: &Path, ds: &Dataset, warps: &[WarpingFunction]) -> Result<()> {
    write_curve_table(
        path,
        "g",
        ds.samples().iter().zip(warps).map(|(s, w)| (s.id.as_str(), w.values())),
    )
}

fn cmd_register(a: &RegisterArgs) -> Result<()> {
    let ds = load_dataset(&a.data, data_format(&a.data))?;
    let mut opts = EstimateOptions::default().karcher;
    if let Some(w) = a.smoothing_window {
        opts.smoothing_window = w;
    }
    let reg = register(&ds, a.target, &opts)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let out = a.out_dir.join("registered.csv");
    save_dataset(&reg.dataset, &out, DatasetFormat::Csv)?;
    println!("wrote {}", out.display());
    for (name, warps) in [("outcome_warps.csv", &reg.outcome_warps), ("covariate_warps.csv", &reg.covariate_warps)] {
        if let Some(w) = warps {
            let path = a.out_dir.join(name);
            write_warps(&path, &ds, w)?;
            let mean_dev = w.iter().map(WarpingFunction::deviation_from_identity).sum::<f64>() / w.len() as f64;
            println!("wrote {} (mean deviation from identity {mean_dev:.4})", path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_are_usage_errors() {
        assert_eq!(main_with_args(["funcause", "simulate", "--scenario", "spiral"]), 2);
        assert_eq!(
            main_with_args(["funcause", "estimate", "--data", "x.csv", "--estimator", "magic"]),
            2
        );
        assert_eq!(main_with_args(["funcause", "register", "--data", "x.csv"]), 2);
        assert_eq!(main_with_args(["funcause", "register", "--data", "x.csv", "--target", ""]), 2);
        assert_eq!(main_with_args(["funcause"]), 2);
    }

    #[test]
    fn missing_data_is_a_runtime_error() {
        let code = main_with_args([
            "funcause",
            "estimate",
            "--data",
            "/nonexistent/data.csv",
            "--estimator",
            "ipw",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn flags_override_config() {
        let a = SimulateArgs::try_parse_from_args(&["--n", "40", "--scenario", "binary-monotonic"]);
        let sc = simulate_config(&a).unwrap();
        assert_eq!(sc.n, 40);
        assert_eq!(sc.scenario, Scenario::BinaryMonotonic);
        assert_eq!(sc.t, ScenarioConfig::default().t);
    }

    #[test]
    fn invalid_scenario_values_are_config_errors() {
        let a = SimulateArgs::try_parse_from_args(&["--n", "1"]);
        assert!(matches!(simulate_config(&a), Err(Error::Config(_))));
    }

    impl SimulateArgs {
        fn try_parse_from_args(args: &[&str]) -> Self {
            let mut full = vec!["funcause", "simulate"];
            full.extend_from_slice(args);
            match Cli::try_parse_from(full).unwrap().command {
                Command::Simulate(a) => a,
                _ => unreachable!(),
            }
        }
    }
}
