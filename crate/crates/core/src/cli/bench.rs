//! Replicate × sample size × estimator simulation grid and its report files.
//!
//! Files written to the output directory:
//!
//! * `summary.csv`: one row per (estimator, n) with the replicate mean of
//!   the MAE and of the error spread across the time grid, formatted as
//!   `mae (spread)` in `cell`.
//! * `records.csv`: one row per (estimator, n, replicate).
//! * `per_t_error.csv`: mean absolute error at each grid point, long format.
//! * `timing.csv`: wall time per record. Kept apart so the other tables are
//!   identical across reruns.
//! * `report.json`: everything above plus metadata.
//! * `mae_vs_n.svg`, `mae_boxplot.svg`, `per_t_error.svg`.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigEcho, RunConfig};
use super::svg::{box_plot, line_plot, BoxGroup, Series};
use super::SCHEMA_VERSION;
use crate::estimators::estimate;
use crate::simgen::{effect_error, error_spread, generate, Scenario};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub estimator: String,
    pub n: usize,
    pub replicate: u64,
    pub mae: f64,
    /// Standard deviation over the time grid of the absolute error.
    pub spread: f64,
    pub scalar_effect: f64,
    pub true_effect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub n: usize,
    pub replicates: usize,
    pub mae_mean: f64,
    /// Standard deviation of the MAE over replicates.
    pub mae_sd: f64,
    pub spread_mean: f64,
    pub cell: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerTError {
    pub estimator: String,
    pub n: usize,
    pub t: f64,
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub estimator: String,
    pub n: usize,
    pub replicate: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub version: String,
    pub git_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub total_seconds: f64,
    pub config: ConfigEcho,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkReport {
    pub metadata: Metadata,
    pub summary: Vec<SummaryRow>,
    /// Mean wall time per summary row, same order.
    pub summary_seconds: Vec<f64>,
    pub records: Vec<Record>,
    pub per_t: Vec<PerTError>,
    pub timings: Vec<Timing>,
}

struct Cell {
    record: Record,
    abs_error: Vec<f64>,
    grid: Vec<f64>,
    seconds: f64,
}

/// Runs the benchmark grid. Each (replicate, n) dataset is simulated from
/// its own RNG stream, so results do not depend on scheduling.
pub fn run_benchmark(run: &RunConfig) -> Result<BenchmarkReport> {
    run.validate()?;
    if run.scenario.scenario == Scenario::ContinuousFunctional {
        if let Some(e) = run.estimators.iter().find(|e| !e.is_kernel()) {
            return Err(Error::Config(format!(
                "estimator '{e}' needs a binary treatment; scenario '{}' has a continuous one",
                run.scenario.scenario.name()
            )));
        }
    }
    let start = Instant::now();
    let jobs: Vec<(u64, usize)> = (0..run.replicates as u64)
        .flat_map(|r| run.sizes.iter().map(move |&n| (r, n)))
        .collect();
    let cells: Vec<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(r, n)| run_job(run, r, n))
        .collect::<Result<_>>()?;
    let cells: Vec<Cell> = cells.into_iter().flatten().collect();

    let mut summary = Vec::new();
    let mut summary_seconds = Vec::new();
    let mut per_t = Vec::new();
    for est in &run.estimators {
        for &n in &run.sizes {
            let group: Vec<&Cell> = cells
                .iter()
                .filter(|c| c.record.estimator == est.name() && c.record.n == n)
                .collect();
            let maes: Vec<f64> = group.iter().map(|c| c.record.mae).collect();
            let spreads: Vec<f64> = group.iter().map(|c| c.record.spread).collect();
            let (mae_mean, mae_sd) = mean_sd(&maes);
            let (spread_mean, _) = mean_sd(&spreads);
            summary.push(SummaryRow {
                estimator: est.name().to_string(),
                n,
                replicates: group.len(),
                mae_mean,
                mae_sd,
                spread_mean,
                cell: format!("{mae_mean:.4} ({spread_mean:.4})"),
            });
            summary_seconds.push(group.iter().map(|c| c.seconds).sum::<f64>() / group.len() as f64);
            let grid = &group[0].grid;
            for (j, &t) in grid.iter().enumerate() {
                let m = group.iter().map(|c| c.abs_error[j]).sum::<f64>() / group.len() as f64;
                per_t.push(PerTError {
                    estimator: est.name().to_string(),
                    n,
                    t,
                    mean_abs_error: m,
                });
            }
        }
    }
    let mut records: Vec<Record> = Vec::with_capacity(cells.len());
    let mut timings = Vec::with_capacity(cells.len());
    for c in cells {
        timings.push(Timing {
            estimator: c.record.estimator.clone(),
            n: c.record.n,
            replicate: c.record.replicate,
            seconds: c.seconds,
        });
        records.push(c.record);
    }
    Ok(BenchmarkReport {
        metadata: Metadata {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_hash: git_hash(),
            seed: run.scenario.seed,
            threads: rayon::current_num_threads(),
            total_seconds: start.elapsed().as_secs_f64(),
            config: run.echo(),
        },
        summary,
        summary_seconds,
        records,
        per_t,
        timings,
    })
}

fn run_job(run: &RunConfig, replicate: u64, n: usize) -> Result<Vec<Cell>> {
    let mut sc = run.scenario.clone();
    sc.n = n;
    sc.replicate = replicate;
    let (ds, truth) = generate(&sc)?;
    let mut opts = run.options.clone();
    opts.tune.seed = opts.tune.seed.wrapping_add(replicate);
    let grid = truth.beta_x.grid().points().to_vec();
    run.estimators
        .iter()
        .map(|&est| {
            let t0 = Instant::now();
            let res = estimate(&ds, est, &opts)
                .map_err(|e| Error::Numerical(format!("{est} (n={n}, replicate {replicate}): {e}")))?;
            let seconds = t0.elapsed().as_secs_f64();
            let (mae, per_t) = effect_error(&res.effect, &truth)?;
            Ok(Cell {
                record: Record {
                    estimator: est.name().to_string(),
                    n,
                    replicate,
                    mae,
                    spread: error_spread(&per_t),
                    scalar_effect: res.effect.scalar_norm,
                    true_effect: truth.true_phi_date,
                },
                abs_error: per_t.values().iter().map(|e| e.abs()).collect(),
                grid: grid.clone(),
                seconds,
            })
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Current commit of the working directory's repository, or `unknown`.
pub fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_table<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_table(&dir.join("summary.csv"), &report.summary)?;
    write_table(&dir.join("records.csv"), &report.records)?;
    write_table(&dir.join("per_t_error.csv"), &report.per_t)?;
    write_table(&dir.join("timing.csv"), &report.timings)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;

    let estimators: Vec<&str> = dedup(report.summary.iter().map(|r| r.estimator.as_str()));
    let sizes: Vec<usize> = dedup(report.summary.iter().map(|r| r.n));
    let largest = *sizes.iter().max().expect("at least one size");

    let series: Vec<Series> = estimators
        .iter()
        .map(|&e| Series {
            label: e.to_string(),
            points: report
                .summary
                .iter()
                .filter(|r| r.estimator == e)
                .map(|r| (r.n as f64, r.mae_mean))
                .collect(),
        })
        .collect();
    let ticks: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    std::fs::write(
        dir.join("mae_vs_n.svg"),
        line_plot("Mean absolute error", "sample size n", "MAE", &series, Some(&ticks)),
    )?;

    let groups: Vec<BoxGroup> = estimators
        .iter()
        .map(|&e| BoxGroup {
            label: e.to_string(),
            values: report
                .records
                .iter()
                .filter(|r| r.estimator == e && r.n == largest)
                .map(|r| r.mae)
                .collect(),
        })
        .collect();
    std::fs::write(
        dir.join("mae_boxplot.svg"),
        box_plot(&format!("MAE over replicates, n = {largest}"), "MAE", &groups),
    )?;

    let series: Vec<Series> = estimators
        .iter()
        .map(|&e| Series {
            label: e.to_string(),
            points: report
                .per_t
                .iter()
                .filter(|r| r.estimator == e && r.n == largest)
                .map(|r| (r.t, r.mean_abs_error))
                .collect(),
        })
        .collect();
    std::fs::write(
        dir.join("per_t_error.svg"),
        line_plot(
            &format!("Mean absolute error over time, n = {largest}"),
            "t",
            "|error|",
            &series,
            None,
        ),
    )?;
    Ok(())
}

fn dedup<T: PartialEq + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Estimators in `summary` ordered by MAE at sample size `n`.
pub fn ranking(summary: &[SummaryRow], n: usize) -> Vec<(String, f64)> {
    let mut rows: Vec<(String, f64)> = summary
        .iter()
        .filter(|r| r.n == n)
        .map(|r| (r.estimator.clone(), r.mae_mean))
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    rows
}
