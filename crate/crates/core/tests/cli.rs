use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funcause::cli::bench::{read_table, Record, SummaryRow};
use funcause::fdata::{load_dataset, read_curve_table, DatasetFormat};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_funcause"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("dataset.csv")
}

#[test]
fn simulate_writes_dataset_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--n", "50", "--t", "100", "--scenario", "binary-monotonic"]);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 51);
    let ds = load_dataset(&path, DatasetFormat::Csv).unwrap();
    assert_eq!(ds.len(), 50);
    assert_eq!(ds.outcome_grid().len(), 100);
    let truth = std::fs::read_to_string(tmp.path().join("ground_truth.json")).unwrap();
    assert!(truth.contains("beta_x"));
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = ["--n", "30", "--seed", "11"];
    let pa = simulate(a.path(), &args);
    let pb = simulate(b.path(), &args);
    let pc = simulate(c.path(), &["--n", "30", "--seed", "12"]);
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_ne!(std::fs::read(&pa).unwrap(), std::fs::read(&pc).unwrap());
}

#[test]
fn simulate_json_format() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["simulate", "--n", "20", "--format", "json", "--out-dir", s(tmp.path())]);
    let ds = load_dataset(tmp.path().join("dataset.json"), DatasetFormat::Json).unwrap();
    assert_eq!(ds.len(), 20);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["simulate", "--scenario", "spiral"],
        vec!["estimate", "--data", "x.csv", "--estimator", "magic"],
        vec!["estimate", "--data", "x.csv"],
        vec!["register", "--data", "x.csv"],
        vec!["register", "--data", "x.csv", "--target", ""],
        vec!["benchmark", "--estimators", "ipw,magic"],
        vec!["benchmark", "--replicates", "0"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_1() {
    let out = run(&["estimate", "--data", "/nonexistent/d.csv", "--estimator", "ipw"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let out = bin()
        .env("FUNCAUSE_THREADS", "zero")
        .args(["simulate", "--n", "10", "--out-dir", "/tmp"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn estimate_json(args: &[&str]) -> serde_json::Value {
    let out = ok(args);
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn frechet_euclid_on_randomized_data_is_the_arm_mean_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--n", "60", "--t", "30", "--confounding", "0", "--seed", "3"]);
    let v = estimate_json(&["estimate", "--data", s(&path), "--estimator", "frechet-euclid"]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["estimator"], "frechet-euclid");
    assert!(v.get("ci").is_none());

    // Arm means straight from the CSV text.
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let header = rdr.headers().unwrap().clone();
    let ycols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("y_")).collect();
    let mut sums = [vec![0.0; ycols.len()], vec![0.0; ycols.len()]];
    let mut counts = [0.0; 2];
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let arm = rec[1].parse::<f64>().unwrap() as usize;
        counts[arm] += 1.0;
        for (j, &c) in ycols.iter().enumerate() {
            sums[arm][j] += rec[c].parse::<f64>().unwrap();
        }
    }
    let delta: Vec<f64> = v["effect"]["delta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(delta.len(), ycols.len());
    for j in 0..ycols.len() {
        let oracle = sums[1][j] / counts[1] - sums[0][j] / counts[0];
        assert!((delta[j] - oracle).abs() <= 1e-10, "t index {j}: {} vs {oracle}", delta[j]);
    }
}

#[test]
fn ci_flag_adds_interval_block() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--n", "60", "--t", "30"]);
    let v = estimate_json(&["estimate", "--data", s(&path), "--estimator", "ipw", "--ci", "--level", "0.9"]);
    let ci = &v["ci"];
    assert_eq!(ci["level"], 0.9);
    let (lo, hi) = (ci["lower"].as_f64().unwrap(), ci["upper"].as_f64().unwrap());
    assert!(lo <= hi);
    assert!(ci["regime"].is_string());
    assert!(v["runtime_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn estimate_writes_output_file_and_tuning() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--n", "40", "--t", "25"]);
    let out = tmp.path().join("result.json");
    ok(&[
        "estimate",
        "--data",
        s(&path),
        "--estimator",
        "operator-kernel",
        "--output",
        s(&out),
    ]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["tuned"]["lambda"].as_f64().unwrap() > 0.0);
    assert_eq!(v["effect"]["grid"].as_array().unwrap().len(), 25);
}

#[test]
fn dose_response_on_continuous_data() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--scenario", "continuous-functional", "--n", "40", "--t", "20"]);
    let v = estimate_json(&[
        "estimate",
        "--data",
        s(&path),
        "--estimator",
        "kernel",
        "--lambda",
        "0.01",
        "--dose-levels",
        "0.5,1,1.5",
    ]);
    assert_eq!(v["dose"]["levels"].as_array().unwrap().len(), 3);
    // Binary-only estimators refuse continuous treatments.
    let out = run(&["estimate", "--data", s(&path), "--estimator", "ipw"]);
    assert_eq!(out.status.code(), Some(1));
}

const BENCH: [&str; 10] = [
    "--scenario",
    "binary-monotonic",
    "--estimators",
    "ipw,operator-kernel",
    "--sizes",
    "30,50",
    "--replicates",
    "3",
    "--t",
    "30",
];

fn benchmark(dir: &Path) {
    let mut args = vec!["benchmark", "--out-dir", s(dir)];
    args.extend_from_slice(&BENCH);
    ok(&args);
}

#[test]
fn benchmark_report_shape_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    benchmark(a.path());
    benchmark(b.path());
    let summary: Vec<SummaryRow> = read_table(a.path().join("summary.csv")).unwrap();
    let records: Vec<Record> = read_table(a.path().join("records.csv")).unwrap();
    assert_eq!(summary.len(), 4);
    assert_eq!(records.len(), 12);
    for name in ["summary.csv", "records.csv", "per_t_error.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    for name in ["mae_vs_n.svg", "mae_boxplot.svg", "per_t_error.svg", "timing.csv"] {
        assert!(a.path().join(name).exists(), "{name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metadata"]["schema_version"], 1);
    assert_eq!(report["metadata"]["config"]["replicates"], 3);
    assert!(report["metadata"]["git_hash"].is_string());
    let per_t: Vec<funcause::cli::bench::PerTError> = read_table(a.path().join("per_t_error.csv")).unwrap();
    assert_eq!(per_t.len(), 4 * 30);
}

#[test]
fn benchmark_is_independent_of_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), "1"), (b.path(), "3")] {
        let mut args = vec!["benchmark", "--out-dir", s(dir)];
        args.extend_from_slice(&BENCH);
        let out = bin().env("FUNCAUSE_THREADS", threads).args(&args).output().unwrap();
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(a.path().join("records.csv")).unwrap(),
        std::fs::read(b.path().join("records.csv")).unwrap()
    );
}

#[test]
fn benchmark_reads_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("bench.cfg");
    std::fs::write(
        &cfg,
        format!(
            "[scenario]\nscenario = binary-nonmonotonic\nt = 20\n\n[benchmark]\nestimators = dr, frechet-euclid, kernel\nsizes = 40\nreplicates = 2\nout_dir = {}\n\n[estimation]\nlambda = 0.1\n",
            out_dir.display()
        ),
    )
    .unwrap();
    ok(&["benchmark", "--config", s(&cfg)]);
    let summary: Vec<SummaryRow> = read_table(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 3);
    assert!(summary.iter().all(|r| r.replicates == 2 && r.mae_mean.is_finite()));

    std::fs::write(&cfg, "[scenario]\nnoize = 1\n").unwrap();
    assert_eq!(run(&["benchmark", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn benchmark_ranks_operator_kernel_below_ipw_at_250() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "benchmark",
        "--scenario",
        "binary-monotonic",
        "--estimators",
        "ipw,operator-kernel",
        "--sizes",
        "250",
        "--replicates",
        "5",
        "--out-dir",
        s(tmp.path()),
    ]);
    let summary: Vec<SummaryRow> = read_table(tmp.path().join("summary.csv")).unwrap();
    let ranking = funcause::cli::bench::ranking(&summary, 250);
    assert_eq!(ranking[0].0, "operator-kernel", "{ranking:?}");
}

#[test]
fn register_phase_free_data_gives_identity_warps() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(
        tmp.path(),
        &["--scenario", "binary-nonmonotonic", "--n", "30", "--t", "60", "--noise", "0", "--shift", "0"],
    );
    let out = tmp.path().join("reg");
    ok(&["register", "--data", s(&path), "--target", "outcomes", "--out-dir", s(&out)]);
    let warps = read_curve_table(out.join("outcome_warps.csv")).unwrap();
    assert_eq!(warps.len(), 30);
    let grid: Vec<f64> = (0..60).map(|i| i as f64 / 59.0).collect();
    for (_, w) in &warps {
        let dev = w.iter().zip(&grid).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 2.0 / 59.0, "deviation {dev}");
    }
    assert!(!out.join("covariate_warps.csv").exists());
}

#[test]
fn registering_twice_barely_moves_phase() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--scenario", "binary-nonmonotonic", "--n", "30", "--t", "60", "--noise", "0"]);
    let once = tmp.path().join("once");
    let twice = tmp.path().join("twice");
    ok(&["register", "--data", s(&path), "--target", "both", "--out-dir", s(&once)]);
    ok(&[
        "register",
        "--data",
        s(&once.join("registered.csv")),
        "--target",
        "both",
        "--out-dir",
        s(&twice),
    ]);
    // A second pass is close to a no-op in phase: discrete alignment keeps
    // finding sub-cell refinements, so exact idempotence is not expected.
    let warps = read_curve_table(twice.join("outcome_warps.csv")).unwrap();
    let cells = 59.0;
    for (id, w) in &warps {
        let dev = w
            .iter()
            .enumerate()
            .map(|(j, v)| (v - j as f64 / cells).abs())
            .fold(0.0, f64::max);
        assert!(dev * cells <= 2.0, "{id}: {} cells", dev * cells);
    }
}

#[test]
fn register_covariates_needs_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate(tmp.path(), &["--n", "20", "--t", "20"]);
    let out = run(&["register", "--data", s(&path), "--target", "covariates", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));

    let path = simulate(tmp.path(), &["--scenario", "continuous-functional", "--n", "20", "--t", "20"]);
    let reg = tmp.path().join("reg");
    ok(&["register", "--data", s(&path), "--target", "covariates", "--out-dir", s(&reg)]);
    assert!(reg.join("covariate_warps.csv").exists());
    assert!(!reg.join("outcome_warps.csv").exists());
    let before = load_dataset(&path, DatasetFormat::Csv).unwrap();
    let after = load_dataset(reg.join("registered.csv"), DatasetFormat::Csv).unwrap();
    for (x, y) in before.samples().iter().zip(after.samples()) {
        assert_eq!(x.outcome, y.outcome);
    }
}
