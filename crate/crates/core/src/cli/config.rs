//! Flat `key = value` configuration files with `[section]` headers.
//!
//! ```text
//! # comment
//! [scenario]
//! scenario = binary-monotonic
//! noise = 0.1
//!
//! [benchmark]
//! estimators = ipw, kernel, operator-kernel
//! sizes = 50, 100, 250
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`.
//! Lists are comma separated. Unknown sections or keys are rejected so typos
//! do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::elastic::KarcherOptions;
use crate::estimators::{EstimateOptions, Estimator, TuneGrid};
use crate::frechet::Weighting;
use crate::simgen::{Scenario, ScenarioConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}' in section [{current}]",
                    lineno + 1
                )));
            }
        }
        Ok(Self { sections })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    fn keys(&self, section: &str) -> impl Iterator<Item = &str> {
        self.sections.get(section).into_iter().flat_map(|s| s.keys().map(String::as_str))
    }

    /// Fails on any section or key outside `schema`.
    pub fn check_known(&self, schema: &[(&str, &[&str])]) -> Result<()> {
        for name in self.section_names() {
            let Some((_, keys)) = schema.iter().find(|(s, _)| *s == name) else {
                return Err(Error::Config(format!("unknown section [{name}]")));
            };
            for key in self.keys(name) {
                if !keys.contains(&key) {
                    return Err(Error::Config(format!("unknown key '{key}' in section [{name}]")));
                }
            }
        }
        Ok(())
    }

    pub fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| parse_value(v).map_err(|e| Error::Config(format!("[{section}] {key}: {e}"))))
            .transpose()
    }

    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| parse_list(v).map_err(|e| Error::Config(format!("[{section}] {key}: {e}"))))
            .transpose()
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_value<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| format!("'{}': {e}", v.trim()))
}

pub fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_value)
        .collect()
}

pub fn parse_weighting(s: &str) -> Result<Weighting> {
    match s {
        "uniform" => Ok(Weighting::Uniform),
        "inverse-propensity" | "ipw" => Ok(Weighting::InversePropensity),
        other => Err(Error::Config(format!(
            "unknown weighting '{other}' (expected uniform or inverse-propensity)"
        ))),
    }
}

pub fn weighting_name(w: Weighting) -> &'static str {
    match w {
        Weighting::Uniform => "uniform",
        Weighting::InversePropensity => "inverse-propensity",
    }
}

const SCENARIO_KEYS: &[&str] = &[
    "scenario",
    "n",
    "t",
    "amplitude",
    "centers",
    "width",
    "noise",
    "shift",
    "confounding",
    "covariate_effect",
    "baseline",
    "seed",
    "replicate",
];
const BENCHMARK_KEYS: &[&str] = &["estimators", "sizes", "replicates", "out_dir"];
const TUNING_KEYS: &[&str] = &["lambdas", "bandwidth_scales", "output_scales", "holdout", "seed"];
const ESTIMATION_KEYS: &[&str] = &[
    "weighting",
    "propensity_l2",
    "outcome_ridge",
    "lambda",
    "max_rounds",
    "tol",
    "smoothing_window",
    "karcher_max_iter",
];

pub const SCHEMA: &[(&str, &[&str])] = &[
    ("scenario", SCENARIO_KEYS),
    ("benchmark", BENCHMARK_KEYS),
    ("tuning", TUNING_KEYS),
    ("estimation", ESTIMATION_KEYS),
];

pub fn scenario_config(cfg: &ConfigFile) -> Result<ScenarioConfig> {
    let mut sc = ScenarioConfig::default();
    if let Some(s) = cfg.get("scenario", "scenario") {
        sc.scenario = s.parse::<Scenario>()?;
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = cfg.parsed("scenario", stringify!($field))? {
                sc.$field = v;
            })*
        };
    }
    set!(n, t, amplitude, width, noise, shift, confounding, covariate_effect, baseline, seed, replicate);
    if let Some(c) = cfg.list("scenario", "centers")? {
        sc.centers = c;
    }
    Ok(sc)
}

pub fn estimate_options(cfg: &ConfigFile) -> Result<EstimateOptions> {
    let mut opts = EstimateOptions::default();
    let tune = &mut opts.tune;
    if let Some(v) = cfg.list("tuning", "lambdas")? {
        tune.lambdas = v;
    }
    if let Some(v) = cfg.list("tuning", "bandwidth_scales")? {
        tune.bandwidth_scales = v;
    }
    if let Some(v) = cfg.list("tuning", "output_scales")? {
        tune.output_scales = v;
    }
    if let Some(v) = cfg.parsed("tuning", "holdout")? {
        tune.holdout = v;
    }
    if let Some(v) = cfg.parsed("tuning", "seed")? {
        tune.seed = v;
    }
    if let Some(w) = cfg.get("estimation", "weighting") {
        opts.weighting = parse_weighting(w)?;
    }
    if let Some(v) = cfg.parsed("estimation", "propensity_l2")? {
        opts.propensity_l2 = v;
    }
    if let Some(v) = cfg.parsed("estimation", "outcome_ridge")? {
        opts.outcome_ridge = v;
    }
    if let Some(v) = cfg.parsed("estimation", "lambda")? {
        opts.lambda = Some(v);
    }
    if let Some(v) = cfg.parsed("estimation", "max_rounds")? {
        opts.max_rounds = v;
    }
    if let Some(v) = cfg.parsed("estimation", "tol")? {
        opts.tol = v;
    }
    if let Some(v) = cfg.parsed("estimation", "smoothing_window")? {
        opts.karcher.smoothing_window = v;
    }
    if let Some(v) = cfg.parsed("estimation", "karcher_max_iter")? {
        opts.karcher.max_iter = v;
    }
    validate_options(&opts)?;
    Ok(opts)
}

pub fn validate_options(opts: &EstimateOptions) -> Result<()> {
    let t = &opts.tune;
    if t.lambdas.is_empty() || t.bandwidth_scales.is_empty() || t.output_scales.is_empty() {
        return Err(Error::Config("tuning grids must be non-empty".into()));
    }
    let positive = |xs: &[f64]| xs.iter().all(|x| x.is_finite() && *x > 0.0);
    if !positive(&t.lambdas) || !positive(&t.bandwidth_scales) || !positive(&t.output_scales) {
        return Err(Error::Config("tuning grid values must be positive".into()));
    }
    if !(t.holdout > 0.0 && t.holdout < 1.0) {
        return Err(Error::Config(format!("holdout must lie in (0, 1), got {}", t.holdout)));
    }
    if let Some(l) = opts.lambda {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {l}")));
        }
    }
    if opts.max_rounds == 0 {
        return Err(Error::Config("max_rounds must be at least 1".into()));
    }
    Ok(())
}

/// Everything a benchmark run needs.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Base scenario; `n`, and `replicate` are overridden per run.
    pub scenario: ScenarioConfig,
    pub estimators: Vec<Estimator>,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub out_dir: PathBuf,
    pub options: EstimateOptions,
}

impl RunConfig {
    pub fn from_file(cfg: &ConfigFile) -> Result<Self> {
        cfg.check_known(SCHEMA)?;
        let mut scenario = scenario_config(cfg)?;
        // Sample sizes come from [benchmark]; keep the scenario valid meanwhile.
        let sizes: Vec<usize> = cfg.list("benchmark", "sizes")?.unwrap_or_else(|| vec![50, 100, 250]);
        if let Some(&n) = sizes.first() {
            scenario.n = n;
        }
        let estimators = match cfg.get("benchmark", "estimators") {
            Some(v) => parse_estimators(v)?,
            None => vec![Estimator::Ipw, Estimator::Kernel, Estimator::OperatorKernel],
        };
        let run = Self {
            scenario,
            estimators,
            sizes,
            replicates: cfg.parsed("benchmark", "replicates")?.unwrap_or(5),
            out_dir: cfg
                .get("benchmark", "out_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("benchmark-out")),
            options: estimate_options(cfg)?,
        };
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::Config("at least one sample size is required".into()));
        }
        let mut seen = Vec::new();
        for e in &self.estimators {
            if seen.contains(e) {
                return Err(Error::Config(format!("estimator '{e}' listed twice")));
            }
            seen.push(*e);
        }
        for &n in &self.sizes {
            let mut sc = self.scenario.clone();
            sc.n = n;
            sc.validate().map_err(|e| Error::Config(format!("scenario with n={n}: {e}")))?;
        }
        validate_options(&self.options)
    }

    /// Serializable echo of the configuration, for report metadata.
    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            scenario: self.scenario.clone(),
            estimators: self.estimators.iter().map(|e| e.name().to_string()).collect(),
            sizes: self.sizes.clone(),
            replicates: self.replicates,
            tuning: self.options.tune.clone(),
            weighting: weighting_name(self.options.weighting).to_string(),
            propensity_l2: self.options.propensity_l2,
            outcome_ridge: self.options.outcome_ridge,
            lambda: self.options.lambda,
            max_rounds: self.options.max_rounds,
            tol: self.options.tol,
            karcher: KarcherEcho::from(&self.options.karcher),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub scenario: ScenarioConfig,
    pub estimators: Vec<String>,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub tuning: TuneGrid,
    pub weighting: String,
    pub propensity_l2: f64,
    pub outcome_ridge: f64,
    pub lambda: Option<f64>,
    pub max_rounds: usize,
    pub tol: f64,
    pub karcher: KarcherEcho,
}

#[derive(Clone, Debug, Serialize)]
pub struct KarcherEcho {
    pub max_iter: usize,
    pub tol: f64,
    pub smoothing_window: usize,
}

impl From<&KarcherOptions> for KarcherEcho {
    fn from(k: &KarcherOptions) -> Self {
        Self {
            max_iter: k.max_iter,
            tol: k.tol,
            smoothing_window: k.smoothing_window,
        }
    }
}

pub fn parse_estimators(v: &str) -> Result<Vec<Estimator>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<Estimator>)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let cfg = ConfigFile::parse(
            "top = 1\n# note\n[scenario]\n noise = 0.2 ; trailing\nscenario=binary-monotonic\n\n[benchmark]\nsizes = 50, 100\n",
        )
        .unwrap();
        assert_eq!(cfg.get("", "top"), Some("1"));
        assert_eq!(cfg.get("scenario", "noise"), Some("0.2"));
        assert_eq!(cfg.list::<usize>("benchmark", "sizes").unwrap(), Some(vec![50, 100]));
        assert_eq!(cfg.get("benchmark", "missing"), None);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(ConfigFile::parse("[scenario\n").is_err());
        assert!(ConfigFile::parse("just words\n").is_err());
        assert!(ConfigFile::parse("= 3\n").is_err());
        assert!(ConfigFile::parse("[a]\nk=1\nk=2\n").is_err());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let cfg = ConfigFile::parse("[scenario]\nnoize = 0.1\n").unwrap();
        assert!(matches!(RunConfig::from_file(&cfg), Err(Error::Config(_))));
        let cfg = ConfigFile::parse("[plots]\nwidth = 3\n").unwrap();
        assert!(matches!(RunConfig::from_file(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn run_config_from_file() {
        let cfg = ConfigFile::parse(
            "[scenario]\nscenario = continuous-functional\nt = 40\ncenters = 0.3, 0.6\n\
             [benchmark]\nestimators = ipw, kernel\nsizes = 30, 60\nreplicates = 3\nout_dir = out\n\
             [tuning]\nlambdas = 0.1, 1\n[estimation]\nweighting = inverse-propensity\nlambda = 0.5\n",
        )
        .unwrap();
        let run = RunConfig::from_file(&cfg).unwrap();
        assert_eq!(run.scenario.scenario, Scenario::ContinuousFunctional);
        assert_eq!(run.scenario.t, 40);
        assert_eq!(run.scenario.centers, vec![0.3, 0.6]);
        assert_eq!(run.estimators, vec![Estimator::Ipw, Estimator::Kernel]);
        assert_eq!(run.sizes, vec![30, 60]);
        assert_eq!(run.replicates, 3);
        assert_eq!(run.out_dir, PathBuf::from("out"));
        assert_eq!(run.options.tune.lambdas, vec![0.1, 1.0]);
        assert_eq!(run.options.weighting, Weighting::InversePropensity);
        assert_eq!(run.options.lambda, Some(0.5));
        run.validate().unwrap();
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[scenario]\nscenario = spiral\n",
            "[benchmark]\nestimators = ipw, magic\n",
            "[benchmark]\nsizes = ten\n",
            "[tuning]\nholdout = 1.5\n",
            "[estimation]\nweighting = heavy\n",
        ] {
            let cfg = ConfigFile::parse(text).unwrap();
            assert!(matches!(RunConfig::from_file(&cfg), Err(Error::Config(_))), "{text}");
        }
        let cfg = ConfigFile::parse("[benchmark]\nreplicates = 0\n").unwrap();
        assert!(RunConfig::from_file(&cfg).unwrap().validate().is_err());
    }
}
