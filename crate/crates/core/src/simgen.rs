//! Synthetic scenarios with known treatment effects.
//!
//! Binary scenarios draw `V ∈ R³` standard normal, assign treatment with
//! `P(X = 1 | V) = logistic(confounding · V̄)` and build outcomes
//! `Y(t) = (1 + confounding · covariate_effect · V̄) (μ₀(t − δ) + β(t − δ) X) + ε(t)`
//! where `β` has three Gaussian peaks and `δ ~ U[−s, s]` shifts each unit's
//! time axis. Since `E V̄ = 0` the average effect is `β`. The monotonic variant accumulates that process over the grid.
//!
//! The continuous scenario gives every unit an arc-shaped covariate curve
//! whose height and location depend on `V̄`, a dose
//! `X = |N(1 + confounding · V̄ / 4, 1/2)|` and
//! `Y(t) = covariate_effect · arc(t − δ) + β(t − δ) X + ε(t)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::fdata::{Curve, Dataset, Grid, ObservationalSample};
use crate::frechet::DynamicEffect;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    BinaryNonmonotonic,
    BinaryMonotonic,
    ContinuousFunctional,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::BinaryNonmonotonic,
        Scenario::BinaryMonotonic,
        Scenario::ContinuousFunctional,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::BinaryNonmonotonic => "binary-nonmonotonic",
            Scenario::BinaryMonotonic => "binary-monotonic",
            Scenario::ContinuousFunctional => "continuous-functional",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .find(|c| c.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    /// Grid length.
    pub t: usize,
    /// Peak amplitude of `β`.
    pub amplitude: f64,
    pub centers: Vec<f64>,
    pub width: f64,
    pub noise: f64,
    /// Half-width of the uniform time shift.
    pub shift: f64,
    pub confounding: f64,
    /// Scale of the covariate contribution to the outcome.
    pub covariate_effect: f64,
    /// Amplitude of the sinusoidal baseline `μ₀`.
    pub baseline: f64,
    pub seed: u64,
    /// Independent stream index under one seed.
    pub replicate: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::BinaryNonmonotonic,
            n: 250,
            t: 100,
            amplitude: 1.0,
            centers: vec![0.25, 0.5, 0.75],
            width: 0.05,
            noise: 0.1,
            shift: 0.05,
            confounding: 1.0,
            covariate_effect: 0.5,
            baseline: 0.5,
            seed: 0,
            replicate: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if self.t < 8 {
            return fail(format!("grid length must be at least 8, got {}", self.t));
        }
        if !(self.width > 0.0) {
            return fail("peak width must be positive".into());
        }
        if !(self.noise >= 0.0) {
            return fail("noise must be nonnegative".into());
        }
        if !(0.0..=0.2).contains(&self.shift) {
            return fail(format!("shift must lie in [0, 0.2], got {}", self.shift));
        }
        let finite = [self.amplitude, self.confounding, self.covariate_effect, self.baseline];
        if finite.iter().chain(&self.centers).any(|v| !v.is_finite()) {
            return fail("scenario parameters must be finite".into());
        }
        Ok(())
    }

    fn beta(&self, t: f64) -> f64 {
        let w2 = 2.0 * self.width * self.width;
        self.centers
            .iter()
            .map(|c| self.amplitude * (-(t - c).powi(2) / w2).exp())
            .sum()
    }

    fn mu0(&self, t: f64) -> f64 {
        self.baseline * (2.0 * std::f64::consts::PI * t).sin()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub scenario: Scenario,
    /// The effect curve `β` the estimators target.
    pub beta_x: Curve,
    /// `‖β‖` on the grid.
    pub true_phi_date: f64,
    /// `‖β‖`: the rate at which `‖φ(x)‖` changes with dose (continuous only).
    pub dose_slope: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthJson {
    scenario: Scenario,
    grid: Vec<f64>,
    beta_x: Vec<f64>,
    true_phi_date: f64,
    dose_slope: Option<f64>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GroundTruthJson {
            scenario: self.scenario,
            grid: self.beta_x.grid().points().to_vec(),
            beta_x: self.beta_x.values().to_vec(),
            true_phi_date: self.true_phi_date,
            dose_slope: self.dose_slope,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: GroundTruthJson = serde_json::from_str(s)?;
        Ok(Self {
            scenario: j.scenario,
            beta_x: Curve::new(Grid::from_points(j.grid)?, j.beta_x)?,
            true_phi_date: j.true_phi_date,
            dose_slope: j.dose_slope,
        })
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws one dataset. Identical configs give identical data.
pub fn generate(cfg: &ScenarioConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let grid = Grid::uniform(cfg.t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.replicate);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;

    let mut truth_values: Vec<f64> = grid.points().iter().map(|&t| cfg.beta(t)).collect();
    if cfg.scenario == Scenario::BinaryMonotonic {
        truth_values = cumsum(&truth_values);
    }
    let beta_x = Curve::new(grid.clone(), truth_values)?;
    let norm = beta_x.l2_norm();

    let mut samples = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let vbar = v.iter().sum::<f64>() / 3.0;
        let delta = cfg.shift * rng.random_range(-1.0..=1.0);
        let eps: Vec<f64> = (0..cfg.t).map(|_| rng.sample(noise)).collect();
        let sample = match cfg.scenario {
            Scenario::BinaryNonmonotonic | Scenario::BinaryMonotonic => {
                let x = f64::from(u8::from(rng.random::<f64>() < logistic(cfg.confounding * vbar)));
                let scale = 1.0 + cfg.confounding * cfg.covariate_effect * vbar;
                let mut y: Vec<f64> = grid
                    .points()
                    .iter()
                    .zip(&eps)
                    .map(|(&t, e)| scale * (cfg.mu0(t - delta) + cfg.beta(t - delta) * x) + e)
                    .collect();
                if cfg.scenario == Scenario::BinaryMonotonic {
                    y = cumsum(&y);
                }
                ObservationalSample {
                    id: format!("u{i}"),
                    treatment: x,
                    covariates: v,
                    covariate_curve: None,
                    outcome: Curve::new(grid.clone(), y)?,
                }
            }
            Scenario::ContinuousFunctional => {
                let height = 1.0 + 0.3 * vbar;
                let loc = 0.5 + 0.1 * vbar;
                let arc = |t: f64| height * (-(t - loc).powi(2) / (2.0 * 0.15f64.powi(2))).exp();
                let delta_v = cfg.shift * rng.random_range(-1.0..=1.0);
                let dose = Normal::new(1.0 + 0.25 * cfg.confounding * vbar, 0.5)
                    .map_err(|e| Error::Config(e.to_string()))?;
                let x = rng.sample(dose).abs();
                let cov = Curve::from_fn(&grid, |t| arc(t - delta_v))?;
                let y = grid
                    .points()
                    .iter()
                    .zip(&eps)
                    .map(|(&t, e)| cfg.covariate_effect * arc(t - delta) + cfg.beta(t - delta) * x + e)
                    .collect();
                ObservationalSample {
                    id: format!("u{i}"),
                    treatment: x,
                    covariates: Vec::new(),
                    covariate_curve: Some(cov),
                    outcome: Curve::new(grid.clone(), y)?,
                }
            }
        };
        samples.push(sample);
    }
    let truth = GroundTruth {
        scenario: cfg.scenario,
        beta_x,
        true_phi_date: norm,
        dose_slope: (cfg.scenario == Scenario::ContinuousFunctional).then_some(norm),
    };
    Ok((Dataset::new(samples)?, truth))
}

fn cumsum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Mean absolute error of `Δ̂` against `β`, and the pointwise error
/// `Δ̂(t) − β(t)`.
pub fn effect_error(estimate: &DynamicEffect, truth: &GroundTruth) -> Result<(f64, Curve)> {
    let err = estimate.delta.sub(&truth.beta_x)?;
    let mae = err.values().iter().map(|e| e.abs()).sum::<f64>() / err.len() as f64;
    Ok((mae, err))
}

/// Standard deviation of the pointwise absolute error across the grid.
pub fn error_spread(per_t: &Curve) -> f64 {
    let abs: Vec<f64> = per_t.values().iter().map(|e| e.abs()).collect();
    let m = abs.iter().sum::<f64>() / abs.len() as f64;
    (abs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / abs.len() as f64).sqrt()
}
