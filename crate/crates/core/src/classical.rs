//! Propensity and outcome regression, and the coordinate-wise IPW and
//! doubly-robust estimators for curve-valued outcomes.

use nalgebra::{DMatrix, DVector};

use crate::fdata::{Curve, Dataset};
use crate::frechet::DynamicEffect;
use crate::{Error, Result, PROPENSITY_CLIP};

const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-8;

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn design_row(v: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(v.iter().copied()).collect()
}

fn design(ds: &Dataset, rows: &[usize]) -> DMatrix<f64> {
    let d = ds.covariate_dim();
    DMatrix::from_fn(rows.len(), d + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            ds.samples()[rows[i]].covariates[j - 1]
        }
    })
}

/// Solves the symmetric system `a x = b`, falling back to a pseudo-inverse
/// when `a` is not numerically positive definite.
fn solve_spd(a: DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.svd(true, true)
        .solve(b, 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Logistic propensity model `π(v) = logistic(β₀ + βᵀv)`, clipped to
/// `[clip_eps, 1 − clip_eps]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropensityModel {
    coefficients: Vec<f64>,
    clip_eps: f64,
}

impl PropensityModel {
    pub fn new(coefficients: Vec<f64>, clip_eps: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Domain("propensity model needs an intercept".into()));
        }
        if !(clip_eps > 0.0 && clip_eps < 0.5) {
            return Err(Error::Domain(format!("clip_eps {clip_eps} outside (0, 0.5)")));
        }
        if let Some(index) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            coefficients,
            clip_eps,
        })
    }

    /// A model that predicts `p` for every covariate vector of dimension `d`.
    pub fn constant(p: f64, d: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("constant propensity {p} outside (0, 1)")));
        }
        let mut coefficients = vec![0.0; d + 1];
        coefficients[0] = (p / (1.0 - p)).ln();
        Self::new(coefficients, PROPENSITY_CLIP)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn clip_eps(&self) -> f64 {
        self.clip_eps
    }

    pub fn predict(&self, v: &[f64]) -> f64 {
        let z = self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(v)
                .map(|(b, x)| b * x)
                .sum::<f64>();
        logistic(z).clamp(self.clip_eps, 1.0 - self.clip_eps)
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.covariate_dim() + 1 != self.coefficients.len() {
            return Err(Error::LengthMismatch {
                expected: self.coefficients.len() - 1,
                found: ds.covariate_dim(),
            });
        }
        Ok(ds
            .samples()
            .iter()
            .map(|s| self.predict(&s.covariates))
            .collect())
    }
}

/// L2-penalized logistic regression of treatment on covariates by damped
/// IRLS. The intercept is not penalized.
pub fn fit_propensity(ds: &Dataset, l2: f64) -> Result<PropensityModel> {
    ds.require_binary()?;
    if !(l2 >= 0.0) {
        return Err(Error::Domain("l2 penalty must be nonnegative".into()));
    }
    let rows: Vec<usize> = (0..ds.len()).collect();
    let x = design(ds, &rows);
    let y = DVector::from_iterator(ds.len(), ds.samples().iter().map(|s| s.treatment));
    let p = x.ncols();
    let mut penalty = DMatrix::identity(p, p) * l2;
    penalty[(0, 0)] = 0.0;

    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        let ll: f64 = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| {
                // log(1 + exp(e)) computed stably
                let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                yi * e - softplus
            })
            .sum();
        -ll + 0.5 * (beta.transpose() * &penalty * beta)[(0, 0)]
    };

    let mut beta = DVector::zeros(p);
    let mut current = objective(&beta);
    for _ in 0..IRLS_MAX_ITER {
        let eta = &x * &beta;
        let mu = eta.map(logistic);
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let grad = x.transpose() * (&y - &mu) - &penalty * &beta;
        let mut hess = x.transpose() * DMatrix::from_diagonal(&w) * &x + &penalty;
        for i in 0..p {
            hess[(i, i)] += 1e-12;
        }
        let step = solve_spd(hess, &DMatrix::from_column_slice(p, 1, grad.as_slice()))?;
        let step = DVector::from_column_slice(step.as_slice());

        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut value = objective(&next);
        while value > current && scale > 1e-6 {
            scale *= 0.5;
            next = &beta + &step * scale;
            value = objective(&next);
        }
        let change = (&step * scale).amax();
        beta = next;
        current = value;
        if change < IRLS_TOL {
            break;
        }
    }
    PropensityModel::new(beta.iter().copied().collect(), PROPENSITY_CLIP)
}

/// Per-arm, per-grid-point ridge regressions of `Y(t)` on `(1, V)`.
#[derive(Clone, Debug)]
pub struct OutcomeModel {
    /// `(d + 1) × T` coefficients for the treated arm.
    pub treated: DMatrix<f64>,
    /// `(d + 1) × T` coefficients for the control arm.
    pub control: DMatrix<f64>,
    pub ridge: f64,
}

impl OutcomeModel {
    /// Predicted curve `m̂_arm(v)` as raw values on the outcome grid.
    pub fn predict(&self, arm: u8, v: &[f64]) -> Vec<f64> {
        let coef = if arm == 1 { &self.treated } else { &self.control };
        let z = design_row(v);
        (0..coef.ncols())
            .map(|t| z.iter().enumerate().map(|(j, zj)| zj * coef[(j, t)]).sum())
            .collect()
    }
}

fn fit_arm(ds: &Dataset, arm: u8, ridge: f64) -> Result<DMatrix<f64>> {
    let rows = ds.arm_indices(arm);
    if rows.is_empty() {
        return Err(Error::ArmEmpty { arm });
    }
    let z = design(ds, &rows);
    let y = DMatrix::from_fn(rows.len(), ds.outcome_grid().len(), |i, t| {
        ds.samples()[rows[i]].outcome.values()[t]
    });
    let p = z.ncols();
    let mut gram = z.transpose() * &z;
    for j in 1..p {
        gram[(j, j)] += ridge;
    }
    let coef = solve_spd(gram, &(z.transpose() * y))?;
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("outcome regression produced non-finite coefficients".into()));
    }
    Ok(coef)
}

pub fn fit_outcome_models(ds: &Dataset, ridge: f64) -> Result<OutcomeModel> {
    ds.require_binary()?;
    if !(ridge >= 0.0) {
        return Err(Error::Domain("ridge must be nonnegative".into()));
    }
    Ok(OutcomeModel {
        treated: fit_arm(ds, 1, ridge)?,
        control: fit_arm(ds, 0, ridge)?,
        ridge,
    })
}

fn effect_from_sum(ds: &Dataset, sum: Vec<f64>) -> Result<DynamicEffect> {
    let n = ds.len() as f64;
    let delta = Curve::new(ds.outcome_grid().clone(), sum.into_iter().map(|v| v / n).collect())?;
    Ok(DynamicEffect::euclidean(delta))
}

/// `Δ̂(t) = (1/n) Σ [X Y(t)/π̂ − (1 − X) Y(t)/(1 − π̂)]`.
pub fn ipw_effect(ds: &Dataset, pm: &PropensityModel) -> Result<DynamicEffect> {
    ds.require_binary()?;
    let pi = pm.predict_dataset(ds)?;
    let mut sum = vec![0.0; ds.outcome_grid().len()];
    for (s, p) in ds.samples().iter().zip(pi) {
        let w = if s.treatment == 1.0 { 1.0 / p } else { -1.0 / (1.0 - p) };
        for (acc, y) in sum.iter_mut().zip(s.outcome.values()) {
            *acc += w * y;
        }
    }
    effect_from_sum(ds, sum)
}

/// Augmented IPW:
/// `Δ̂(t) = (1/n) Σ [m̂₁ − m̂₀ + X (Y − m̂₁)/π̂ − (1 − X)(Y − m̂₀)/(1 − π̂)]`.
pub fn dr_effect(ds: &Dataset, pm: &PropensityModel, om: &OutcomeModel) -> Result<DynamicEffect> {
    ds.require_binary()?;
    let pi = pm.predict_dataset(ds)?;
    let mut sum = vec![0.0; ds.outcome_grid().len()];
    for (s, p) in ds.samples().iter().zip(pi) {
        let m1 = om.predict(1, &s.covariates);
        let m0 = om.predict(0, &s.covariates);
        let y = s.outcome.values();
        for t in 0..sum.len() {
            let aug = if s.treatment == 1.0 {
                (y[t] - m1[t]) / p
            } else {
                -(y[t] - m0[t]) / (1.0 - p)
            };
            sum[t] += m1[t] - m0[t] + aug;
        }
    }
    effect_from_sum(ds, sum)
}
