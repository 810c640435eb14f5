//! Weighted Fréchet means of curves, Fréchet-mean potential outcomes and
//! dynamic treatment effects.

use serde::{Deserialize, Serialize};

use crate::classical::PropensityModel;
use crate::elastic::{
    align_pair, fr_distance_srsf, karcher_mean_weighted, sphere_distance, srsf_transform,
    warp_srsf, AlignOptions, KarcherOptions, SrsfCurve,
};
use crate::fdata::{Curve, Dataset};
use crate::{Error, Result};

const SPHERE_MAX_ITER: usize = 500;
const SPHERE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    FisherRaoSrsf,
    FisherRaoSphere,
}

#[derive(Clone, Debug)]
pub struct FrechetMeanResult {
    pub mean: Curve,
    pub metric: Metric,
    /// Weighted objective `Σ w_i φ²(mean, Y_i)` with normalized weights.
    pub objective: f64,
    pub converged: bool,
}

/// `Δ(t)` and its norm `φ^dATE` under a metric.
#[derive(Clone, Debug)]
pub struct DynamicEffect {
    pub delta: Curve,
    pub scalar_norm: f64,
    pub metric: Metric,
}

impl DynamicEffect {
    pub fn euclidean(delta: Curve) -> Self {
        let scalar_norm = delta.l2_norm();
        Self {
            delta,
            scalar_norm,
            metric: Metric::Euclidean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    InversePropensity,
}

fn normalized(weights: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("Fréchet mean of zero curves".into()));
    }
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Weight("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Weight("weights sum to zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn srsf_objective(mean: &SrsfCurve, qs: &[SrsfCurve], w: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (q, wi) in qs.iter().zip(w) {
        if *wi > 0.0 {
            let d = align_pair(mean, q, &AlignOptions::default())?.distance;
            total += wi * d * d;
        }
    }
    Ok(total)
}

/// Weighted Fréchet objective `Σ w_i φ²(candidate, Y_i)` (weights
/// normalized). Under `FisherRaoSrsf`, `φ` is the elastic distance, i.e.
/// the SRSF distance after optimal alignment.
pub fn frechet_objective(
    candidate: &Curve,
    curves: &[Curve],
    weights: &[f64],
    metric: Metric,
) -> Result<f64> {
    let w = normalized(weights, curves.len())?;
    match metric {
        Metric::Euclidean => Ok(curves
            .iter()
            .zip(&w)
            .map(|(c, wi)| {
                let d = candidate.sub(c).map(|r| r.l2_norm()).unwrap_or(f64::NAN);
                wi * d * d
            })
            .sum()),
        Metric::FisherRaoSrsf => {
            let qs: Vec<SrsfCurve> = curves.iter().map(srsf_transform).collect::<Result<_>>()?;
            srsf_objective(&srsf_transform(candidate)?, &qs, &w)
        }
        Metric::FisherRaoSphere => {
            let mut total = 0.0;
            for (c, wi) in curves.iter().zip(&w) {
                let d = sphere_distance(candidate.values(), c.values())?;
                total += wi * d * d;
            }
            Ok(total)
        }
    }
}

/// Weighted empirical Fréchet mean.
pub fn frechet_mean(curves: &[Curve], weights: &[f64], metric: Metric) -> Result<FrechetMeanResult> {
    frechet_mean_with(curves, weights, metric, &KarcherOptions::default())
}

/// As [`frechet_mean`], with explicit Karcher options for `FisherRaoSrsf`.
pub fn frechet_mean_with(
    curves: &[Curve],
    weights: &[f64],
    metric: Metric,
    opts: &KarcherOptions,
) -> Result<FrechetMeanResult> {
    let w = normalized(weights, curves.len())?;
    let grid = curves[0].grid();
    if curves.iter().any(|c| c.grid() != grid) {
        return Err(Error::Domain("curves must share one grid".into()));
    }
    match metric {
        Metric::Euclidean => {
            let mut mean = vec![0.0; grid.len()];
            for (c, wi) in curves.iter().zip(&w) {
                for (m, v) in mean.iter_mut().zip(c.values()) {
                    *m += wi * v;
                }
            }
            let mean = Curve::new(grid.clone(), mean)?;
            let objective = frechet_objective(&mean, curves, &w, metric)?;
            Ok(FrechetMeanResult {
                mean,
                metric,
                objective,
                converged: true,
            })
        }
        Metric::FisherRaoSrsf => {
            let k = karcher_mean_weighted(curves, &w, opts)?;
            let qs: Vec<SrsfCurve> = curves
                .iter()
                .map(|c| crate::elastic::srsf_transform_smoothed(c, opts.smoothing_window))
                .collect::<Result<_>>()?;
            // The elastic distance is a minimum over warps: use the better of
            // a fresh alignment and the warp found during the iteration.
            let mut objective = 0.0;
            for ((q, g), wi) in qs.iter().zip(&k.warps).zip(&w) {
                if *wi == 0.0 {
                    continue;
                }
                let fresh = align_pair(&k.mean_srsf, q, &opts.align)?.distance;
                let held = k.mean_srsf.distance(&warp_srsf(q, g)?)?;
                objective += wi * fresh.min(held).powi(2);
            }
            Ok(FrechetMeanResult {
                mean: k.mean,
                metric,
                objective,
                converged: k.converged,
            })
        }
        Metric::FisherRaoSphere => sphere_mean(curves, &w),
    }
}

/// Projected gradient descent in `ψ = sqrt(f)` over
/// `{ψ ≥ 0, ‖ψ‖ ≤ 1}`, the image of `{f ≥ 0, Σ f ≤ 1}`.
fn sphere_mean(curves: &[Curve], w: &[f64]) -> Result<FrechetMeanResult> {
    let grid = curves[0].grid().clone();
    let roots: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| {
            if let Some(v) = c.values().iter().find(|v| **v < 0.0) {
                return Err(Error::Domain(format!(
                    "spherical Fréchet mean needs nonnegative entries, found {v}"
                )));
            }
            Ok(c.values().iter().map(|v| v.sqrt()).collect())
        })
        .collect::<Result<_>>()?;
    let len = grid.len();

    let objective = |psi: &[f64]| -> f64 {
        roots
            .iter()
            .zip(w)
            .map(|(r, wi)| {
                let s: f64 = psi.iter().zip(r).map(|(a, b)| a * b).sum();
                let d = 2.0 * s.clamp(-1.0, 1.0).acos();
                wi * d * d
            })
            .sum()
    };
    let gradient = |psi: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; len];
        for (r, wi) in roots.iter().zip(w) {
            let s: f64 = psi.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
            let phi = 2.0 * s.acos();
            // dφ/ds = −2/sqrt(1 − s²); φ/sqrt(1 − s²) → 2 as s → 1
            let ratio = if 1.0 - s < 1e-12 { 2.0 } else { phi / (1.0 - s * s).sqrt() };
            // d(φ²)/dψ = 2φ · dφ/ds · r
            let coef = -4.0 * wi * ratio;
            for (gj, rj) in g.iter_mut().zip(r) {
                *gj += coef * rj;
            }
        }
        g
    };
    let project = |psi: &mut [f64]| {
        for v in psi.iter_mut() {
            *v = v.max(0.0);
        }
        let norm = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            for v in psi.iter_mut() {
                *v /= norm;
            }
        }
    };

    let mut init = vec![0.0; len];
    for (c, wi) in curves.iter().zip(w) {
        for (m, v) in init.iter_mut().zip(c.values()) {
            *m += wi * v;
        }
    }
    let total: f64 = init.iter().sum();
    if total > 1.0 {
        init.iter_mut().for_each(|v| *v /= total);
    }
    let mut psi: Vec<f64> = init.iter().map(|v| v.sqrt()).collect();
    let mut value = objective(&psi);
    let mut step = 1.0;
    let mut converged = false;

    for _ in 0..SPHERE_MAX_ITER {
        let g = gradient(&psi);
        let mut accepted = None;
        while step > 1e-16 {
            let mut trial: Vec<f64> = psi.iter().zip(&g).map(|(p, gi)| p - step * gi).collect();
            project(&mut trial);
            let moved: f64 = trial.iter().zip(&psi).map(|(a, b)| (a - b).powi(2)).sum();
            let trial_value = objective(&trial);
            // Armijo condition for the projected step
            if trial_value <= value - 1e-4 / step * moved {
                accepted = Some((trial, trial_value, moved.sqrt()));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_value, moved)) = accepted else {
            converged = true;
            break;
        };
        psi = trial;
        value = trial_value;
        if moved / step < SPHERE_TOL {
            converged = true;
            break;
        }
        step = (step * 2.0).min(1.0);
    }

    let mean = Curve::new(grid, psi.iter().map(|v| v * v).collect())?;
    Ok(FrechetMeanResult {
        mean,
        metric: Metric::FisherRaoSphere,
        objective: value,
        converged,
    })
}

/// Per-arm Fréchet means `(F1, F0)`. Inverse-propensity weights are
/// `1/π̂(V)` for treated and `1/(1 − π̂(V))` for controls, with clipped
/// propensities.
pub fn group_potential_outcomes(
    ds: &Dataset,
    metric: Metric,
    weighting: Weighting,
    propensity: Option<&PropensityModel>,
) -> Result<(FrechetMeanResult, FrechetMeanResult)> {
    ds.require_binary()?;
    let pi = match weighting {
        Weighting::Uniform => None,
        Weighting::InversePropensity => {
            let pm = propensity.ok_or_else(|| {
                Error::Config("inverse-propensity weighting needs a propensity model".into())
            })?;
            Some(pm.predict_dataset(ds)?)
        }
    };
    let arm = |a: u8| -> Result<FrechetMeanResult> {
        let idx = ds.arm_indices(a);
        if idx.is_empty() {
            return Err(Error::ArmEmpty { arm: a });
        }
        let curves: Vec<Curve> = idx.iter().map(|&i| ds.samples()[i].outcome.clone()).collect();
        let weights: Vec<f64> = idx
            .iter()
            .map(|&i| match &pi {
                None => 1.0,
                Some(p) if a == 1 => 1.0 / p[i],
                Some(p) => 1.0 / (1.0 - p[i]),
            })
            .collect();
        frechet_mean(&curves, &weights, metric)
    };
    let (f1, f0) = rayon::join(|| arm(1), || arm(0));
    Ok((f1?, f0?))
}

/// `Δ = F1 − F0` pointwise, with `φ^dATE` measured under `metric`.
pub fn dynamic_effect(f1: &Curve, f0: &Curve, metric: Metric) -> Result<DynamicEffect> {
    let delta = f1.sub(f0)?;
    let scalar_norm = match metric {
        Metric::Euclidean => delta.l2_norm(),
        Metric::FisherRaoSrsf => fr_distance_srsf(f1, f0)?,
        Metric::FisherRaoSphere => sphere_distance(f1.values(), f0.values())?,
    };
    Ok(DynamicEffect {
        delta,
        scalar_norm,
        metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::{Grid, ObservationalSample};

    fn g(n: usize) -> Grid {
        Grid::uniform(n).unwrap()
    }

    #[test]
    fn euclidean_mean_is_pointwise_average() {
        let a = Curve::from_fn(&g(20), |t| t).unwrap();
        let b = Curve::from_fn(&g(20), |t| 1.0 - t * t).unwrap();
        let m = frechet_mean(&[a.clone(), b.clone()], &[1.0, 1.0], Metric::Euclidean).unwrap();
        for i in 0..20 {
            assert_eq!(m.mean.values()[i], 0.5 * a.values()[i] + 0.5 * b.values()[i]);
        }
        let w = frechet_mean(&[a.clone(), b.clone()], &[3.0, 1.0], Metric::Euclidean).unwrap();
        for i in 0..20 {
            assert!((w.mean.values()[i] - (0.75 * a.values()[i] + 0.25 * b.values()[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_curve_under_every_metric() {
        let c = Curve::from_fn(&g(256), |t| 0.2 + 0.1 * (6.0 * t).sin()).unwrap();
        for metric in [Metric::Euclidean, Metric::FisherRaoSrsf] {
            let m = frechet_mean(std::slice::from_ref(&c), &[2.0], metric).unwrap();
            assert!(m.mean.sup_distance(&c).unwrap() <= 1e-3, "{metric:?}");
        }
        let p = Curve::new(g(3), vec![0.2, 0.3, 0.5]).unwrap();
        let m = frechet_mean(std::slice::from_ref(&p), &[1.0], Metric::FisherRaoSphere).unwrap();
        assert!(m.mean.sup_distance(&p).unwrap() <= 1e-6);
    }

    #[test]
    fn zero_weights_rejected() {
        let c = Curve::zeros(&g(5));
        for metric in [Metric::Euclidean, Metric::FisherRaoSrsf, Metric::FisherRaoSphere] {
            let err = frechet_mean(&[c.clone(), c.clone()], &[0.0, 0.0], metric);
            assert!(matches!(err, Err(Error::Weight(_))));
        }
    }

    #[test]
    fn sphere_mean_matches_grid_search() {
        let p = Curve::new(g(3), vec![0.30, 0.30, 0.30]).unwrap();
        let r = Curve::new(g(3), vec![0.10, 0.40, 0.40]).unwrap();
        let m = frechet_mean(&[p, r], &[1.0, 1.0], Metric::FisherRaoSphere).unwrap();
        // exhaustive search over {f ≥ 0, Σf ≤ 1} at resolution 1e-3
        let oracle = [0.211, 0.395, 0.394];
        for (v, o) in m.mean.values().iter().zip(oracle) {
            assert!((v - o).abs() <= 2e-3, "{:?}", m.mean.values());
        }
        assert!(m.converged);
    }

    #[test]
    fn mean_beats_every_input() {
        use crate::elastic::{warp_curve, WarpingFunction};
        let grid = g(128);
        let curves: Vec<Curve> = (0..6)
            .map(|k| {
                let k = k as f64;
                let a = 0.15 * (1.3 * k).sin();
                let amp = 1.0 + 0.2 * (0.7 * k).cos();
                let gamma = WarpingFunction::from_fn(&grid, |t| t + a * t * (1.0 - t)).unwrap();
                let base = Curve::from_fn(&grid, |t| {
                    amp * ((2.0 * std::f64::consts::PI * t).sin() + 0.5 * (6.0 * t).cos())
                })
                .unwrap();
                warp_curve(&base, &gamma).unwrap()
            })
            .collect();
        let densities: Vec<Curve> = (0..5)
            .map(|k| {
                let c = 0.3 + 0.1 * k as f64;
                let raw = Curve::from_fn(&g(16), |t| 0.05 + (-(t - c).powi(2) / 0.02).exp()).unwrap();
                let total: f64 = raw.values().iter().sum();
                raw.scale(0.9 / total)
            })
            .collect();
        let w = [1.0, 2.0, 1.0, 0.5, 1.5, 1.0];
        for (metric, data) in [
            (Metric::Euclidean, &curves),
            (Metric::FisherRaoSrsf, &curves),
            (Metric::FisherRaoSphere, &densities),
        ] {
            let w = &w[..data.len()];
            let m = frechet_mean(data, w, metric).unwrap();
            for c in data.iter() {
                let at_input = frechet_objective(c, data, w, metric).unwrap();
                assert!(m.objective <= at_input + 1e-12, "{metric:?}: {} > {at_input}", m.objective);
            }
        }
    }

    #[test]
    fn dynamic_effect_examples() {
        let grid = g(30);
        let a = Curve::from_fn(&grid, |t| t * t).unwrap();
        let e = dynamic_effect(&a, &a, Metric::Euclidean).unwrap();
        assert_eq!(e.scalar_norm, 0.0);
        assert_eq!(e.delta.sup_norm(), 0.0);
        let shifted = a.map(|v| v + 2.0).unwrap();
        let e = dynamic_effect(&shifted, &a, Metric::Euclidean).unwrap();
        assert!((e.scalar_norm - 2.0).abs() < 1e-12);
        let e = dynamic_effect(&shifted, &a, Metric::FisherRaoSrsf).unwrap();
        assert!(e.scalar_norm.abs() < 1e-12);
    }

    fn randomized(n: usize) -> Dataset {
        let grid = g(12);
        Dataset::new(
            (0..n)
                .map(|i| {
                    let x = (i % 2) as f64;
                    ObservationalSample {
                        id: i.to_string(),
                        treatment: x,
                        covariates: vec![i as f64 / n as f64],
                        covariate_curve: None,
                        outcome: Curve::from_fn(&grid, |t| x * t + (i as f64 * 0.37).sin())
                            .unwrap(),
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_group_means_are_arm_means() {
        let ds = randomized(10);
        let (f1, f0) =
            group_potential_outcomes(&ds, Metric::Euclidean, Weighting::Uniform, None).unwrap();
        for (f, arm) in [(f1, 1u8), (f0, 0u8)] {
            let idx = ds.arm_indices(arm);
            for t in 0..12 {
                let m = idx.iter().map(|&i| ds.samples()[i].outcome.values()[t]).sum::<f64>()
                    / idx.len() as f64;
                assert!((f.mean.values()[t] - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_propensity_matches_uniform() {
        let ds = randomized(10);
        let pm = PropensityModel::constant(0.5, 1).unwrap();
        let (u1, u0) =
            group_potential_outcomes(&ds, Metric::Euclidean, Weighting::Uniform, None).unwrap();
        let (p1, p0) = group_potential_outcomes(
            &ds,
            Metric::Euclidean,
            Weighting::InversePropensity,
            Some(&pm),
        )
        .unwrap();
        assert!(u1.mean.sup_distance(&p1.mean).unwrap() < 1e-12);
        assert!(u0.mean.sup_distance(&p0.mean).unwrap() < 1e-12);
    }
}
