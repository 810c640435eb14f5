//! Asymptotic confidence intervals for dynamic effects and a Welch t-test.
//!
//! For the arm-mean difference `Δ̂`, `√n (Δ̂ − Δ)` is asymptotically normal
//! with covariance `K = n (Σ₁/n₁ + Σ₀/n₀)`. The norm `‖Δ̂‖` then has two
//! regimes. Away from zero the delta method gives variance
//! `Δᵀ W K W Δ / ‖Δ‖²` with `W` the quadrature weights. At `Δ = 0`,
//! `n ‖Δ̂‖²` converges to the generalized χ² law `Σ λ_i ν_i²` with `λ_i`
//! the eigenvalues of `W^{1/2} K W^{1/2}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::fdata::{Curve, Dataset};
use crate::{Error, Result};

/// Monte-Carlo draws for generalized χ² quantiles.
pub const GCHI2_DRAWS: usize = 100_000;
/// Seed of the generalized χ² draws.
pub const GCHI2_SEED: u64 = 0x5eed;
/// Eigenvalue floor applied to the covariance.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Level of the null test that picks the regime.
pub const REGIME_TEST_LEVEL: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    NonzeroNorm,
    ZeroNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectCI {
    /// `‖Δ̂‖`.
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub regime: Regime,
    /// Delta-method standard deviation `σ̂` (before dividing by `√n`).
    pub sigma: f64,
    pub pointwise: Option<Vec<Interval>>,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

fn z_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

fn arm_covariance(ds: &Dataset, arm: u8) -> Result<(DMatrix<f64>, usize)> {
    let idx = ds.arm_indices(arm);
    if idx.len() < 2 {
        return Err(Error::ArmEmpty { arm });
    }
    let t = ds.outcome_grid().len();
    let y = DMatrix::from_fn(idx.len(), t, |r, c| ds.samples()[idx[r]].outcome.values()[c]);
    let mean = y.row_mean();
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (idx.len() - 1) as f64;
    Ok((cov, idx.len()))
}

/// `K̂ = n (S₁/n₁ + S₀/n₀)` from the arm-wise sample covariances.
pub fn effect_covariance(ds: &Dataset) -> Result<DMatrix<f64>> {
    ds.require_binary()?;
    let (s1, n1) = arm_covariance(ds, 1)?;
    let (s0, n0) = arm_covariance(ds, 0)?;
    let n = ds.len() as f64;
    Ok(s1 * (n / n1 as f64) + s0 * (n / n0 as f64))
}

/// Eigenvalues of `W^{1/2} K W^{1/2}`, floored at [`EIGEN_FLOOR`].
pub fn weighted_eigenvalues(k: &DMatrix<f64>, weights: &[f64]) -> Vec<f64> {
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let m = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| sw[i] * k[(i, j)] * sw[j]);
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|l| l.max(EIGEN_FLOOR))
        .collect()
}

/// Monte-Carlo sample of `Σ λ_i ν_i²`, sorted ascending. Draw `k` uses its
/// own ChaCha stream so the result does not depend on thread count.
pub fn generalized_chi2_sample(lambdas: &[f64], draws: usize, seed: u64) -> Vec<f64> {
    const CHUNK: usize = 4096;
    let mut out: Vec<f64> = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(draws - c * CHUNK);
            (0..len)
                .map(|_| {
                    lambdas
                        .iter()
                        .map(|l| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            l * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Empirical quantile of a sorted sample (nearest rank).
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Confidence interval for `‖Δ‖` given the arm-mean difference `delta_hat`
/// of `ds`.
///
/// The regime is chosen by testing `Δ = 0`: if `n ‖Δ̂‖²` exceeds the 99%
/// generalized χ² quantile the delta-method interval is used, otherwise the
/// interval comes from the null law.
pub fn effect_ci(ds: &Dataset, delta_hat: &Curve, level: f64) -> Result<EffectCI> {
    check_level(level)?;
    if ds.len() < 10 {
        return Err(Error::Domain(format!("need at least 10 samples, got {}", ds.len())));
    }
    if delta_hat.grid() != ds.outcome_grid() {
        return Err(Error::LengthMismatch {
            expected: ds.outcome_grid().len(),
            found: delta_hat.len(),
        });
    }
    let k = effect_covariance(ds)?;
    effect_ci_from_covariance(delta_hat, &k, ds.len(), level)
}

/// As [`effect_ci`] with a given covariance `K̂` and sample size.
pub fn effect_ci_from_covariance(delta_hat: &Curve, k: &DMatrix<f64>, n: usize, level: f64) -> Result<EffectCI> {
    check_level(level)?;
    let t = delta_hat.len();
    if k.nrows() != t || k.ncols() != t {
        return Err(Error::LengthMismatch {
            expected: t * t,
            found: k.len(),
        });
    }
    let w = delta_hat.grid().quadrature_weights();
    let d = delta_hat.values();
    let norm = delta_hat.l2_norm();
    let nf = n as f64;
    let lambdas = weighted_eigenvalues(k, &w);
    let null = generalized_chi2_sample(&lambdas, GCHI2_DRAWS, GCHI2_SEED);
    let critical = sorted_quantile(&null, REGIME_TEST_LEVEL);

    let wd: Vec<f64> = d.iter().zip(&w).map(|(a, b)| a * b).collect();
    let quad = {
        let v = nalgebra::DVector::from_column_slice(&wd);
        (v.transpose() * k * &v)[(0, 0)]
    };
    let sigma = if norm > 0.0 { (quad.max(0.0)).sqrt() / norm } else { 0.0 };
    let z = z_quantile(level);
    let pointwise = pointwise_ci(delta_hat, &k.diagonal().iter().copied().collect::<Vec<_>>(), n, level)?;

    let (regime, lower, upper) = if nf * norm * norm > critical && sigma > 0.0 {
        let half = z * sigma / nf.sqrt();
        (Regime::NonzeroNorm, (norm - half).max(0.0), norm + half)
    } else {
        let alpha = 1.0 - level;
        let lo = (sorted_quantile(&null, alpha / 2.0) / nf).sqrt();
        let hi = (sorted_quantile(&null, 1.0 - alpha / 2.0) / nf).sqrt();
        (Regime::ZeroNorm, lo, hi)
    };
    Ok(EffectCI {
        estimate: norm,
        lower,
        upper,
        level,
        regime,
        sigma,
        pointwise: Some(pointwise),
    })
}

/// `Δ̂(t) ± z √(K̂_tt / n)` per grid point.
pub fn pointwise_ci(delta_hat: &Curve, k_diag: &[f64], n: usize, level: f64) -> Result<Vec<Interval>> {
    check_level(level)?;
    if k_diag.len() != delta_hat.len() {
        return Err(Error::LengthMismatch {
            expected: delta_hat.len(),
            found: k_diag.len(),
        });
    }
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    let z = z_quantile(level);
    Ok(delta_hat
        .values()
        .iter()
        .zip(k_diag)
        .map(|(d, v)| {
            let half = z * (v.max(0.0) / n as f64).sqrt();
            Interval {
                lower: d - half,
                upper: d + half,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test with Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain("each sample needs at least 2 values".into()));
    }
    if let Some(index) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if ma == mb {
            WelchTest { t: 0.0, df: f64::INFINITY, p: 1.0 }
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            WelchTest { t, df: f64::INFINITY, p: 0.0 }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest { t, df, p })
}
