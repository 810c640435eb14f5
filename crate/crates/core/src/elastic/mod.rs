//! Elastic functional data analysis.
//!
//! Curves are mapped to their square-root slope functions (SRSFs)
//! `q = sign(f') sqrt(|f'|)`, under which the Fisher–Rao metric becomes the
//! plain `L2` metric and warping acts isometrically as
//! `(q, γ) ↦ (q ∘ γ) sqrt(γ')`. Pairwise registration is solved by dynamic
//! programming over monotone lattice paths, and groups of curves are
//! registered to their Karcher mean by alternating averaging and alignment.

mod align;
mod karcher;
mod warp;

pub use align::{align_pair, AlignOptions, Alignment, SLOPE_CAP};
pub use karcher::{karcher_mean, karcher_mean_weighted, KarcherMean, KarcherOptions};
pub use warp::WarpingFunction;

use crate::fdata::{interpolate_uniform, Curve, Grid};
use crate::{Error, Result};

/// Square-root slope function of a curve together with the starting value
/// needed to invert it.
#[derive(Clone, Debug, PartialEq)]
pub struct SrsfCurve {
    grid: Grid,
    values: Vec<f64>,
    origin: f64,
}

impl SrsfCurve {
    pub fn new(grid: Grid, values: Vec<f64>, origin: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if !origin.is_finite() {
            return Err(Error::Domain("SRSF origin is not finite".into()));
        }
        Ok(Self {
            grid,
            values,
            origin,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            origin: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&self.values)
    }

    /// `L2` distance between SRSFs, ignoring origins.
    pub fn distance(&self, other: &SrsfCurve) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(l2_distance(&self.grid, &self.values, &other.values))
    }
}

pub(crate) fn l2_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.l2_norm(&diff)
}

fn signed_sqrt(v: f64) -> f64 {
    v.signum() * v.abs().sqrt()
}

/// `q(u_t) = sign(f'(u_t)) sqrt(|f'(u_t)|)`, origin `f(0)`.
pub fn srsf_transform(f: &Curve) -> Result<SrsfCurve> {
    srsf_transform_smoothed(f, 0)
}

/// SRSF after an optional moving-average pre-smoother of width `window`.
pub fn srsf_transform_smoothed(f: &Curve, window: usize) -> Result<SrsfCurve> {
    let df = f.derivative_smoothed(window)?;
    let values = df
        .values()
        .iter()
        .map(|&d| if d == 0.0 { 0.0 } else { signed_sqrt(d) })
        .collect();
    SrsfCurve::new(f.grid().clone(), values, f.values()[0])
}

/// `f(t) = f(0) + ∫_0^t q|q|` by cumulative trapezoidal integration.
pub fn srsf_inverse(q: &SrsfCurve) -> Curve {
    let integrand: Vec<f64> = q.values.iter().map(|v| v * v.abs()).collect();
    let values = q
        .grid
        .cumulative_integral(&integrand)
        .into_iter()
        .map(|v| v + q.origin)
        .collect();
    Curve::new(q.grid.clone(), values).expect("finite SRSF integrates to finite curve")
}

/// Group action `(q ∘ γ) sqrt(γ')`.
pub fn warp_srsf(q: &SrsfCurve, gamma: &WarpingFunction) -> Result<SrsfCurve> {
    if q.grid() != gamma.grid() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            found: gamma.grid().len(),
        });
    }
    let slope = gamma.derivative()?;
    let values = gamma
        .values()
        .iter()
        .zip(&slope)
        .map(|(&g, &d)| interpolate_uniform(&q.values, g) * d.max(0.0).sqrt())
        .collect();
    SrsfCurve::new(q.grid.clone(), values, q.origin)
}

/// Reparameterized curve `f ∘ γ`.
pub fn warp_curve(f: &Curve, gamma: &WarpingFunction) -> Result<Curve> {
    if f.grid() != gamma.grid() {
        return Err(Error::LengthMismatch {
            expected: f.len(),
            found: gamma.grid().len(),
        });
    }
    Curve::new(f.grid().clone(), f.eval_many(gamma.values()))
}

/// Fisher–Rao distance through the SRSF embedding, `‖q_f − q_g‖`, without
/// alignment. This is the distance inside the Fisher–Rao Gaussian kernel.
pub fn fr_distance_srsf(f: &Curve, g: &Curve) -> Result<f64> {
    if !f.same_grid(g) {
        return Err(Error::LengthMismatch {
            expected: f.len(),
            found: g.len(),
        });
    }
    srsf_transform(f)?.distance(&srsf_transform(g)?)
}

/// Spherical Fisher–Rao distance `2 arccos(Σ_j sqrt(p_j r_j))` for
/// nonnegative, density-like vectors.
pub fn fr_distance_sphere(p: &Curve, r: &Curve) -> Result<f64> {
    if p.len() != r.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: r.len(),
        });
    }
    sphere_distance(p.values(), r.values())
}

pub(crate) fn sphere_distance(p: &[f64], r: &[f64]) -> Result<f64> {
    if let Some(v) = p.iter().chain(r).find(|v| **v < 0.0) {
        return Err(Error::Domain(format!(
            "spherical Fisher–Rao distance needs nonnegative entries, found {v}"
        )));
    }
    let inner: f64 = p.iter().zip(r).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(2.0 * inner.clamp(-1.0, 1.0).acos())
}
