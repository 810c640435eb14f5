//! Functional data model: uniform grids on `[0, 1]`, sampled curves and
//! observational datasets.
//!
//! Every curve in a dataset lives on one shared uniform grid. Numerical
//! derivatives use second-order finite differences, interpolation is
//! piecewise linear, and integrals use the trapezoidal rule.

mod dataset;
pub mod io;

pub use dataset::{Dataset, ObservationalSample};
pub use io::{load_dataset, read_curve_table, save_dataset, write_curve_table, DatasetFormat};

use std::sync::Arc;

use crate::{Error, Result};

const GRID_TOL: f64 = 1e-12;

/// Uniform grid `0 = u_1 < ... < u_T = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Arc<[f64]>,
}

impl Grid {
    /// Uniform grid with `len` points.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::GridTooSmall { len, min: 2 });
        }
        let last = (len - 1) as f64;
        let points: Vec<f64> = (0..len).map(|i| i as f64 / last).collect();
        Ok(Self { points: points.into() })
    }

    /// Validates explicit grid points. Only uniform grids are accepted.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let len = points.len();
        if len < 2 {
            return Err(Error::GridTooSmall { len, min: 2 });
        }
        let last = (len - 1) as f64;
        for (i, &p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if (p - i as f64 / last).abs() > GRID_TOL {
                return Err(Error::InvalidGrid(format!(
                    "point {i} = {p} breaks uniform spacing on [0, 1]"
                )));
            }
        }
        Self::uniform(len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid spacing `h = 1 / (T - 1)`.
    pub fn step(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    /// Trapezoidal quadrature weights; they sum to one.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.len()];
        w[0] = 0.5 * h;
        *w.last_mut().unwrap() = 0.5 * h;
        w
    }

    /// Weighted inner product `∫ a b` by the trapezoidal rule.
    pub fn integrate_product(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        let h = self.step();
        let n = a.len();
        let interior: f64 = (1..n - 1).map(|i| a[i] * b[i]).sum();
        h * (interior + 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]))
    }

    /// `L2[0,1]` norm of sampled values.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        self.integrate_product(values, values).max(0.0).sqrt()
    }

    /// Cumulative trapezoidal integral starting at zero.
    pub fn cumulative_integral(&self, values: &[f64]) -> Vec<f64> {
        let h = self.step();
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }
}

/// A real-valued function sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Curve) -> bool {
        self.grid == other.grid
    }

    fn check_grid(&self, other: &Curve) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.len(),
                found: other.len(),
            })
        }
    }

    /// Applies `f` pointwise to both curves. Grids must match.
    pub fn zip_with(&self, other: &Curve, f: impl Fn(f64, f64) -> f64) -> Result<Curve> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Curve::new(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Curve> {
        Curve::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn add(&self, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `L2[0,1]` norm by trapezoidal quadrature.
    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance; grids must match.
    pub fn sup_distance(&self, other: &Curve) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Linear interpolation at an arbitrary `t`, clamped to `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        interpolate_uniform(&self.values, t)
    }

    /// Linear interpolation at many points.
    pub fn eval_many(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| interpolate_uniform(&self.values, t)).collect()
    }

    /// Linear interpolation onto another grid.
    pub fn resample(&self, grid: &Grid) -> Curve {
        Curve {
            grid: grid.clone(),
            values: self.eval_many(grid.points()),
        }
    }

    /// Second-order finite-difference derivative.
    pub fn derivative(&self) -> Result<Curve> {
        let values = finite_difference(&self.values, self.grid.step())?;
        Curve::new(self.grid.clone(), values)
    }

    /// Derivative after a centered moving average of width `window`
    /// (`window <= 1` disables smoothing).
    pub fn derivative_smoothed(&self, window: usize) -> Result<Curve> {
        if window <= 1 {
            return self.derivative();
        }
        let smoothed = moving_average(&self.values, window);
        let values = finite_difference(&smoothed, self.grid.step())?;
        Curve::new(self.grid.clone(), values)
    }
}

/// Central differences inside, one-sided second-order stencils at the ends.
pub(crate) fn finite_difference(values: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::GridTooSmall { len: n, min: 3 });
    }
    let inv = 1.0 / (2.0 * h);
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) * inv;
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) * inv;
    }
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) * inv;
    Ok(out)
}

/// Centered moving average; the window shrinks symmetrically near the ends.
pub(crate) fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let reach = half.min(i).min(n - 1 - i);
            let lo = i - reach;
            let hi = i + reach;
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Linear interpolation of values sampled on the uniform grid of matching length.
pub(crate) fn interpolate_uniform(values: &[f64], t: f64) -> f64 {
    let n = values.len();
    let last = (n - 1) as f64;
    let x = (t.clamp(0.0, 1.0)) * last;
    let i = (x.floor() as usize).min(n - 2);
    let frac = x - i as f64;
    if frac == 0.0 {
        values[i]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}
