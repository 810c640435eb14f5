use crate::fdata::{finite_difference, interpolate_uniform, Curve, Grid};
use crate::{Error, Result};

/// Boundary-fixed, strictly increasing reparameterization `γ` of `[0, 1]`,
/// sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpingFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl WarpingFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values[0] != 0.0 || *values.last().unwrap() != 1.0 {
            return Err(Error::Domain("warping function must fix 0 and 1".into()));
        }
        if let Some(i) = values.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "warping function is not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` and pins the endpoints to exactly 0 and 1.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = grid.points().iter().map(|&t| f(t)).collect();
        values[0] = 0.0;
        *values.last_mut().unwrap() = 1.0;
        Self::new(grid.clone(), values)
    }

    pub fn identity(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: grid.points().to_vec(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn as_curve(&self) -> Curve {
        Curve::new(self.grid.clone(), self.values.clone()).expect("warp values are finite")
    }

    /// `γ'` on the grid by second-order finite differences.
    pub fn derivative(&self) -> Result<Vec<f64>> {
        finite_difference(&self.values, self.grid.step())
    }

    /// `sup_t |γ(t) − t|`.
    pub fn deviation_from_identity(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.points())
            .map(|(g, t)| (g - t).abs())
            .fold(0.0, f64::max)
    }

    /// `γ^{-1}` by inverse linear interpolation.
    pub fn inverse(&self) -> WarpingFunction {
        let n = self.values.len();
        let mut out = Vec::with_capacity(n);
        let mut k = 0;
        for &u in self.grid.points() {
            while k + 2 < n && self.values[k + 1] < u {
                k += 1;
            }
            let (g0, g1) = (self.values[k], self.values[k + 1]);
            let (t0, t1) = (self.grid.points()[k], self.grid.points()[k + 1]);
            let frac = ((u - g0) / (g1 - g0)).clamp(0.0, 1.0);
            out.push(t0 + frac * (t1 - t0));
        }
        pin_and_fix(&mut out);
        Self {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// `self ∘ inner`, i.e. `t ↦ self(inner(t))`.
    pub fn compose(&self, inner: &WarpingFunction) -> Result<WarpingFunction> {
        if self.grid != inner.grid {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                found: inner.values.len(),
            });
        }
        let mut out: Vec<f64> = inner
            .values
            .iter()
            .map(|&t| interpolate_uniform(&self.values, t))
            .collect();
        pin_and_fix(&mut out);
        Ok(Self {
            grid: self.grid.clone(),
            values: out,
        })
    }

    /// Weighted pointwise average of warps; convex combinations of
    /// increasing boundary-fixed functions stay in the group.
    pub fn weighted_mean(warps: &[WarpingFunction], weights: &[f64]) -> Result<WarpingFunction> {
        let first = warps
            .first()
            .ok_or_else(|| Error::Domain("no warps to average".into()))?;
        let total: f64 = weights.iter().sum();
        let mut out = vec![0.0; first.values.len()];
        for (w, g) in warps.iter().zip(weights) {
            for (o, v) in out.iter_mut().zip(&w.values) {
                *o += g / total * v;
            }
        }
        pin_and_fix(&mut out);
        Ok(Self {
            grid: first.grid.clone(),
            values: out,
        })
    }
}

/// Pins endpoints and nudges values so the sequence stays strictly increasing
/// after floating-point rounding.
fn pin_and_fix(values: &mut [f64]) {
    let n = values.len();
    values[0] = 0.0;
    values[n - 1] = 1.0;
    for i in 1..n - 1 {
        if values[i] <= values[i - 1] {
            values[i] = values[i - 1] + f64::EPSILON;
        }
    }
    for i in (1..n - 1).rev() {
        if values[i] >= values[i + 1] {
            values[i] = values[i + 1] - f64::EPSILON;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let g = Grid::uniform(4).unwrap();
        assert!(WarpingFunction::new(g.clone(), vec![0.0, 0.2, 0.6, 1.0]).is_ok());
        assert!(WarpingFunction::new(g.clone(), vec![0.0, 0.2, 0.2, 1.0]).is_err());
        assert!(WarpingFunction::new(g.clone(), vec![0.1, 0.2, 0.6, 1.0]).is_err());
        assert!(WarpingFunction::new(g, vec![0.0, 0.2, 0.6, 0.9]).is_err());
    }

    #[test]
    fn inverse_and_compose() {
        let g = Grid::uniform(101).unwrap();
        let gamma = WarpingFunction::from_fn(&g, |t| t * t * 0.5 + 0.5 * t).unwrap();
        let id = gamma.compose(&gamma.inverse()).unwrap();
        assert!(id.deviation_from_identity() < 1e-3);
        assert_eq!(
            WarpingFunction::identity(&g).inverse(),
            WarpingFunction::identity(&g)
        );
    }

    #[test]
    fn mean_of_warps_is_a_warp() {
        let g = Grid::uniform(21).unwrap();
        let a = WarpingFunction::from_fn(&g, |t| t * t).unwrap();
        let b = WarpingFunction::from_fn(&g, |t| t.sqrt()).unwrap();
        let m = WarpingFunction::weighted_mean(&[a, b], &[1.0, 1.0]).unwrap();
        assert!(WarpingFunction::new(g, m.values().to_vec()).is_ok());
    }
}
