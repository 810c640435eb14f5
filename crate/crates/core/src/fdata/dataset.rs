use nalgebra::DMatrix;

use super::{Curve, Grid};
use crate::{Error, Result};

/// One unit: treatment, baseline covariates, optional covariate curve and
/// the outcome curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationalSample {
    pub id: String,
    pub treatment: f64,
    pub covariates: Vec<f64>,
    pub covariate_curve: Option<Curve>,
    pub outcome: Curve,
}

/// A validated collection of samples sharing one outcome grid (and one
/// covariate-curve grid when covariate curves are present).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<ObservationalSample>,
    outcome_grid: Grid,
    covariate_grid: Option<Grid>,
}

impl Dataset {
    pub fn new(samples: Vec<ObservationalSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Schema {
                row: samples.len(),
                message: format!("dataset needs at least 2 samples, got {}", samples.len()),
            });
        }
        let outcome_grid = samples[0].outcome.grid().clone();
        let covariate_grid = samples[0].covariate_curve.as_ref().map(|c| c.grid().clone());
        let dim = samples[0].covariates.len();
        for (row, s) in samples.iter().enumerate() {
            if !s.treatment.is_finite() {
                return Err(Error::Schema {
                    row,
                    message: "treatment is not finite".into(),
                });
            }
            if s.outcome.grid() != &outcome_grid {
                return Err(Error::Schema {
                    row,
                    message: format!(
                        "outcome has {} points, expected {}",
                        s.outcome.len(),
                        outcome_grid.len()
                    ),
                });
            }
            if s.covariates.len() != dim {
                return Err(Error::Schema {
                    row,
                    message: format!("covariate dimension {} != {}", s.covariates.len(), dim),
                });
            }
            if let Some(index) = s.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::Schema {
                    row,
                    message: format!("covariate {index} is not finite"),
                });
            }
            match (&covariate_grid, &s.covariate_curve) {
                (None, None) => {}
                (Some(g), Some(c)) if c.grid() == g => {}
                _ => {
                    return Err(Error::Schema {
                        row,
                        message: "inconsistent covariate curve".into(),
                    })
                }
            }
        }
        let ds = Self {
            samples,
            outcome_grid,
            covariate_grid,
        };
        if ds.is_binary() {
            for arm in [0u8, 1u8] {
                if ds.arm_indices(arm).is_empty() {
                    return Err(Error::ArmEmpty { arm });
                }
            }
        }
        Ok(ds)
    }

    pub fn samples(&self) -> &[ObservationalSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<ObservationalSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn outcome_grid(&self) -> &Grid {
        &self.outcome_grid
    }

    pub fn covariate_grid(&self) -> Option<&Grid> {
        self.covariate_grid.as_ref()
    }

    pub fn covariate_dim(&self) -> usize {
        self.samples[0].covariates.len()
    }

    pub fn has_covariate_curves(&self) -> bool {
        self.covariate_grid.is_some()
    }

    pub fn treatments(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.treatment).collect()
    }

    /// True when every treatment is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.treatment == 0.0 || s.treatment == 1.0)
    }

    pub fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::NotBinary)
        }
    }

    /// Indices of samples in arm `arm` (0 or 1).
    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        let target = f64::from(arm);
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.treatment == target)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn outcomes(&self) -> Vec<&Curve> {
        self.samples.iter().map(|s| &s.outcome).collect()
    }

    /// Outcomes as an `n × T` matrix, one row per sample.
    pub fn outcome_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let t = self.outcome_grid.len();
        DMatrix::from_fn(n, t, |i, j| self.samples[i].outcome.values()[j])
    }

    /// Covariates as an `n × d` matrix.
    pub fn covariate_matrix(&self) -> DMatrix<f64> {
        let d = self.covariate_dim();
        DMatrix::from_fn(self.len(), d, |i, j| self.samples[i].covariates[j])
    }

    /// Subset by sample indices, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// Replaces outcome curves, keeping everything else.
    pub fn with_outcomes(&self, outcomes: Vec<Curve>) -> Result<Dataset> {
        if outcomes.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: outcomes.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(outcomes)
            .map(|(s, y)| ObservationalSample {
                outcome: y,
                ..s.clone()
            })
            .collect();
        Dataset::new(samples)
    }

    /// Replaces covariate curves, keeping everything else.
    pub fn with_covariate_curves(&self, curves: Vec<Curve>) -> Result<Dataset> {
        if curves.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: curves.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(curves)
            .map(|(s, c)| ObservationalSample {
                covariate_curve: Some(c),
                ..s.clone()
            })
            .collect();
        Dataset::new(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, x: f64, t: usize) -> ObservationalSample {
        let g = Grid::uniform(t).unwrap();
        ObservationalSample {
            id: id.into(),
            treatment: x,
            covariates: vec![x],
            covariate_curve: None,
            outcome: Curve::constant(&g, x),
        }
    }

    #[test]
    fn rejects_single_sample() {
        assert!(Dataset::new(vec![sample("a", 1.0, 5)]).is_err());
    }

    #[test]
    fn rejects_grid_mismatch_with_row() {
        let err = Dataset::new(vec![sample("a", 1.0, 5), sample("b", 0.0, 4)]).unwrap_err();
        assert!(matches!(err, Error::Schema { row: 1, .. }));
    }

    #[test]
    fn rejects_empty_arm() {
        let err = Dataset::new(vec![sample("a", 1.0, 5), sample("b", 1.0, 5)]).unwrap_err();
        assert!(matches!(err, Error::ArmEmpty { arm: 0 }));
    }

    #[test]
    fn continuous_treatment_is_not_binary() {
        let ds = Dataset::new(vec![sample("a", 0.5, 5), sample("b", 1.0, 5)]).unwrap();
        assert!(!ds.is_binary());
        assert!(matches!(ds.require_binary(), Err(Error::NotBinary)));
    }

    #[test]
    fn arms_and_matrices() {
        let ds = Dataset::new(vec![
            sample("a", 1.0, 3),
            sample("b", 0.0, 3),
            sample("c", 1.0, 3),
        ])
        .unwrap();
        assert_eq!(ds.arm_indices(1), vec![0, 2]);
        assert_eq!(ds.arm_indices(0), vec![1]);
        let y = ds.outcome_matrix();
        assert_eq!(y.shape(), (3, 3));
        assert_eq!(y[(2, 1)], 1.0);
    }
}
