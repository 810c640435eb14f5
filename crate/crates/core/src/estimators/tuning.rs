//! Hold-out grid search over the ridge penalty and kernel bandwidths.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{kronecker_solve, krr_fit, KrrModel};
use crate::fdata::Dataset;
use crate::kernels::{
    covariate_cross_gram, input_gram, output_gram, output_lengthscale, treatment_cross_gram, GramMatrix,
    InputKernel,
};
use crate::{Error, Result};

/// Output-side kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    /// `K_Y = I`: every grid point is regressed separately.
    Identity,
    /// Squared-exponential kernel over grid points, coupling nearby times.
    Operator,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneGrid {
    pub lambdas: Vec<f64>,
    /// Multipliers applied to every median-heuristic input bandwidth.
    pub bandwidth_scales: Vec<f64>,
    /// Multipliers applied to the output lengthscale (operator mode only).
    pub output_scales: Vec<f64>,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            bandwidth_scales: vec![0.5, 1.0, 2.0],
            output_scales: vec![0.1, 0.25, 1.0],
            holdout: 0.2,
            seed: 0,
        }
    }
}

/// Selected hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub lambda: f64,
    pub bandwidth_scale: f64,
    /// Output lengthscale, `None` for the identity output kernel.
    pub output_lengthscale: Option<f64>,
    /// Mean squared hold-out error, NaN when the data were too small to split.
    pub holdout_mse: f64,
}

impl Tuned {
    /// Kernels on `ds` at these hyperparameters.
    pub fn kernels(&self, ds: &Dataset) -> Result<(InputKernel, GramMatrix)> {
        let kernel = InputKernel::scaled(ds, self.bandwidth_scale)?;
        let output = match self.output_lengthscale {
            None => GramMatrix::identity(ds.outcome_grid().len()),
            Some(l) => output_gram(ds.outcome_grid(), l)?,
        };
        Ok((kernel, output))
    }

    pub fn fit(&self, ds: &Dataset) -> Result<KrrModel> {
        let (kernel, output) = self.kernels(ds)?;
        krr_fit(ds, &kernel, &output, self.lambda)
    }
}

/// Train/hold-out split. Binary data are split within each arm so both
/// arms stay in the training part.
pub fn holdout_split(ds: &Dataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if ds.is_binary() {
        vec![ds.arm_indices(0), ds.arm_indices(1)]
    } else {
        vec![(0..ds.len()).collect()]
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let k = ((g.len() as f64 * fraction).round() as usize).min(g.len().saturating_sub(2));
        test.extend_from_slice(&g[..k]);
        train.extend_from_slice(&g[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Grid search minimizing the hold-out squared error.
pub fn tune_krr(ds: &Dataset, mode: OutputMode, grid: &TuneGrid) -> Result<Tuned> {
    if grid.lambdas.is_empty() || grid.bandwidth_scales.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    if grid.lambdas.iter().chain(&grid.bandwidth_scales).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("tuning values must be positive".into()));
    }
    let base_out = output_lengthscale(ds.outcome_grid());
    let output_ls: Vec<Option<f64>> = match mode {
        OutputMode::Identity => vec![None],
        OutputMode::Operator if grid.output_scales.is_empty() => vec![Some(base_out)],
        OutputMode::Operator => grid.output_scales.iter().map(|s| Some(s * base_out)).collect(),
    };
    let (train_idx, test_idx) = holdout_split(ds, grid.holdout, grid.seed);
    // Too few samples to split, or a split that loses an arm: no tuning.
    let (train, test) = match (ds.subset(&train_idx), ds.subset(&test_idx)) {
        (Ok(a), Ok(b)) if test_idx.len() >= 2 => (a, b),
        _ => {
            return Ok(Tuned {
                lambda: grid.lambdas[grid.lambdas.len() / 2],
                bandwidth_scale: 1.0,
                output_lengthscale: output_ls[output_ls.len() / 2],
                holdout_mse: f64::NAN,
            })
        }
    };
    let y_train = train.outcome_matrix();
    let y_test = test.outcome_matrix();
    let outputs: Vec<(Option<f64>, GramMatrix)> = output_ls
        .iter()
        .map(|l| {
            let g = match l {
                None => GramMatrix::identity(ds.outcome_grid().len()),
                Some(l) => output_gram(ds.outcome_grid(), *l)?,
            };
            Ok((*l, g))
        })
        .collect::<Result<_>>()?;

    let mut best: Option<Tuned> = None;
    for &scale in &grid.bandwidth_scales {
        let kernel = InputKernel::scaled(&train, scale)?;
        let gram = input_gram(&train, &kernel)?;
        let kx = treatment_cross_gram(&test.treatments(), &train.treatments(), kernel.treatment)?;
        let cross: DMatrix<f64> = kx.component_mul(&covariate_cross_gram(&test, &train, &kernel)?);
        for (ls, k_y) in &outputs {
            for &lambda in &grid.lambdas {
                let alpha = match kronecker_solve(&gram, k_y, &y_train, lambda) {
                    Ok(a) => a,
                    Err(Error::Numerical(_)) => continue,
                    Err(e) => return Err(e),
                };
                let mut pred = &cross * alpha;
                if !k_y.is_identity() {
                    pred *= k_y.entries();
                }
                let mse = (pred - &y_test).norm_squared() / y_test.len() as f64;
                if best.map_or(true, |b| mse < b.holdout_mse) {
                    best = Some(Tuned {
                        lambda,
                        bandwidth_scale: scale,
                        output_lengthscale: *ls,
                        holdout_mse: mse,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("no hyperparameter setting produced a finite fit".into()))
}

/// Tunes on `ds`, then refits on all of it.
pub fn fit_tuned(ds: &Dataset, mode: OutputMode, grid: &TuneGrid) -> Result<(KrrModel, Tuned)> {
    let tuned = tune_krr(ds, mode, grid)?;
    Ok((tuned.fit(ds)?, tuned))
}
