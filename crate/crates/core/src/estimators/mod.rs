//! Kernel ridge regression with Kronecker-structured (operator-valued)
//! kernels, and the kernel estimators of potential-outcome curves, dynamic
//! treatment effects and dose responses.
//!
//! Training outcomes form an `n × T` matrix `Y`. With an input Gram `K` and
//! an output Gram `K_Y`, the coefficients solve
//! `K α K_Y + λ α = Y`, which is `(K ⊗ K_Y + λI) vec(α) = vec(Y)` with
//! row-major vectorization. Predictions at inputs with cross-kernel rows
//! `k_*` are `k_* α K_Y`.

mod iterative;
mod registry;
mod tuning;

pub use iterative::{
    iterative_srvf_estimate, register, IterativeOptions, IterativeResult, RegisterTarget, Registration,
};
pub use registry::{estimate, EstimateOptions, EstimateResult, Estimator};
pub use tuning::{fit_tuned, holdout_split, tune_krr, OutputMode, TuneGrid, Tuned};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fdata::{Curve, Dataset};
use crate::frechet::{dynamic_effect, DynamicEffect, Metric};
use crate::kernels::{covariate_cross_gram, input_gram, treatment_cross_gram, GramMatrix, InputKernel};
use crate::{Error, Result};

/// A fitted kernel ridge regression of outcome curves on
/// (treatment, covariates).
#[derive(Clone, Debug)]
pub struct KrrModel {
    train: Dataset,
    kernel: InputKernel,
    output: GramMatrix,
    lambda: f64,
    alpha: DMatrix<f64>,
    /// Covariate part of the training Gram, `K_V`.
    covariate_gram: DMatrix<f64>,
}

/// Solves `K α K_Y + λ α = Y` through the eigendecompositions of `K` and
/// `K_Y`, never forming the `nT × nT` system.
pub fn kronecker_solve(k: &GramMatrix, k_y: &GramMatrix, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("ridge λ must be positive, got {lambda}")));
    }
    if y.nrows() != k.dim() || y.ncols() != k_y.dim() {
        return Err(Error::LengthMismatch {
            expected: k.dim() * k_y.dim(),
            found: y.len(),
        });
    }
    let (u1, d1) = (k.eigenvectors(), k.eigenvalues());
    let alpha = if k_y.is_identity() {
        let mut yt = u1.transpose() * y;
        for (i, mut row) in yt.row_iter_mut().enumerate() {
            row /= d1[i] + lambda;
        }
        u1 * yt
    } else {
        let (u2, d2) = (k_y.eigenvectors(), k_y.eigenvalues());
        let mut yt = u1.transpose() * y * u2;
        for i in 0..yt.nrows() {
            for j in 0..yt.ncols() {
                yt[(i, j)] /= d1[i] * d2[j] + lambda;
            }
        }
        u1 * yt * u2.transpose()
    };
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("kernel ridge solve produced non-finite coefficients".into()));
    }
    Ok(alpha)
}

pub fn krr_fit(ds: &Dataset, kernel: &InputKernel, output: &GramMatrix, lambda: f64) -> Result<KrrModel> {
    if output.dim() != ds.outcome_grid().len() {
        return Err(Error::LengthMismatch {
            expected: ds.outcome_grid().len(),
            found: output.dim(),
        });
    }
    let gram = input_gram(ds, kernel)?;
    let covariate_gram = covariate_cross_gram(ds, ds, kernel)?;
    let alpha = kronecker_solve(&gram, output, &ds.outcome_matrix(), lambda)?;
    Ok(KrrModel {
        train: ds.clone(),
        kernel: *kernel,
        output: output.clone(),
        lambda,
        alpha,
        covariate_gram,
    })
}

impl KrrModel {
    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &InputKernel {
        &self.kernel
    }

    pub fn output(&self) -> &GramMatrix {
        &self.output
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    fn apply_output(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        if self.output.is_identity() {
            m
        } else {
            m * self.output.entries()
        }
    }

    /// `k_* α K_Y` for rows of cross-kernel values.
    fn predict_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_output(rows * &self.alpha)
    }

    /// Fitted curves at the training inputs, one row per sample.
    pub fn training_predictions(&self) -> DMatrix<f64> {
        let xs = self.train.treatments();
        let kx = treatment_cross_gram(&xs, &xs, self.kernel.treatment).expect("validated kernel");
        self.predict_rows(&kx.component_mul(&self.covariate_gram))
    }

    /// Predictions at the covariates of `ds`, with treatments `treatments`
    /// (one per sample of `ds`).
    pub fn predict(&self, ds: &Dataset, treatments: &[f64]) -> Result<DMatrix<f64>> {
        if treatments.len() != ds.len() {
            return Err(Error::LengthMismatch {
                expected: ds.len(),
                found: treatments.len(),
            });
        }
        let kx = treatment_cross_gram(treatments, &self.train.treatments(), self.kernel.treatment)?;
        let kv = covariate_cross_gram(ds, &self.train, &self.kernel)?;
        Ok(self.predict_rows(&kx.component_mul(&kv)))
    }

    fn treatment_row(&self, x: f64) -> Result<Vec<f64>> {
        self.train
            .treatments()
            .iter()
            .map(|xj| self.kernel.treatment.eval_scalars(x, *xj))
            .collect()
    }

    /// `φ̂(x) = (1/n) Σ_i m̂(x, v_i)`: the average of predictions at
    /// treatment `x` over the training covariates.
    pub fn potential_outcome(&self, x: f64) -> Result<Curve> {
        let kx = self.treatment_row(x)?;
        let n = self.train.len();
        let rows = DMatrix::from_fn(n, n, |i, j| kx[j] * self.covariate_gram[(i, j)]);
        let preds = self.predict_rows(&rows);
        let mean: Vec<f64> = preds.column_iter().map(|c| c.sum() / n as f64).collect();
        Curve::new(self.train.outcome_grid().clone(), mean)
    }

    /// The same functional through the averaged kernel row
    /// `(1/n) Σ_i k((x, v_i), (X_j, V_j))`.
    pub fn potential_outcome_averaged_kernel(&self, x: f64) -> Result<Curve> {
        let kx = self.treatment_row(x)?;
        let n = self.train.len();
        let row = DMatrix::from_fn(1, n, |_, j| {
            kx[j] * self.covariate_gram.column(j).sum() / n as f64
        });
        let pred = self.predict_rows(&row);
        Curve::new(self.train.outcome_grid().clone(), pred.iter().copied().collect())
    }
}

/// `Δ̂ = φ̂(1) − φ̂(0)` with `φ^dATE` under `metric`.
pub fn kernel_dynamic_effect(model: &KrrModel, metric: Metric) -> Result<DynamicEffect> {
    dynamic_effect(&model.potential_outcome(1.0)?, &model.potential_outcome(0.0)?, metric)
}

/// `φ̂^dDS(x) = ‖φ̂(x)‖` per treatment level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoseResponseCurve {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    /// `φ̂(x)` on the outcome grid, one per level.
    pub curves: Vec<Vec<f64>>,
}

pub fn dose_response(model: &KrrModel, levels: &[f64], metric: Metric) -> Result<DoseResponseCurve> {
    let mut values = Vec::with_capacity(levels.len());
    let mut curves = Vec::with_capacity(levels.len());
    for &x in levels {
        let phi = model.potential_outcome(x)?;
        let norm = match metric {
            Metric::Euclidean => phi.l2_norm(),
            Metric::FisherRaoSrsf => crate::elastic::srsf_transform(&phi)?.l2_norm(),
            Metric::FisherRaoSphere => {
                return Err(Error::Domain("the spherical metric has no curve norm".into()))
            }
        };
        values.push(norm);
        curves.push(phi.into_values());
    }
    Ok(DoseResponseCurve {
        levels: levels.to_vec(),
        values,
        curves,
    })
}
