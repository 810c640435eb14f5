//! Named estimators behind one entry point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::iterative::{iterative_srvf_estimate, register_dataset, IterativeOptions};
use super::tuning::{fit_tuned, OutputMode, TuneGrid, Tuned};
use super::{dose_response, kernel_dynamic_effect, DoseResponseCurve, KrrModel};
use crate::classical::{dr_effect, fit_outcome_models, fit_propensity, ipw_effect};
use crate::elastic::KarcherOptions;
use crate::fdata::Dataset;
use crate::frechet::{dynamic_effect, group_potential_outcomes, DynamicEffect, Metric, Weighting};
use crate::kernels::{output_gram, output_lengthscale, GramMatrix, InputKernel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Ipw,
    Dr,
    FrechetEuclid,
    FrechetFr,
    Kernel,
    OperatorKernel,
    SrvfOperatorKernel,
    IterativeSrvf,
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::Ipw,
        Estimator::Dr,
        Estimator::FrechetEuclid,
        Estimator::FrechetFr,
        Estimator::Kernel,
        Estimator::OperatorKernel,
        Estimator::SrvfOperatorKernel,
        Estimator::IterativeSrvf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Ipw => "ipw",
            Estimator::Dr => "dr",
            Estimator::FrechetEuclid => "frechet-euclid",
            Estimator::FrechetFr => "frechet-fr",
            Estimator::Kernel => "kernel",
            Estimator::OperatorKernel => "operator-kernel",
            Estimator::SrvfOperatorKernel => "srvf-operator-kernel",
            Estimator::IterativeSrvf => "iterative-srvf",
        }
    }

    /// Kernel estimators handle continuous treatments; the rest need 0/1.
    pub fn is_kernel(&self) -> bool {
        matches!(
            self,
            Estimator::Kernel
                | Estimator::OperatorKernel
                | Estimator::SrvfOperatorKernel
                | Estimator::IterativeSrvf
        )
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .iter()
            .find(|e| e.name() == s)
            .copied()
            .ok_or_else(|| {
                let known: Vec<&str> = Estimator::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown estimator '{s}' (known: {})", known.join(", ")))
            })
    }
}

#[derive(Clone, Debug)]
pub struct EstimateOptions {
    /// Group weighting for the Fréchet estimators.
    pub weighting: Weighting,
    /// L2 penalty of the logistic propensity model.
    pub propensity_l2: f64,
    /// Ridge penalty of the per-arm outcome regressions.
    pub outcome_ridge: f64,
    pub tune: TuneGrid,
    /// Skip tuning and use this λ with median-heuristic bandwidths.
    pub lambda: Option<f64>,
    pub karcher: KarcherOptions,
    pub max_rounds: usize,
    pub tol: f64,
    /// Treatment levels for the dose response (kernel estimators).
    pub dose_levels: Vec<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Uniform,
            propensity_l2: 1e-3,
            outcome_ridge: 1e-6,
            tune: TuneGrid::default(),
            lambda: None,
            karcher: KarcherOptions::default(),
            max_rounds: 10,
            tol: 1e-4,
            dose_levels: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub estimator: Estimator,
    pub effect: DynamicEffect,
    pub dose: Option<DoseResponseCurve>,
    pub tuned: Option<Tuned>,
    /// Registration rounds and convergence, for the iterative estimator.
    pub rounds: Option<usize>,
    pub converged: Option<bool>,
    pub trace: Vec<f64>,
}

fn fit_kernel(ds: &Dataset, mode: OutputMode, opts: &EstimateOptions) -> Result<(KrrModel, Tuned)> {
    match opts.lambda {
        None => fit_tuned(ds, mode, &opts.tune),
        Some(lambda) => {
            let kernel = InputKernel::median_heuristic(ds)?;
            let (output, ls) = match mode {
                OutputMode::Identity => (GramMatrix::identity(ds.outcome_grid().len()), None),
                OutputMode::Operator => {
                    let l = output_lengthscale(ds.outcome_grid());
                    (output_gram(ds.outcome_grid(), l)?, Some(l))
                }
            };
            let model = super::krr_fit(ds, &kernel, &output, lambda)?;
            let tuned = Tuned {
                lambda,
                bandwidth_scale: 1.0,
                output_lengthscale: ls,
                holdout_mse: f64::NAN,
            };
            Ok((model, tuned))
        }
    }
}

/// Runs `estimator` on `ds`.
pub fn estimate(ds: &Dataset, estimator: Estimator, opts: &EstimateOptions) -> Result<EstimateResult> {
    if !estimator.is_kernel() {
        ds.require_binary()?;
    }
    let simple = |effect| EstimateResult {
        estimator,
        effect,
        dose: None,
        tuned: None,
        rounds: None,
        converged: None,
        trace: Vec::new(),
    };
    let propensity = || -> Result<_> {
        match opts.weighting {
            Weighting::Uniform => Ok(None),
            Weighting::InversePropensity => fit_propensity(ds, opts.propensity_l2).map(Some),
        }
    };
    match estimator {
        Estimator::Ipw => Ok(simple(ipw_effect(ds, &fit_propensity(ds, opts.propensity_l2)?)?)),
        Estimator::Dr => {
            let pm = fit_propensity(ds, opts.propensity_l2)?;
            let om = fit_outcome_models(ds, opts.outcome_ridge)?;
            Ok(simple(dr_effect(ds, &pm, &om)?))
        }
        Estimator::FrechetEuclid | Estimator::FrechetFr => {
            let metric = if estimator == Estimator::FrechetEuclid {
                Metric::Euclidean
            } else {
                Metric::FisherRaoSrsf
            };
            let pm = propensity()?;
            let (f1, f0) = group_potential_outcomes(ds, metric, opts.weighting, pm.as_ref())?;
            Ok(simple(dynamic_effect(&f1.mean, &f0.mean, metric)?))
        }
        Estimator::Kernel | Estimator::OperatorKernel | Estimator::SrvfOperatorKernel => {
            let mode = if estimator == Estimator::Kernel {
                OutputMode::Identity
            } else {
                OutputMode::Operator
            };
            let data = if estimator == Estimator::SrvfOperatorKernel {
                register_dataset(ds, &opts.karcher)?.0
            } else {
                ds.clone()
            };
            let (model, tuned) = fit_kernel(&data, mode, opts)?;
            kernel_result(estimator, &model, tuned, opts)
        }
        Estimator::IterativeSrvf => {
            let iopts = IterativeOptions {
                max_rounds: opts.max_rounds,
                tol: opts.tol,
                karcher: opts.karcher,
                tune: match opts.lambda {
                    None => opts.tune.clone(),
                    Some(l) => TuneGrid {
                        lambdas: vec![l],
                        bandwidth_scales: vec![1.0],
                        output_scales: vec![1.0],
                        ..opts.tune.clone()
                    },
                },
                output: OutputMode::Operator,
            };
            let it = iterative_srvf_estimate(ds, &iopts)?;
            let mut res = kernel_result(estimator, &it.model, it.tuned, opts)?;
            res.rounds = Some(it.rounds);
            res.converged = Some(it.converged);
            res.trace = it.trace;
            Ok(res)
        }
    }
}

fn kernel_result(estimator: Estimator, model: &KrrModel, tuned: Tuned, opts: &EstimateOptions) -> Result<EstimateResult> {
    let effect = kernel_dynamic_effect(model, Metric::Euclidean)?;
    let dose = if opts.dose_levels.is_empty() {
        None
    } else {
        Some(dose_response(model, &opts.dose_levels, Metric::Euclidean)?)
    };
    Ok(EstimateResult {
        estimator,
        effect,
        dose,
        tuned: Some(tuned),
        rounds: None,
        converged: None,
        trace: Vec::new(),
    })
}
