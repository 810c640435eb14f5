//! Iterative elastic registration of covariate and outcome curves
//! alternating with operator-kernel refits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tuning::{tune_krr, OutputMode, TuneGrid, Tuned};
use super::KrrModel;
use crate::elastic::{
    align_pair, karcher_mean, srsf_transform_smoothed, warp_curve, warp_srsf, KarcherOptions, SrsfCurve,
    WarpingFunction,
};
use crate::fdata::{Curve, Dataset};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct IterativeOptions {
    pub max_rounds: usize,
    /// Stop once the RMS change of the training predictions drops below this.
    pub tol: f64,
    pub karcher: KarcherOptions,
    pub tune: TuneGrid,
    pub output: OutputMode,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            tol: 1e-4,
            karcher: KarcherOptions::default(),
            tune: TuneGrid::default(),
            output: OutputMode::Operator,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IterativeResult {
    pub model: KrrModel,
    pub tuned: Tuned,
    pub registered: Dataset,
    /// Warps taking each original outcome to its registered version.
    pub outcome_warps: Vec<WarpingFunction>,
    /// The same for covariate curves, when present.
    pub covariate_warps: Option<Vec<WarpingFunction>>,
    /// RMS change of the training predictions after each round.
    pub trace: Vec<f64>,
    /// Rounds run (the initial unregistered fit is round 0).
    pub rounds: usize,
    pub converged: bool,
}

/// Registers `curves` to their Karcher mean, separately within each group.
/// Returns the registered curves and the warps relative to the input.
pub(crate) fn register_groups(
    curves: &[Curve],
    groups: &[Vec<usize>],
    opts: &KarcherOptions,
) -> Result<(Vec<Curve>, Vec<WarpingFunction>)> {
    let grid = curves[0].grid().clone();
    let mut registered = curves.to_vec();
    let mut warps = vec![WarpingFunction::identity(&grid); curves.len()];
    let results: Vec<_> = groups
        .par_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let members: Vec<Curve> = g.iter().map(|&i| curves[i].clone()).collect();
            karcher_mean(&members, opts).map(|k| (g, k))
        })
        .collect::<Result<_>>()?;
    for (g, k) in results {
        for (pos, &i) in g.iter().enumerate() {
            registered[i] = k.registered[pos].clone();
            warps[i] = k.warps[pos].clone();
        }
    }
    Ok((registered, warps))
}

/// Outcome groups: treatment arms for binary data, everything otherwise.
pub(crate) fn outcome_groups(ds: &Dataset) -> Vec<Vec<usize>> {
    if ds.is_binary() {
        vec![ds.arm_indices(0), ds.arm_indices(1)]
    } else {
        vec![(0..ds.len()).collect()]
    }
}

/// Which curve families [`register`] aligns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegisterTarget {
    Outcomes,
    Covariates,
    Both,
}

impl RegisterTarget {
    pub fn name(&self) -> &'static str {
        match self {
            RegisterTarget::Outcomes => "outcomes",
            RegisterTarget::Covariates => "covariates",
            RegisterTarget::Both => "both",
        }
    }
}

impl std::str::FromStr for RegisterTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outcomes" => Ok(RegisterTarget::Outcomes),
            "covariates" => Ok(RegisterTarget::Covariates),
            "both" => Ok(RegisterTarget::Both),
            other => Err(Error::Config(format!(
                "unknown register target '{other}' (expected outcomes, covariates or both)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Registration {
    pub dataset: Dataset,
    pub outcome_warps: Option<Vec<WarpingFunction>>,
    pub covariate_warps: Option<Vec<WarpingFunction>>,
}

/// Karcher-mean registration of outcomes (per treatment arm when binary,
/// pooled otherwise) and/or covariate curves (pooled).
pub fn register(ds: &Dataset, target: RegisterTarget, opts: &KarcherOptions) -> Result<Registration> {
    let mut out = ds.clone();
    let mut outcome_warps = None;
    let mut covariate_warps = None;
    if matches!(target, RegisterTarget::Outcomes | RegisterTarget::Both) {
        let outcomes: Vec<Curve> = ds.outcomes().into_iter().cloned().collect();
        let (reg_y, warps_y) = register_groups(&outcomes, &outcome_groups(ds), opts)?;
        out = out.with_outcomes(reg_y)?;
        outcome_warps = Some(warps_y);
    }
    if matches!(target, RegisterTarget::Covariates | RegisterTarget::Both) {
        match ds.has_covariate_curves().then(|| covariate_curves(ds)) {
            Some(covs) => {
                let (reg_v, w) = register_groups(&covs, &[(0..ds.len()).collect()], opts)?;
                out = out.with_covariate_curves(reg_v)?;
                covariate_warps = Some(w);
            }
            None if target == RegisterTarget::Covariates => {
                return Err(Error::Domain("dataset has no covariate curves".into()))
            }
            None => {}
        }
    }
    Ok(Registration {
        dataset: out,
        outcome_warps,
        covariate_warps,
    })
}

/// One registration pass over outcomes (by group) and covariate curves
/// (pooled).
pub(crate) fn register_dataset(
    ds: &Dataset,
    opts: &KarcherOptions,
) -> Result<(Dataset, Vec<WarpingFunction>, Option<Vec<WarpingFunction>>)> {
    let r = register(ds, RegisterTarget::Both, opts)?;
    Ok((r.dataset, r.outcome_warps.expect("outcomes registered"), r.covariate_warps))
}

fn rms_change(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// Registration state of one family of curves (outcomes or covariate
/// curves): the originals, their groups, the current template per group and
/// the current warps relative to the originals.
struct Family {
    originals: Vec<Curve>,
    srsfs: Vec<SrsfCurve>,
    groups: Vec<Vec<usize>>,
    templates: Vec<SrsfCurve>,
    aligned: Vec<SrsfCurve>,
    warps: Vec<WarpingFunction>,
    registered: Vec<Curve>,
}

impl Family {
    /// First round: a full Karcher mean per group.
    fn start(originals: Vec<Curve>, groups: Vec<Vec<usize>>, opts: &KarcherOptions) -> Result<Self> {
        let srsfs: Vec<SrsfCurve> = originals
            .iter()
            .map(|c| srsf_transform_smoothed(c, opts.smoothing_window))
            .collect::<Result<_>>()?;
        let grid = originals[0].grid().clone();
        let n = originals.len();
        let mut fam = Family {
            warps: vec![WarpingFunction::identity(&grid); n],
            registered: originals.clone(),
            aligned: srsfs.clone(),
            templates: Vec::new(),
            originals,
            srsfs,
            groups: groups.into_iter().filter(|g| !g.is_empty()).collect(),
        };
        let results: Vec<_> = fam
            .groups
            .par_iter()
            .map(|g| {
                let members: Vec<Curve> = g.iter().map(|&i| fam.originals[i].clone()).collect();
                karcher_mean(&members, opts)
            })
            .collect::<Result<_>>()?;
        for (g, k) in fam.groups.clone().iter().zip(results) {
            for (pos, &i) in g.iter().enumerate() {
                fam.warps[i] = k.warps[pos].clone();
                fam.registered[i] = k.registered[pos].clone();
                fam.aligned[i] = warp_srsf(&fam.srsfs[i], &k.warps[pos])?;
            }
            fam.templates.push(k.mean_srsf);
        }
        Ok(fam)
    }

    /// Later rounds: move each template to the average of its aligned
    /// SRSFs and re-align the original curves to it, keeping a new warp only
    /// when it brings the curve closer to the template.
    fn step(&mut self, opts: &KarcherOptions) -> Result<()> {
        for (gi, g) in self.groups.iter().enumerate() {
            let grid = self.templates[gi].grid().clone();
            let mut avg = vec![0.0; grid.len()];
            for &i in g {
                for (a, v) in avg.iter_mut().zip(self.aligned[i].values()) {
                    *a += v / g.len() as f64;
                }
            }
            self.templates[gi] = SrsfCurve::new(grid, avg, self.templates[gi].origin())?;
        }
        let owner: Vec<usize> = {
            let mut o = vec![0; self.originals.len()];
            for (gi, g) in self.groups.iter().enumerate() {
                for &i in g {
                    o[i] = gi;
                }
            }
            o
        };
        let updates: Vec<_> = (0..self.originals.len())
            .into_par_iter()
            .map(|i| -> Result<_> {
                let template = &self.templates[owner[i]];
                let a = align_pair(template, &self.srsfs[i], &opts.align)?;
                let old = template.distance(&self.aligned[i])?;
                Ok((a.distance < old).then_some(a))
            })
            .collect::<Result<_>>()?;
        for (i, a) in updates.into_iter().enumerate() {
            if let Some(a) = a {
                self.registered[i] = warp_curve(&self.originals[i], &a.warp)?;
                self.aligned[i] = a.aligned;
                self.warps[i] = a.warp;
            }
        }
        Ok(())
    }
}

fn covariate_curves(ds: &Dataset) -> Vec<Curve> {
    ds.samples()
        .iter()
        .map(|s| s.covariate_curve.clone().expect("covariate curves present"))
        .collect()
}

/// Alternates Karcher registration of covariate curves and outcomes with
/// operator-kernel refits until the fitted training predictions settle.
///
/// The first round registers each family of curves to its Karcher mean.
/// Later rounds move every template to the average of the aligned SRSFs and
/// re-align the original curves to it, so warps are replaced rather than
/// compounded. Hyperparameters are tuned once, after the first
/// registration; the bandwidth multipliers are reapplied to the registered
/// data in later rounds.
pub fn iterative_srvf_estimate(ds: &Dataset, opts: &IterativeOptions) -> Result<IterativeResult> {
    if opts.max_rounds == 0 {
        return Err(Error::Config("max_rounds must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let (m0, _) = super::fit_tuned(ds, opts.output, &opts.tune)?;
    let mut prev = m0.training_predictions();

    let outcomes: Vec<Curve> = ds.outcomes().into_iter().cloned().collect();
    let mut fam_y: Option<Family> = None;
    let mut fam_v: Option<Family> = None;
    let mut tuned: Option<Tuned> = None;
    let mut trace = Vec::new();
    let mut best: Option<(f64, IterativeResult)> = None;

    for round in 1..=opts.max_rounds {
        match fam_y.as_mut() {
            None => {
                fam_y = Some(Family::start(outcomes.clone(), outcome_groups(ds), &opts.karcher)?);
                if ds.has_covariate_curves() {
                    let all = vec![(0..ds.len()).collect()];
                    fam_v = Some(Family::start(covariate_curves(ds), all, &opts.karcher)?);
                }
            }
            Some(fy) => {
                fy.step(&opts.karcher)?;
                if let Some(fv) = fam_v.as_mut() {
                    fv.step(&opts.karcher)?;
                }
            }
        }
        let fy = fam_y.as_ref().expect("initialized");
        let mut current = ds.with_outcomes(fy.registered.clone())?;
        if let Some(fv) = fam_v.as_ref() {
            current = current.with_covariate_curves(fv.registered.clone())?;
        }
        let t = match tuned {
            Some(t) => t,
            None => *tuned.insert(tune_krr(&current, opts.output, &opts.tune)?),
        };
        let model = t.fit(&current)?;
        let preds = model.training_predictions();
        let change = rms_change(&preds, &prev);
        if !change.is_finite() {
            return Err(Error::Numerical("non-finite change between rounds".into()));
        }
        trace.push(change);
        prev = preds;
        let converged = change < opts.tol;
        if best.as_ref().map_or(true, |(c, _)| change <= *c) || converged {
            best = Some((
                change,
                IterativeResult {
                    model,
                    tuned: t,
                    registered: current,
                    outcome_warps: fy.warps.clone(),
                    covariate_warps: fam_v.as_ref().map(|f| f.warps.clone()),
                    trace: Vec::new(),
                    rounds: round,
                    converged,
                },
            ));
        }
        if converged {
            break;
        }
    }
    let (_, mut result) = best.expect("at least one round");
    result.rounds = trace.len();
    result.trace = trace;
    Ok(result)
}
