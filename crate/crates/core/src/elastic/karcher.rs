use rayon::prelude::*;

use super::{
    align_pair, srsf_inverse, srsf_transform_smoothed, warp_curve, AlignOptions,
    SrsfCurve, WarpingFunction,
};
use crate::fdata::Curve;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct KarcherOptions {
    pub max_iter: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub align: AlignOptions,
    /// Start from a template moved to the average phase of the sample, so
    /// the mean is not tied to the phase of one input.
    pub center: bool,
    /// Moving-average window applied before taking derivatives (0 = off).
    pub smoothing_window: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        Self {
            max_iter: 20,
            tol: 1e-6,
            align: AlignOptions::default(),
            center: true,
            smoothing_window: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KarcherMean {
    pub mean: Curve,
    pub mean_srsf: SrsfCurve,
    /// Warps `γ_i` with `(q_i ∘ γ_i) sqrt(γ_i') ≈ mean_srsf`.
    pub warps: Vec<WarpingFunction>,
    /// Registered curves `f_i ∘ γ_i`.
    pub registered: Vec<Curve>,
    /// Weighted objective `Σ w_i ‖μ − q̃_i‖²` after each iteration,
    /// starting with the unaligned average.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl KarcherMean {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }
}

/// Unweighted Karcher mean under the elastic metric.
pub fn karcher_mean(curves: &[Curve], opts: &KarcherOptions) -> Result<KarcherMean> {
    karcher_mean_weighted(curves, &vec![1.0; curves.len()], opts)
}

fn weighted_average(qs: &[SrsfCurve], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; qs[0].len()];
    for (q, w) in qs.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(q.values()) {
            *o += w * v;
        }
    }
    out
}

fn objective(mean: &[f64], qs: &[SrsfCurve], weights: &[f64]) -> f64 {
    let grid = qs[0].grid();
    qs.iter()
        .zip(weights)
        .map(|(q, w)| {
            let d = super::l2_distance(grid, mean, q.values());
            w * d * d
        })
        .sum()
}

/// Weighted Karcher mean: alternate (a) averaging the aligned SRSFs and
/// (b) re-aligning every SRSF to the current average. A re-alignment is
/// kept only when it lowers that curve's distance, so the objective trace
/// never increases.
pub fn karcher_mean_weighted(
    curves: &[Curve],
    weights: &[f64],
    opts: &KarcherOptions,
) -> Result<KarcherMean> {
    if curves.is_empty() {
        return Err(Error::Domain("Karcher mean of zero curves".into()));
    }
    if weights.len() != curves.len() {
        return Err(Error::LengthMismatch {
            expected: curves.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Weight("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Weight("weights sum to zero".into()));
    }
    let grid = curves[0].grid().clone();
    if curves.iter().any(|c| c.grid() != &grid) {
        return Err(Error::Domain("curves must share one grid".into()));
    }
    let w: Vec<f64> = weights.iter().map(|v| v / total).collect();

    let qs: Vec<SrsfCurve> = curves
        .iter()
        .map(|c| srsf_transform_smoothed(c, opts.smoothing_window))
        .collect::<Result<_>>()?;
    let origin: f64 = qs.iter().zip(&w).map(|(q, w)| w * q.origin()).sum();

    let mut warps = vec![WarpingFunction::identity(&grid); curves.len()];
    let mut aligned = qs.clone();
    // Start from the input closest to the cross-sectional SRSF average.
    let average = weighted_average(&aligned, &w);
    let start = (0..qs.len())
        .filter(|&i| w[i] > 0.0)
        .min_by(|&a, &b| {
            let da = super::l2_distance(&grid, &average, qs[a].values());
            let db = super::l2_distance(&grid, &average, qs[b].values());
            da.total_cmp(&db)
        })
        .expect("some weight is positive");
    let mut mean = qs[start].values().to_vec();
    if opts.center && curves.len() > 1 {
        // Move the starting template to the average phase of the sample.
        let template = SrsfCurve::new(grid.clone(), mean.clone(), origin)?;
        let to_start: Vec<WarpingFunction> = qs
            .par_iter()
            .map(|q| align_pair(&template, q, &opts.align).map(|a| a.warp))
            .collect::<Result<_>>()?;
        let center = WarpingFunction::weighted_mean(&to_start, &w)?.inverse();
        if center.deviation_from_identity() > 0.0 {
            let moved = warp_curve(&srsf_inverse(&template), &center)?;
            mean = srsf_transform_smoothed(&moved, 0)?.values().to_vec();
        }
    }
    let mut trace = vec![objective(&mean, &aligned, &w)];
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let prev = *trace.last().unwrap();
        if prev <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let template = SrsfCurve::new(grid.clone(), mean.clone(), origin)?;
        let updates: Vec<Option<(WarpingFunction, SrsfCurve)>> = qs
            .par_iter()
            .zip(aligned.par_iter())
            .map(|(q, current)| -> Result<_> {
                let cand = align_pair(&template, q, &opts.align)?;
                let old = super::l2_distance(&grid, &mean, current.values());
                Ok((cand.distance < old).then_some((cand.warp, cand.aligned)))
            })
            .collect::<Result<_>>()?;
        for (i, upd) in updates.into_iter().enumerate() {
            if let Some((g, a)) = upd {
                warps[i] = g;
                aligned[i] = a;
            }
        }
        mean = weighted_average(&aligned, &w);
        let obj = objective(&mean, &aligned, &w).min(prev);
        trace.push(obj);
        if prev - obj < opts.tol * prev {
            converged = true;
            break;
        }
    }
    let mean_srsf = SrsfCurve::new(grid.clone(), mean, origin)?;

    let registered = curves
        .iter()
        .zip(&warps)
        .map(|(c, g)| warp_curve(c, g))
        .collect::<Result<_>>()?;

    Ok(KarcherMean {
        mean: srsf_inverse(&mean_srsf),
        mean_srsf,
        warps,
        registered,
        objective_trace: trace,
        converged,
    })
}
