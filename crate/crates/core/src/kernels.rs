//! Scalar and curve kernels, bandwidth heuristics and Gram matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elastic::{srsf_transform, SrsfCurve};
use crate::fdata::{Curve, Dataset, Grid};
use crate::{Error, Result};

/// Relative tolerance of the positive-semidefinite check.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `exp(−‖a − b‖² / (2ℓ²))`.
    SquaredExponential { lengthscale: f64 },
    /// `1` when the arguments are equal, else `0`.
    BinaryIndicator,
    /// `exp(−ζ d_FR(f, g)²)` with the SRSF distance.
    FisherRaoGaussian { zeta: f64 },
    /// Always `1`; the limit of a squared-exponential kernel as `ℓ → ∞`.
    Constant,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::SquaredExponential { lengthscale: b } | KernelSpec::FisherRaoGaussian { zeta: b }
                if !(b > 0.0 && b.is_finite()) =>
            {
                Err(Error::Domain(format!("kernel bandwidth must be positive, got {b}")))
            }
            _ => Ok(()),
        }
    }

    /// Kernel between two real vectors. Fisher–Rao kernels are undefined here.
    pub fn eval_vectors(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match *self {
            KernelSpec::SquaredExponential { lengthscale } => Ok(se_kernel(a, b, lengthscale)),
            KernelSpec::BinaryIndicator => Ok(if a == b { 1.0 } else { 0.0 }),
            KernelSpec::Constant => Ok(1.0),
            KernelSpec::FisherRaoGaussian { .. } => Err(Error::Config(
                "the Fisher–Rao kernel applies to curves, not vectors".into(),
            )),
        }
    }

    pub fn eval_scalars(&self, a: f64, b: f64) -> Result<f64> {
        self.eval_vectors(&[a], &[b])
    }
}

pub fn se_kernel(a: &[f64], b: &[f64], lengthscale: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * lengthscale * lengthscale)).exp()
}

pub fn binary_kernel(x: f64, y: f64) -> f64 {
    if x == y {
        1.0
    } else {
        0.0
    }
}

pub fn fr_kernel(f: &Curve, g: &Curve, zeta: f64) -> Result<f64> {
    let d = crate::elastic::fr_distance_srsf(f, g)?;
    Ok((-zeta * d * d).exp())
}

/// Median of pairwise distances; falls back to the mean positive distance
/// when the median is 0, and to 1 when every distance is 0.
pub fn median_of(mut distances: Vec<f64>) -> f64 {
    if distances.is_empty() {
        return 1.0;
    }
    distances.sort_by(f64::total_cmp);
    let m = distances.len();
    let median = if m % 2 == 1 {
        distances[m / 2]
    } else {
        0.5 * (distances[m / 2 - 1] + distances[m / 2])
    };
    if median > 0.0 {
        return median;
    }
    let positive: Vec<f64> = distances.into_iter().filter(|d| *d > 0.0).collect();
    if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    }
}

fn pairwise<T: Sync>(items: &[T], dist: impl Fn(&T, &T) -> f64 + Sync) -> Vec<f64> {
    (0..items.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let dist = &dist;
            (i + 1..items.len()).map(move |j| dist(&items[i], &items[j]))
        })
        .collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Median inter-point Euclidean distance.
pub fn median_heuristic(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Domain("median heuristic needs at least 2 points".into()));
    }
    Ok(median_of(pairwise(points, |a, b| euclidean(a, b))))
}

/// Median inter-curve Fisher–Rao (SRSF) distance.
pub fn median_heuristic_curves(curves: &[Curve]) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::Domain("median heuristic needs at least 2 curves".into()));
    }
    let qs: Vec<SrsfCurve> = curves.iter().map(srsf_transform).collect::<Result<_>>()?;
    Ok(median_of(pairwise(&qs, |a, b| a.distance(b).unwrap_or(f64::NAN))))
}

/// `ζ` matching a squared-exponential kernel with lengthscale `ℓ`:
/// `exp(−ζ d²) = exp(−d² / (2ℓ²))`.
pub fn zeta_for_lengthscale(lengthscale: f64) -> f64 {
    1.0 / (2.0 * lengthscale * lengthscale)
}

/// Symmetric positive-semidefinite kernel matrix with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates symmetry (1e-12) and `min eig ≥ −1e-8 · max(1, max eig)`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Domain("Gram matrix must be square".into()));
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Numerical(format!("Gram matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        let eig = SymmetricEigen::new(entries.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -PSD_TOLERANCE * max.max(1.0) {
            return Err(Error::Numerical(format!(
                "Gram matrix is not positive semidefinite: min eigenvalue {min:e}, max {max:e}"
            )));
        }
        Ok(Self {
            entries,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            eigenvalues: vec![1.0; n],
            eigenvectors: DMatrix::identity(n, n),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_identity(&self) -> bool {
        self.entries == DMatrix::identity(self.dim(), self.dim())
    }
}

fn symmetric_from(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| f(i, j)).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Gram of `fr_kernel` over curves.
pub fn fr_gram(curves: &[Curve], zeta: f64) -> Result<GramMatrix> {
    KernelSpec::FisherRaoGaussian { zeta }.validate()?;
    let qs: Vec<SrsfCurve> = curves.iter().map(srsf_transform).collect::<Result<_>>()?;
    let m = symmetric_from(qs.len(), |i, j| {
        let d = qs[i].distance(&qs[j]).unwrap_or(f64::NAN);
        (-zeta * d * d).exp()
    });
    GramMatrix::new(m)
}

/// Kernel over the covariate part of a sample: baseline covariates and,
/// when present, the covariate curve. The treatment kernel is kept apart
/// so that potential outcomes can be evaluated at new treatment levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputKernel {
    pub treatment: KernelSpec,
    pub covariates: KernelSpec,
    /// Kernel on covariate curves; ignored when the data have none.
    pub covariate_curve: KernelSpec,
}

impl InputKernel {
    /// Median-heuristic defaults: binary kernel for 0/1 treatments and a
    /// squared-exponential kernel otherwise, squared-exponential on the
    /// covariate vectors and Fisher–Rao Gaussian on covariate curves.
    pub fn median_heuristic(ds: &Dataset) -> Result<Self> {
        Self::scaled(ds, 1.0)
    }

    /// As [`InputKernel::median_heuristic`] with every bandwidth multiplied by
    /// `scale`.
    pub fn scaled(ds: &Dataset, scale: f64) -> Result<Self> {
        let treatment = if ds.is_binary() {
            KernelSpec::BinaryIndicator
        } else {
            let xs: Vec<Vec<f64>> = ds.treatments().into_iter().map(|x| vec![x]).collect();
            KernelSpec::SquaredExponential {
                lengthscale: scale * median_heuristic(&xs)?,
            }
        };
        let covariates = if ds.covariate_dim() == 0 {
            KernelSpec::Constant
        } else {
            let vs: Vec<Vec<f64>> = ds.samples().iter().map(|s| s.covariates.clone()).collect();
            KernelSpec::SquaredExponential {
                lengthscale: scale * median_heuristic(&vs)?,
            }
        };
        let covariate_curve = if ds.has_covariate_curves() {
            let curves = covariate_curves(ds);
            KernelSpec::FisherRaoGaussian {
                zeta: zeta_for_lengthscale(scale * median_heuristic_curves(&curves)?),
            }
        } else {
            KernelSpec::Constant
        };
        Ok(Self {
            treatment,
            covariates,
            covariate_curve,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.treatment, KernelSpec::FisherRaoGaussian { .. })
            || matches!(self.covariates, KernelSpec::FisherRaoGaussian { .. })
        {
            return Err(Error::Config(
                "treatment and covariate-vector kernels cannot be Fisher–Rao".into(),
            ));
        }
        self.treatment.validate()?;
        self.covariates.validate()?;
        self.covariate_curve.validate()
    }
}

fn covariate_curves(ds: &Dataset) -> Vec<Curve> {
    ds.samples()
        .iter()
        .filter_map(|s| s.covariate_curve.clone())
        .collect()
}

fn curve_kernel(
    spec: KernelSpec,
    srsfs: (Option<&SrsfCurve>, Option<&SrsfCurve>),
    fa: &Curve,
    fb: &Curve,
) -> f64 {
    match spec {
        KernelSpec::FisherRaoGaussian { zeta } => {
            let d = match srsfs {
                (Some(a), Some(b)) => a.distance(b).unwrap_or(f64::NAN),
                _ => f64::NAN,
            };
            (-zeta * d * d).exp()
        }
        KernelSpec::SquaredExponential { lengthscale } => {
            let d = fa.sub(fb).map(|c| c.l2_norm()).unwrap_or(f64::NAN);
            (-d * d / (2.0 * lengthscale * lengthscale)).exp()
        }
        KernelSpec::BinaryIndicator => binary_kernel_curves(fa, fb),
        KernelSpec::Constant => 1.0,
    }
}

fn binary_kernel_curves(a: &Curve, b: &Curve) -> f64 {
    if a.values() == b.values() {
        1.0
    } else {
        0.0
    }
}

/// Covariate kernel matrix between the samples of `rows` and `cols`:
/// `k_V(v_i, v_j) · k_C(c_i, c_j)`.
pub fn covariate_cross_gram(rows: &Dataset, cols: &Dataset, kernel: &InputKernel) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    let curves = rows.has_covariate_curves() && cols.has_covariate_curves();
    let srsfs = |ds: &Dataset| -> Result<Vec<Option<SrsfCurve>>> {
        ds.samples()
            .iter()
            .map(|s| match (&s.covariate_curve, curves) {
                (Some(c), true) if matches!(kernel.covariate_curve, KernelSpec::FisherRaoGaussian { .. }) => {
                    srsf_transform(c).map(Some)
                }
                _ => Ok(None),
            })
            .collect()
    };
    let (qr, qc) = (srsfs(rows)?, srsfs(cols)?);
    let entries: Vec<Vec<f64>> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let si = &rows.samples()[i];
            (0..cols.len())
                .map(|j| {
                    let sj = &cols.samples()[j];
                    let mut k = kernel
                        .covariates
                        .eval_vectors(&si.covariates, &sj.covariates)
                        .unwrap_or(f64::NAN);
                    if let (true, Some(ci), Some(cj)) =
                        (curves, si.covariate_curve.as_ref(), sj.covariate_curve.as_ref())
                    {
                        let pair = (qr[i].as_ref(), qc[j].as_ref());
                        k *= curve_kernel(kernel.covariate_curve, pair, ci, cj);
                    }
                    k
                })
                .collect()
        })
        .collect();
    let m = DMatrix::from_fn(rows.len(), cols.len(), |i, j| entries[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariate kernel produced non-finite entries".into()));
    }
    Ok(m)
}

/// Treatment kernel matrix `k_X(x_i, x'_j)`.
pub fn treatment_cross_gram(rows: &[f64], cols: &[f64], spec: KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            m[(i, j)] = spec.eval_scalars(*a, *b)?;
        }
    }
    Ok(m)
}

/// Separable input Gram `K_XV = K_X ∘ K_V` (entrywise product).
pub fn input_gram(ds: &Dataset, kernel: &InputKernel) -> Result<GramMatrix> {
    let xs = ds.treatments();
    let kx = treatment_cross_gram(&xs, &xs, kernel.treatment)?;
    let kv = covariate_cross_gram(ds, ds, kernel)?;
    let mut m = kx.component_mul(&kv);
    // enforce exact symmetry against rounding in the product
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    GramMatrix::new(m)
}

/// Squared-exponential kernel over the grid points.
pub fn output_gram(grid: &Grid, lengthscale: f64) -> Result<GramMatrix> {
    KernelSpec::SquaredExponential { lengthscale }.validate()?;
    let p = grid.points();
    let m = symmetric_from(p.len(), |i, j| se_kernel(&[p[i]], &[p[j]], lengthscale));
    GramMatrix::new(m)
}

/// Median inter-point distance of the grid points.
pub fn output_lengthscale(grid: &Grid) -> f64 {
    let pts: Vec<Vec<f64>> = grid.points().iter().map(|p| vec![*p]).collect();
    median_of(pairwise(&pts, |a, b| euclidean(a, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::ObservationalSample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn se_examples() {
        assert_eq!(se_kernel(&[0.3, 1.0], &[0.3, 1.0], 0.7), 1.0);
        assert!((se_kernel(&[0.0], &[1.0], 1.0) - 0.6065306597).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            assert!((se_kernel(&a, &b, 0.4) - se_kernel(&b, &a, 0.4)).abs() <= 1e-15);
        }
    }

    #[test]
    fn binary_examples() {
        assert_eq!(binary_kernel(1.0, 1.0), 1.0);
        assert_eq!(binary_kernel(0.0, 1.0), 0.0);
        let m = treatment_cross_gram(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], KernelSpec::BinaryIndicator)
            .unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(m, expected);
        assert!(GramMatrix::new(m).is_ok());
    }

    #[test]
    fn fr_kernel_examples() {
        let g = Grid::uniform(64).unwrap();
        let f = Curve::from_fn(&g, |t| t).unwrap();
        let c = Curve::constant(&g, 0.2);
        assert_eq!(fr_kernel(&f, &f, 3.0).unwrap(), 1.0);
        assert!((fr_kernel(&f, &c, 1.0).unwrap() - 0.3678794412).abs() < 1e-6);
    }

    #[test]
    fn median_heuristic_examples() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert_eq!(median_heuristic(&pts).unwrap(), 1.0);
        assert_eq!(median_heuristic(&vec![vec![4.0]; 5]).unwrap(), 1.0);
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| vec![3.5 * p[0]]).collect();
        assert!((median_heuristic(&scaled).unwrap() - 3.5).abs() <= 1e-10);
        let mut rev = pts.clone();
        rev.reverse();
        assert_eq!(median_heuristic(&rev).unwrap(), 1.0);
        assert!(median_heuristic(&pts[..1]).is_err());
        // zero median with some positive distances: mean of positives
        assert_eq!(median_of(vec![0.0, 0.0, 0.0, 2.0, 4.0]), 3.0);
    }

    #[test]
    fn median_heuristic_normal_envelope() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.sample(StandardNormal)]).collect();
            let m = median_heuristic(&pts).unwrap();
            assert!((0.8..=1.6).contains(&m), "{m}");
        }
    }

    #[test]
    fn output_gram_examples() {
        let g = Grid::uniform(2).unwrap();
        let k = output_gram(&g, 1.0).unwrap();
        assert!((k.entries()[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        let g = Grid::uniform(20).unwrap();
        let k = output_gram(&g, 0.2).unwrap();
        for i in 0..20 {
            assert_eq!(k.entries()[(i, i)], 1.0);
            for j in 0..20 {
                if i + 1 < 20 && j + 1 < 20 {
                    assert!((k.entries()[(i, j)] - k.entries()[(i + 1, j + 1)]).abs() < 1e-12);
                }
            }
        }
    }

    fn dataset(xs: &[f64], vs: &[f64]) -> Dataset {
        let g = Grid::uniform(4).unwrap();
        Dataset::new(
            xs.iter()
                .zip(vs)
                .enumerate()
                .map(|(i, (x, v))| ObservationalSample {
                    id: i.to_string(),
                    treatment: *x,
                    covariates: vec![*v],
                    covariate_curve: None,
                    outcome: Curve::zeros(&g),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn input_gram_examples() {
        let ds = dataset(&[1.0, 0.0], &[0.3, -1.2]);
        let k = InputKernel {
            treatment: KernelSpec::BinaryIndicator,
            covariates: KernelSpec::Constant,
            covariate_curve: KernelSpec::Constant,
        };
        assert_eq!(input_gram(&ds, &k).unwrap().entries(), &DMatrix::identity(2, 2));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let vs: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let ds = dataset(&xs, &vs);
        let k = InputKernel::median_heuristic(&ds).unwrap();
        let gram = input_gram(&ds, &k).unwrap();
        assert!(gram.min_eigenvalue() >= -PSD_TOLERANCE * gram.max_eigenvalue());
    }

    #[test]
    fn non_psd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GramMatrix::new(m), Err(Error::Numerical(_))));
    }

    #[test]
    fn fr_gram_is_psd() {
        let g = Grid::uniform(50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let curves: Vec<Curve> = (0..30)
            .map(|_| {
                let c: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
                Curve::from_fn(&g, |t| {
                    c.iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * t).sin())
                        .sum()
                })
                .unwrap()
            })
            .collect();
        let zeta = zeta_for_lengthscale(median_heuristic_curves(&curves).unwrap());
        let k = fr_gram(&curves, zeta).unwrap();
        assert!(k.min_eigenvalue() >= -PSD_TOLERANCE * k.max_eigenvalue());
        for i in 0..30 {
            assert_eq!(k.entries()[(i, i)], 1.0);
        }
    }
}
