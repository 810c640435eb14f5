//! Pairwise elastic registration by dynamic programming.
//!
//! The search space is the full `T × T` lattice of grid nodes. A path moves
//! from node `(k, l)` to `(k + a, l + b)` with `a, b` coprime and at most 6,
//! and every segment has slope `b/a` in `[1/SLOPE_CAP, SLOPE_CAP]`.
//! Along a segment `γ` is linear and the cost is the discretized
//! `∫ (q1 − (q2 ∘ γ) sqrt(γ'))² + penalty (γ' − 1)²`.

use super::{l2_distance, warp_srsf, SrsfCurve, WarpingFunction};
use crate::fdata::moving_average;
use crate::{Error, Result};

/// Largest allowed warp slope; the smallest is its reciprocal.
pub const SLOPE_CAP: usize = 3;

#[derive(Clone, Copy, Debug)]
pub struct AlignOptions {
    /// Weight of the roughness term `∫ (γ' − 1)²`.
    pub penalty: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { penalty: 0.0 }
    }
}

/// Result of registering `q2` onto `q1`.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub warp: WarpingFunction,
    /// `(q2 ∘ γ*) sqrt(γ*')`.
    pub aligned: SrsfCurve,
    /// `‖q1 − aligned‖` after alignment.
    pub distance: f64,
}

const SMOOTHING_WINDOWS: [usize; 5] = [0, 3, 5, 9, 17];

/// Largest step, in grid cells, of a single lattice move along either axis.
const NEIGHBORHOOD: usize = 6;

/// Lattice moves, diagonal first so that ties resolve toward the identity.
fn moves() -> Vec<(usize, usize)> {
    let mut out = vec![(1, 1)];
    for a in 1..=NEIGHBORHOOD {
        for b in 1..=NEIGHBORHOOD {
            let in_cap = b <= SLOPE_CAP * a && a <= SLOPE_CAP * b;
            if (a, b) != (1, 1) && gcd(a, b) == 1 && in_cap {
                out.push((a, b));
            }
        }
    }
    out.sort_by_key(|&(a, b)| (a.abs_diff(b), a + b));
    out
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn interp_index(values: &[f64], x: f64) -> f64 {
    let i = (x.floor() as usize).min(values.len() - 2);
    let frac = x - i as f64;
    if frac == 0.0 {
        values[i]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}

/// Optimal lattice path from `(0, 0)` to `(T−1, T−1)`, returned as the
/// sampled warp in index units.
fn dp_path(q1: &[f64], q2: &[f64], h: f64, penalty: f64) -> Vec<f64> {
    let n = q1.len();
    let moves = moves();
    // For move (a, b) starting at column l: sqrt(b/a) · q2(l + m b/a), m = 1..=a.
    let tables: Vec<Vec<f64>> = moves
        .iter()
        .map(|&(a, b)| {
            let slope = b as f64 / a as f64;
            let root = slope.sqrt();
            let mut t = vec![0.0; n * a];
            for l in 0..n.saturating_sub(b) {
                for m in 1..=a {
                    t[l * a + m - 1] = root * interp_index(q2, l as f64 + m as f64 * slope);
                }
            }
            t
        })
        .collect();
    let roughness: Vec<f64> = moves
        .iter()
        .map(|&(a, b)| {
            let slope = b as f64 / a as f64;
            penalty * a as f64 * (slope - 1.0) * (slope - 1.0)
        })
        .collect();

    let cap = SLOPE_CAP;
    let last = n - 1;
    let mut cost = vec![f64::INFINITY; n * n];
    let mut back = vec![u8::MAX; n * n];
    cost[0] = 0.0;

    for i in 1..n {
        for j in 1..n {
            // cells off every path with slopes in [1/cap, cap]
            if j > cap * i || i > cap * j || last - j > cap * (last - i) || last - i > cap * (last - j) {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_move = u8::MAX;
            for (mi, &(a, b)) in moves.iter().enumerate() {
                if a > i || b > j {
                    continue;
                }
                let (k, l) = (i - a, j - b);
                let start = cost[k * n + l];
                if !start.is_finite() {
                    continue;
                }
                let row = &tables[mi][l * a..l * a + a];
                let mut edge = roughness[mi];
                for (m, v) in row.iter().enumerate() {
                    let d = q1[k + m + 1] - v;
                    edge += d * d;
                }
                let total = start + h * edge;
                if total < best {
                    best = total;
                    best_move = mi as u8;
                }
            }
            cost[i * n + j] = best;
            back[i * n + j] = best_move;
        }
    }

    let mut nodes = vec![(n - 1, n - 1)];
    let (mut i, mut j) = (n - 1, n - 1);
    while i > 0 || j > 0 {
        let mv = back[i * n + j];
        debug_assert!(mv != u8::MAX, "lattice end is reachable");
        let (a, b) = moves[mv as usize];
        i -= a;
        j -= b;
        nodes.push((i, j));
    }
    nodes.reverse();

    let mut gamma = vec![0.0; n];
    for seg in nodes.windows(2) {
        let ((k, l), (i, j)) = (seg[0], seg[1]);
        let slope = (j - l) as f64 / (i - k) as f64;
        for m in 1..=(i - k) {
            gamma[k + m] = l as f64 + m as f64 * slope;
        }
    }
    gamma
}

/// Registers `q2` onto `q1`: finds `γ*` minimizing
/// `‖q1 − (q2 ∘ γ) sqrt(γ')‖² + penalty ∫ (γ' − 1)²` over lattice paths.
///
/// The identity is returned whenever the optimized warp does not reduce the
/// post-alignment distance, so alignment never increases it.
pub fn align_pair(q1: &SrsfCurve, q2: &SrsfCurve, opts: &AlignOptions) -> Result<Alignment> {
    if q1.grid() != q2.grid() {
        return Err(Error::LengthMismatch {
            expected: q1.len(),
            found: q2.len(),
        });
    }
    if !(opts.penalty >= 0.0) {
        return Err(Error::Domain("alignment penalty must be nonnegative".into()));
    }
    let grid = q1.grid();
    let identity = WarpingFunction::identity(grid);
    let base_distance = l2_distance(grid, q1.values(), q2.values());
    if grid.len() < 3 || base_distance == 0.0 {
        return Ok(Alignment {
            warp: identity,
            aligned: q2.clone(),
            distance: base_distance,
        });
    }

    let h = grid.step();
    let path = dp_path(q1.values(), q2.values(), h, opts.penalty);
    let values: Vec<f64> = path.iter().map(|x| x * h).collect();
    let mut best: Option<(WarpingFunction, SrsfCurve, f64)> = None;
    // The lattice only offers a few slopes; smoothing the path averages
    // them toward intermediate slopes, so keep whichever variant fits best.
    for window in SMOOTHING_WINDOWS {
        let candidate = if window == 0 {
            values.clone()
        } else {
            moving_average(&values, window)
        };
        let Ok(warp) = WarpingFunction::new(grid.clone(), pin(candidate)) else {
            continue;
        };
        let aligned = warp_srsf(q2, &warp)?;
        let distance = l2_distance(grid, q1.values(), aligned.values());
        if best.as_ref().is_none_or(|b| distance < b.2) {
            best = Some((warp, aligned, distance));
        }
    }
    let (warp, aligned, distance) = best.expect("the raw lattice path is a valid warp");
    if distance < base_distance {
        Ok(Alignment {
            warp,
            aligned,
            distance,
        })
    } else {
        Ok(Alignment {
            warp: identity,
            aligned: q2.clone(),
            distance: base_distance,
        })
    }
}

fn pin(mut values: Vec<f64>) -> Vec<f64> {
    let n = values.len();
    values[0] = 0.0;
    values[n - 1] = 1.0;
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::srsf_transform;
    use crate::fdata::{Curve, Grid};

    #[test]
    fn move_set() {
        let m = moves();
        assert_eq!(m[0], (1, 1));
        assert!(m.contains(&(1, 3)) && m.contains(&(5, 6)) && !m.contains(&(1, 4)));
        for (a, b) in m {
            let s = b as f64 / a as f64;
            assert!((1.0 / 3.0..=3.0).contains(&s));
        }
    }

    #[test]
    fn equal_inputs_give_identity() {
        let g = Grid::uniform(50).unwrap();
        let q = srsf_transform(&Curve::from_fn(&g, |t| (6.0 * t).sin()).unwrap()).unwrap();
        let a = align_pair(&q, &q, &AlignOptions::default()).unwrap();
        assert_eq!(a.warp, WarpingFunction::identity(&g));
        assert!(a.distance.abs() < 1e-8);
    }

    #[test]
    fn zero_inputs_give_identity() {
        let g = Grid::uniform(20).unwrap();
        let z = SrsfCurve::zeros(&g);
        let a = align_pair(&z, &z, &AlignOptions::default()).unwrap();
        assert_eq!(a.warp, WarpingFunction::identity(&g));
        assert_eq!(a.distance, 0.0);
    }

    #[test]
    fn dp_tie_break_prefers_diagonal() {
        let q = vec![0.0; 12];
        let path = dp_path(&q, &q, 0.1, 0.0);
        for (i, v) in path.iter().enumerate() {
            assert_eq!(*v, i as f64);
        }
    }

    #[test]
    fn shifted_bump_is_registered() {
        let g = Grid::uniform(101).unwrap();
        let bump = |c: f64| move |t: f64| (-(t - c).powi(2) / (2.0 * 0.08f64.powi(2))).exp();
        let q1 = srsf_transform(&Curve::from_fn(&g, bump(0.45)).unwrap()).unwrap();
        let q2 = srsf_transform(&Curve::from_fn(&g, bump(0.55)).unwrap()).unwrap();
        let before = q1.distance(&q2).unwrap();
        let a = align_pair(&q1, &q2, &AlignOptions::default()).unwrap();
        assert!(a.distance < 0.5 * before, "{} vs {before}", a.distance);
    }

    #[test]
    fn rejects_negative_penalty() {
        let g = Grid::uniform(10).unwrap();
        let z = SrsfCurve::zeros(&g);
        assert!(align_pair(&z, &z, &AlignOptions { penalty: -1.0 }).is_err());
    }

    fn known_warp(g: &Grid) -> WarpingFunction {
        // slope clamp(2t, 0.4, 3), normalized to end at 1
        let raw = |t: f64| if t < 0.2 { 0.4 * t } else { 0.08 + t * t - 0.04 };
        WarpingFunction::from_fn(g, |t| raw(t) / raw(1.0)).unwrap()
    }

    #[test]
    fn recovers_known_warp() {
        let g = Grid::uniform(128).unwrap();
        let f = Curve::from_fn(&g, |t| (5.0 * std::f64::consts::PI * t).sin() + t).unwrap();
        let q1 = srsf_transform(&f).unwrap();
        let gamma0 = known_warp(&g);
        let q2 = warp_srsf(&q1, &gamma0).unwrap();
        let a = align_pair(&q1, &q2, &AlignOptions::default()).unwrap();
        let expected = gamma0.inverse();
        let err = a
            .warp
            .values()
            .iter()
            .zip(expected.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2.0 * g.step(), "sup error {err}");
    }

    #[test]
    fn alignment_never_increases_distance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = Grid::uniform(60).unwrap();
        for _ in 0..20 {
            let coef: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |c: &[f64]| {
                let c = c.to_vec();
                Curve::from_fn(&g, move |t| {
                    c.iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * t).sin())
                        .sum()
                })
                .unwrap()
            };
            let q1 = srsf_transform(&f(&coef[..4])).unwrap();
            let q2 = srsf_transform(&f(&coef[4..])).unwrap();
            let before = q1.distance(&q2).unwrap();
            let a = align_pair(&q1, &q2, &AlignOptions::default()).unwrap();
            assert!(a.distance <= before + 1e-12);
            let pen = align_pair(&q1, &q2, &AlignOptions { penalty: 0.5 }).unwrap();
            assert!(pen.distance <= before + 1e-12);
        }
    }
}
