//! End-to-end checks on simulated data with known ground truth.

use funcause::classical::{dr_effect, fit_outcome_models, fit_propensity, ipw_effect, PropensityModel};
use funcause::elastic::srsf_inverse;
use funcause::estimators::{estimate, EstimateOptions, Estimator};
use funcause::fdata::{load_dataset, save_dataset, Curve, DatasetFormat, Grid};
use funcause::frechet::{dynamic_effect, frechet_mean, group_potential_outcomes, Metric, Weighting};
use funcause::kernels::{fr_gram, median_heuristic, GramMatrix};
use funcause::simgen::{effect_error, generate, Scenario, ScenarioConfig};
use funcause::PROPENSITY_CLIP;

fn config(scenario: Scenario, n: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        scenario,
        n,
        seed,
        ..ScenarioConfig::default()
    }
}

/// Randomized, phase-free binary data.
fn randomized(n: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        confounding: 0.0,
        shift: 0.0,
        ..config(Scenario::BinaryNonmonotonic, n, seed)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[test]
fn simulated_datasets_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in Scenario::ALL {
        let (ds, _) = generate(&ScenarioConfig {
            t: 30,
            ..config(scenario, 25, 4)
        })
        .unwrap();
        for (name, format) in [("d.csv", DatasetFormat::Csv), ("d.json", DatasetFormat::Json)] {
            let path = dir.path().join(name);
            save_dataset(&ds, &path, format).unwrap();
            let back = load_dataset(&path, format).unwrap();
            assert_eq!(back, ds, "{scenario:?} {name}");
        }
    }
}

#[test]
fn ipw_weighting_reduces_confounding_bias() {
    let mut wins = 0;
    for seed in 0..5 {
        let (ds, truth) = generate(&ScenarioConfig {
            shift: 0.0,
            ..config(Scenario::BinaryNonmonotonic, 200, seed)
        })
        .unwrap();
        let pm = fit_propensity(&ds, 1e-3).unwrap();
        let mae = |w: Weighting| {
            let (f1, f0) = group_potential_outcomes(&ds, Metric::Euclidean, w, Some(&pm)).unwrap();
            let eff = dynamic_effect(&f1.mean, &f0.mean, Metric::Euclidean).unwrap();
            effect_error(&eff, &truth).unwrap().0
        };
        if mae(Weighting::InversePropensity) < mae(Weighting::Uniform) {
            wins += 1;
        }
    }
    assert!(wins >= 4, "weighted won {wins}/5");
}

#[test]
fn effect_error_decreases_with_sample_size() {
    let sizes = [50, 100, 250];
    let medians: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            median(
                (0..5)
                    .map(|seed| {
                        let (ds, truth) = generate(&randomized(n, seed)).unwrap();
                        let (f1, f0) =
                            group_potential_outcomes(&ds, Metric::Euclidean, Weighting::Uniform, None).unwrap();
                        let eff = dynamic_effect(&f1.mean, &f0.mean, Metric::Euclidean).unwrap();
                        effect_error(&eff, &truth).unwrap().0
                    })
                    .collect(),
            )
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn ipw_recovers_effect_on_large_randomized_data() {
    let (ds, truth) = generate(&randomized(1000, 9)).unwrap();
    let pm = fit_propensity(&ds, 1e-3).unwrap();
    let eff = ipw_effect(&ds, &pm).unwrap();
    let sup = eff.delta.sup_distance(&truth.beta_x).unwrap();
    assert!(sup <= 0.15, "sup error {sup}");
}

#[test]
fn dr_error_halves_when_n_quadruples() {
    let mae_at = |n: usize| {
        median(
            (0..7)
                .map(|seed| {
                    let (ds, truth) = generate(&randomized(n, 100 + seed)).unwrap();
                    let d = ds.covariate_dim();
                    let pm = PropensityModel::new(vec![0.0; d + 1], PROPENSITY_CLIP).unwrap();
                    let om = fit_outcome_models(&ds, 1e-6).unwrap();
                    effect_error(&dr_effect(&ds, &pm, &om).unwrap(), &truth).unwrap().0
                })
                .collect(),
        )
    };
    let ratio = mae_at(1000) / mae_at(250);
    assert!((0.35..=0.65).contains(&ratio), "ratio {ratio}");
}

#[test]
fn kernel_estimator_recovers_effect_on_randomized_data() {
    let sups: Vec<f64> = (0..5)
        .map(|seed| {
            let (ds, truth) = generate(&ScenarioConfig {
                t: 50,
                ..randomized(500, 20 + seed)
            })
            .unwrap();
            let res = estimate(&ds, Estimator::Kernel, &EstimateOptions::default()).unwrap();
            res.effect.delta.sup_distance(&truth.beta_x).unwrap()
        })
        .collect();
    let m = median(sups.clone());
    assert!(m <= 0.2, "median sup error {m} from {sups:?}");
}

/// Smooth curves with phase and amplitude variation, sampled at `t` points.
fn smooth_family(t: usize) -> Vec<Curve> {
    let grid = Grid::uniform(t).unwrap();
    (0..6)
        .map(|i| {
            let a = 1.0 + 0.1 * i as f64;
            let p = 0.15 * (i as f64 - 2.5) / 2.5;
            Curve::from_fn(&grid, |s| {
                let u = s + p * s * (1.0 - s);
                a * (std::f64::consts::PI * u).sin() + 0.3 * u
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn fisher_rao_mean_is_stable_under_grid_refinement() {
    let means: Vec<Curve> = [64, 128, 256]
        .iter()
        .map(|&t| {
            let curves = smooth_family(t);
            frechet_mean(&curves, &vec![1.0; curves.len()], Metric::FisherRaoSrsf)
                .unwrap()
                .mean
        })
        .collect();
    let gap = |coarse: &Curve, fine: &Curve| fine.resample(coarse.grid()).sup_distance(coarse).unwrap();
    let d1 = gap(&means[0], &means[1]);
    let d2 = gap(&means[1], &means[2]);
    assert!(d2 < d1, "{d1} -> {d2}");
}

#[test]
fn fr_gram_and_its_schur_products_are_psd() {
    let curves = smooth_family(64);
    let g = fr_gram(&curves, 1.0).unwrap();
    let squared = GramMatrix::new(g.entries().component_mul(g.entries())).unwrap();
    for m in [&g, &squared] {
        assert!(m.min_eigenvalue() >= -1e-8 * m.max_eigenvalue());
    }
}

#[test]
fn median_heuristic_is_scale_covariant_and_permutation_invariant() {
    let pts: Vec<Vec<f64>> = (0..15)
        .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos(), i as f64 / 7.0])
        .collect();
    let h = median_heuristic(&pts).unwrap();
    let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| 3.5 * x).collect()).collect();
    assert!((median_heuristic(&scaled).unwrap() - 3.5 * h).abs() <= 1e-10);
    let mut rev = pts.clone();
    rev.reverse();
    assert!((median_heuristic(&rev).unwrap() - h).abs() <= 1e-12);
}

#[test]
fn srsf_inverse_of_fr_mean_keeps_the_grid() {
    let curves = smooth_family(64);
    let res = frechet_mean(&curves, &vec![1.0; 6], Metric::FisherRaoSrsf).unwrap();
    assert_eq!(res.mean.grid(), curves[0].grid());
    let q = funcause::elastic::srsf_transform(&res.mean).unwrap();
    assert!(srsf_inverse(&q).sup_distance(&res.mean).unwrap() < 1e-2);
}

#[test]
fn every_binary_estimator_runs_on_the_default_scenario() {
    let (ds, truth) = generate(&ScenarioConfig {
        t: 40,
        ..config(Scenario::BinaryNonmonotonic, 60, 1)
    })
    .unwrap();
    for est in Estimator::ALL {
        let res = estimate(&ds, est, &EstimateOptions::default()).unwrap();
        let (mae, _) = effect_error(&res.effect, &truth).unwrap();
        assert!(mae.is_finite() && mae < 1.0, "{est}: {mae}");
    }
}
