mod common;

use bilbao_core::acquisition::{
    expected_improvement, expected_max_gain, kg_fixed_task, maximize_revi_with, revi, revits_select, InterestSet,
    ReviEvaluator, ReviSearch, SliceDiscretization,
};
use bilbao_core::gp::{Dataset, GpModel, KernelConfig, KernelFamily, Standardization};
use bilbao_core::sampling::{sobol_points_seeded, RngStream};
use bilbao_core::Execution;
use common::{gaussian_expectation, mc_max_gain, random_instance, uniform_points, DenseGp};

fn random_gp(stream: &mut RngStream, n: usize) -> (GpModel, DenseGp) {
    let (points, values, kernel, noise) = random_instance(stream, 2, n, KernelFamily::Matern52);
    let ds = Dataset::new(points.clone(), values.clone()).unwrap();
    let gp = GpModel::with_hyperparameters(&ds, kernel.clone(), noise).unwrap();
    (gp, DenseGp::new(kernel, noise, points, &values))
}

fn slice(stream: &mut RngStream, m: usize) -> SliceDiscretization {
    SliceDiscretization::new(uniform_points(1, m, stream)).unwrap()
}

#[test]
fn expected_improvement_matches_quadrature() {
    for i in 0..100 {
        let mean = -2.0 + 4.0 * (i % 10) as f64 / 9.0;
        let std = 0.05 + 2.0 * (i / 10) as f64 / 9.0;
        let incumbent = 0.3 * ((i * 7) % 11) as f64 - 1.5;
        let q = gaussian_expectation(|z| (mean + std * z - incumbent).max(0.0), 12.0, 200_000);
        let ei = expected_improvement(mean, std, incumbent);
        assert!((ei - q).abs() < 1e-6, "mean {mean} std {std} inc {incumbent}: {ei} vs {q}");
    }
    let q = gaussian_expectation(|z| z.max(0.0), 12.0, 200_000);
    assert!((expected_improvement(0.0, 1.0, 0.0) - q).abs() < 1e-6);
}

#[test]
fn knowledge_gradient_matches_monte_carlo_fantasies() {
    let mut stream = RngStream::new(2024, 0);
    let mut mc = RngStream::new(2024, 1);
    for case in 0..25 {
        let (gp, oracle) = random_gp(&mut stream, 6);
        let m = 2 + case % 9;
        let disc = slice(&mut stream, m);
        let x_u = uniform_points(1, 1, &mut stream).remove(0);
        let cand = uniform_points(2, 1, &mut stream).remove(0);
        let kg = kg_fixed_task(&gp, &x_u, &cand, &disc).unwrap();
        assert!(!kg.degenerate);
        let targets: Vec<Vec<f64>> = disc.points().iter().map(|l| vec![x_u[0], l[0]]).collect();
        let (a, b) = oracle.fantasy(&targets, &cand);
        let (mean, se) = mc_max_gain(&a, &b, 1_000_000, &mut mc);
        assert!((kg.value - mean).abs() <= 3.0 * se + 1e-12, "case {case}: {} vs {mean} ± {se}", kg.value);
    }
}

#[test]
fn epigraph_matches_monte_carlo_on_raw_lines() {
    let mut stream = RngStream::new(5, 5);
    for case in 0..25 {
        let m = 2 + case % 9;
        let a: Vec<f64> = (0..m).map(|_| stream.standard_normal()).collect();
        let b: Vec<f64> = (0..m).map(|_| stream.standard_normal()).collect();
        let exact = expected_max_gain(&a, &b);
        let (mean, se) = mc_max_gain(&a, &b, 200_000, &mut stream);
        assert!((exact - mean).abs() <= 3.0 * se + 1e-12, "case {case}");
    }
}

#[test]
fn knowledge_gradient_is_nonnegative() {
    let mut stream = RngStream::new(77, 0);
    let (gp, _) = random_gp(&mut stream, 8);
    for _ in 0..1000 {
        let disc = slice(&mut stream, 6);
        let x_u = uniform_points(1, 1, &mut stream).remove(0);
        let cand = uniform_points(2, 1, &mut stream).remove(0);
        assert!(kg_fixed_task(&gp, &x_u, &cand, &disc).unwrap().value >= -1e-14);
    }
}

#[test]
fn singleton_slice_has_zero_gain() {
    let mut stream = RngStream::new(1, 1);
    let (gp, _) = random_gp(&mut stream, 5);
    let disc = slice(&mut stream, 1);
    assert_eq!(kg_fixed_task(&gp, &[0.3], &[0.5, 0.5], &disc).unwrap().value, 0.0);
}

#[test]
fn uncorrelated_candidate_has_zero_gain() {
    // compactly far away under a tiny squared-exponential lengthscale
    let ds = Dataset::new(vec![vec![0.1, 0.1], vec![0.2, 0.15]], vec![0.0, 1.0]).unwrap();
    let k = KernelConfig::new(KernelFamily::SquaredExponential, vec![0.01, 0.01], 1.0, 0.0).unwrap();
    let gp = GpModel::with_hyperparameters(&ds, k, 1e-6).unwrap();
    let disc = SliceDiscretization::new(vec![vec![0.1], vec![0.15], vec![0.2]]).unwrap();
    let v = kg_fixed_task(&gp, &[0.1], &[0.95, 0.95], &disc).unwrap().value;
    assert_eq!(v, 0.0);
}

#[test]
fn revi_with_one_interest_point_equals_fixed_task_kg() {
    let mut stream = RngStream::new(31, 0);
    for _ in 0..100 {
        let (gp, _) = random_gp(&mut stream, 5);
        let disc = slice(&mut stream, 5);
        let x_u = uniform_points(1, 1, &mut stream).remove(0);
        let cand = uniform_points(2, 1, &mut stream).remove(0);
        let interest = InterestSet::uniform(vec![x_u.clone()]).unwrap();
        let r = revi(&gp, &cand, &interest, &disc).unwrap();
        let k = kg_fixed_task(&gp, &x_u, &cand, &disc).unwrap().value;
        assert!((r - k).abs() <= 1e-12);
    }
}

#[test]
fn uniform_revi_is_the_mean_of_its_terms_and_order_free() {
    let mut stream = RngStream::new(32, 0);
    for _ in 0..20 {
        let (gp, _) = random_gp(&mut stream, 6);
        let disc = slice(&mut stream, 4);
        let ups = uniform_points(1, 3, &mut stream);
        let cand = uniform_points(2, 1, &mut stream).remove(0);
        let kgs: Vec<f64> = ups.iter().map(|u| kg_fixed_task(&gp, u, &cand, &disc).unwrap().value).collect();
        let r = revi(&gp, &cand, &InterestSet::uniform(ups.clone()).unwrap(), &disc).unwrap();
        assert!((r - kgs.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
        let rev: Vec<Vec<f64>> = ups.iter().rev().cloned().collect();
        let r2 = revi(&gp, &cand, &InterestSet::uniform(rev).unwrap(), &disc).unwrap();
        assert!((r - r2).abs() <= 1e-12);
    }
}

#[test]
fn maximized_revi_beats_dense_sweep() {
    let mut stream = RngStream::new(41, 0);
    let (gp, _) = random_gp(&mut stream, 8);
    let disc = slice(&mut stream, 20);
    let interest = InterestSet::uniform(uniform_points(1, 4, &mut stream)).unwrap();
    let choice = maximize_revi_with(&gp, &interest, &disc, &ReviSearch::default(), &mut stream, Execution::default()).unwrap();
    assert!(choice.point.iter().all(|v| (0.0..=1.0).contains(v)));
    let eval = ReviEvaluator::new(&gp, &interest, &disc).unwrap();
    let best_sweep = sobol_points_seeded(2, 4096, 0xface)
        .iter()
        .map(|c| eval.revi(c).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(choice.value >= best_sweep - 1e-6, "{} < {best_sweep}", choice.value);
    assert!((eval.revi(&choice.point).unwrap() - choice.value).abs() < 1e-12);
}

#[test]
fn two_candidate_search_picks_the_larger() {
    let mut stream = RngStream::new(42, 0);
    let (gp, _) = random_gp(&mut stream, 6);
    let disc = slice(&mut stream, 5);
    let interest = InterestSet::uniform(vec![vec![0.4]]).unwrap();
    let search = ReviSearch {
        candidates: 1,
        augment_lower: 1,
        refine_evals: 0,
        ..Default::default()
    };
    let mut s1 = RngStream::new(9, 9);
    let choice = maximize_revi_with(&gp, &interest, &disc, &search, &mut s1, Execution::Sequential).unwrap();
    // replay the two candidates the search saw
    let mut s2 = RngStream::new(9, 9);
    let sweep = bilbao_core::sampling::sobol_points(2, 1, &mut s2).remove(0);
    let lower = bilbao_core::sampling::sobol_points(1, 1, &mut s2).remove(0);
    let aug = vec![0.4, lower[0]];
    let (v1, v2) = (revi(&gp, &sweep, &interest, &disc).unwrap(), revi(&gp, &aug, &interest, &disc).unwrap());
    let expected = if v2 > v1 { aug } else { sweep };
    assert_eq!(choice.point, expected);
}

fn dominant_gp() -> GpModel {
    let pts = vec![vec![0.2, 0.2], vec![0.2, 0.8], vec![0.8, 0.2], vec![0.8, 0.8]];
    let vals = vec![0.0, 10.0, 0.0, 0.0];
    let ds = Dataset::new(pts, vals).unwrap();
    let k = KernelConfig::new(KernelFamily::Matern52, vec![0.2, 0.2], 1.0, 0.0).unwrap();
    let st = Standardization { shift: 0.0, scale: 1.0 };
    GpModel::with_standardization(&ds, k, 1e-6, st).unwrap()
}

#[test]
fn revits_selects_the_dominant_observed_point() {
    let gp = dominant_gp();
    let interest = InterestSet::uniform(vec![vec![0.2], vec![0.8], vec![0.2]]).unwrap();
    let disc = SliceDiscretization::new(vec![vec![0.2], vec![0.8]]).unwrap();
    let mut stream = RngStream::new(1, 2);
    let hits = (0..1000)
        .filter(|_| revits_select(&gp, &interest, &disc, &mut stream).unwrap() == vec![0.2, 0.8])
        .count();
    assert!(hits >= 990, "{hits}");
}

#[test]
fn revits_singleton_and_determinism() {
    let gp = dominant_gp();
    let one = InterestSet::uniform(vec![vec![0.5]]).unwrap();
    let disc1 = SliceDiscretization::new(vec![vec![0.3]]).unwrap();
    assert_eq!(revits_select(&gp, &one, &disc1, &mut RngStream::new(0, 0)).unwrap(), vec![0.5, 0.3]);
    let interest = InterestSet::uniform(vec![vec![0.1], vec![0.6]]).unwrap();
    let disc = SliceDiscretization::new(vec![vec![0.1], vec![0.4], vec![0.9]]).unwrap();
    let a = revits_select(&gp, &interest, &disc, &mut RngStream::new(4, 4)).unwrap();
    let b = revits_select(&gp, &interest, &disc, &mut RngStream::new(4, 4)).unwrap();
    assert_eq!(a, b);
}
