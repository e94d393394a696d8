//! Randomized invariants over the public API.

use bilbao_core::acquisition::{expected_improvement, expected_max_gain, InterestSet};
use bilbao_core::algorithms::{BenchmarkConfig, BilbaoConfig, LowerAcquisition};
use bilbao_core::gp::{Dataset, GpModel, KernelConfig, KernelFamily, Standardization};
use bilbao_core::linalg::JITTER_SEQUENCE;
use bilbao_core::metrics::MetricSeries;
use bilbao_core::sampling::{sobol_points, RngStream, ThompsonSampler};
use bilbao_core::testbed::{make_problem, ProblemKind};
use proptest::prelude::*;

const SLACK: f64 = 1e-9;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![Just(KernelFamily::Matern52), Just(KernelFamily::SquaredExponential)]
}

/// A fixed-hyperparameter model on `n` random points in `d` dimensions.
fn model(d: usize, n: usize, family: KernelFamily, ls: f64, amp: f64, noise: f64, seed: u64) -> GpModel {
    let mut s = RngStream::new(seed, 1);
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| s.uniform()).collect()).collect();
    let values: Vec<f64> = points
        .iter()
        .map(|p| p.iter().map(|x| (5.0 * x).sin()).sum::<f64>() + 0.3 * s.standard_normal())
        .collect();
    let ds = Dataset::new(points, values).unwrap();
    let k = KernelConfig::new(family, vec![ls; d], amp, 0.1).unwrap();
    GpModel::with_hyperparameters(&ds, k, noise).unwrap()
}

fn prior_variance(gp: &GpModel) -> f64 {
    let s = gp.standardization().scale;
    gp.kernel().output_scale * s * s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_variance_below_prior(
        d in 1usize..4, n in 1usize..15, fam in family(),
        ls in 0.05f64..2.0, amp in 0.1f64..5.0, noise in 1e-6f64..1e-1, seed: u64,
        x in prop::collection::vec(0.0f64..=1.0, 3),
    ) {
        let gp = model(d, n, fam, ls, amp, noise, seed);
        let (_, var) = gp.posterior(&x[..d]).unwrap();
        prop_assert!(var >= 0.0);
        prop_assert!(var <= prior_variance(&gp) * (1.0 + SLACK) + SLACK, "{var} > {}", prior_variance(&gp));
    }

    #[test]
    fn extra_observation_never_adds_variance(
        d in 1usize..4, n in 1usize..12, fam in family(),
        ls in 0.05f64..2.0, amp in 0.1f64..5.0, noise in 1e-6f64..1e-1, seed: u64,
        x in prop::collection::vec(0.0f64..=1.0, 3),
        new in prop::collection::vec(0.0f64..=1.0, 3),
        y in -3.0f64..3.0,
    ) {
        let gp = model(d, n, fam, ls, amp, noise, seed);
        let (_, before) = gp.posterior(&x[..d]).unwrap();
        let after_gp = gp.condition_on(new[..d].to_vec(), y).unwrap();
        let (_, after) = after_gp.posterior(&x[..d]).unwrap();
        prop_assert!(after <= before + SLACK * prior_variance(&gp).max(1.0), "{after} > {before}");
    }

    #[test]
    fn jitter_comes_from_the_fixed_sequence(
        n in 2usize..20, fam in family(), ls in 0.5f64..10.0, seed: u64,
    ) {
        // near-duplicate inputs with the noise at its floor stress the factorization
        let mut s = RngStream::new(seed, 2);
        let base = s.uniform();
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![base + 1e-9 * s.uniform()]).collect();
        let values: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let ds = Dataset::new(points, values).unwrap();
        let k = KernelConfig::new(fam, vec![ls], 1.0, 0.0).unwrap();
        let gp = GpModel::with_hyperparameters(&ds, k, 0.0).unwrap();
        prop_assert!(gp.noise() >= 1e-6);
        prop_assert!(gp.jitter() == 0.0 || JITTER_SEQUENCE.contains(&gp.jitter()));
    }

    #[test]
    fn standardization_round_trips(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let s = Standardization::from_values(&values);
        prop_assert!(s.scale > 0.0);
        for &v in &values {
            let back = s.invert(s.apply(v));
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(s.scale).max(1.0), "{v} -> {back}");
        }
    }

    #[test]
    fn expected_max_gain_is_nonnegative(
        ab in prop::collection::vec((-5.0f64..5.0, -3.0f64..3.0), 1..40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
        prop_assert!(expected_max_gain(&a, &b) >= 0.0);
    }

    #[test]
    fn expected_max_gain_is_zero_without_slopes(a in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let b = vec![0.0; a.len()];
        prop_assert_eq!(expected_max_gain(&a, &b), 0.0);
    }

    #[test]
    fn ei_is_nonnegative_and_monotone_in_std(mean in -5.0f64..5.0, incumbent in -5.0f64..5.0) {
        let mut last = 0.0;
        for i in 0..100 {
            let std = i as f64 * 0.05;
            let ei = expected_improvement(mean, std, incumbent);
            prop_assert!(ei >= 0.0);
            prop_assert!(ei >= last - 1e-12, "std {std}: {ei} < {last}");
            last = ei;
        }
    }

    #[test]
    fn thompson_index_in_range(k in 1usize..40, seed: u64, draw_seed: u64) {
        let gp = model(2, 6, KernelFamily::Matern52, 0.3, 1.0, 1e-4, seed);
        let mut s = RngStream::new(seed, 3);
        let cands: Vec<Vec<f64>> = (0..k).map(|_| vec![s.uniform(), s.uniform()]).collect();
        let ts = ThompsonSampler::new(&gp, &cands).unwrap();
        let mut stream = RngStream::new(draw_seed, 0);
        for _ in 0..5 {
            let (i, v) = ts.draw_argmax(&mut stream);
            prop_assert!(i < k);
            prop_assert!(v.is_finite());
        }
    }

    #[test]
    fn streams_replay(seed: u64, id: u64) {
        let mut a = RngStream::new(seed, id);
        let mut b = RngStream::new(seed, id);
        for _ in 0..20 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            prop_assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn sobol_points_in_half_open_box(d in 1usize..6, n in 1usize..64, seed: u64) {
        let pts = sobol_points(d, n, &mut RngStream::new(seed, 4));
        prop_assert_eq!(pts.len(), n);
        for p in &pts {
            prop_assert_eq!(p.len(), d);
            prop_assert!(p.iter().all(|x| (0.0..1.0).contains(x)));
        }
    }

    #[test]
    fn unit_native_round_trip(k in 0usize..7, u in prop::collection::vec(0.0f64..=1.0, 4)) {
        let p = make_problem(ProblemKind::ALL[k].name()).unwrap();
        let d = p.d_u() + p.d_l();
        for level in [p.upper_level(), p.lower_level()] {
            let native = level.to_native(&u[..d]);
            let back = level.to_unit(&native);
            for (a, b) in back.iter().zip(&u[..d]) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn objectives_finite_on_unit_box(k in 0usize..7, u in prop::collection::vec(0.0f64..=1.0, 4)) {
        let p = make_problem(ProblemKind::ALL[k].name()).unwrap();
        let (xu, xl) = u.split_at(p.d_u());
        let xl = &xl[..p.d_l()];
        prop_assert!(p.upper_value(xu, xl).is_finite());
        prop_assert!(p.lower_value(xu, xl).is_finite());
    }

    #[test]
    fn uniform_interest_weights_sum_to_one(k in 1usize..50) {
        let set = InterestSet::uniform((0..k).map(|i| vec![i as f64 / 50.0]).collect()).unwrap();
        let total: f64 = set.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(set.weights().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn bilbao_budget_accounting(init in 1usize..30, n in 1usize..200) {
        let mut cfg = BilbaoConfig::two_dimensional(LowerAcquisition::Revi);
        cfg.init_budget_per_gp = init;
        cfg.upper_iters = n;
        cfg.lower_iters = n;
        prop_assert!(cfg.validate().is_ok());
        prop_assert_eq!(cfg.total_evaluations(), 2 * init + 2 * n);
    }

    #[test]
    fn benchmark_budget_accounting(iu in 1usize..10, il in 1usize..10, n in 0usize..30, m in 0usize..30) {
        let cfg = BenchmarkConfig::new(iu, il, n, m);
        prop_assert_eq!(cfg.total_evaluations(), (iu + n) * (il + m + 1));
    }

    #[test]
    fn metric_series_lookup(steps in prop::collection::vec((1usize..5, 0.0f64..10.0), 1..30), probe in 0usize..200) {
        let mut s = MetricSeries::new("m", "p", 0);
        let mut at = 0;
        let mut pushed = Vec::new();
        for (step, v) in steps {
            at += step;
            s.push(at, v).unwrap();
            pushed.push((at, v));
        }
        let expect = pushed.iter().rev().find(|(e, _)| *e <= probe).map(|(_, v)| *v);
        prop_assert_eq!(s.value_at(probe), expect);
    }
}
