use std::f64::consts::PI;

use bilbao_core::metrics::{action_gap_at_optimum, action_gap_full, optimality_gap, probe_set};
use bilbao_core::sampling::RngStream;
use bilbao_core::testbed::{make_problem, true_bilevel_optimum, GroundTruthOracle};

fn native_branin(a: f64, b: f64) -> f64 {
    let t = b - 5.1 / (4.0 * PI * PI) * a * a + 5.0 / PI * a - 6.0;
    t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * a.cos() + 10.0
}

#[test]
fn toy_optimality_gap_is_closed_form() {
    // F(x_u, Φ*(x_u)) = -2 (x_u - 0.3)^2, so the gap at 0.5 is 2 * 0.04
    let p = make_problem("toy_quadratic").unwrap();
    let truth = true_bilevel_optimum(&p, 400);
    let oracle = GroundTruthOracle::new(&p, 2000);
    let analytic = 2.0 * (0.5f64 - 0.3).powi(2);
    assert!((optimality_gap(&oracle, &truth, &[0.5]) - analytic).abs() < 1e-4);
    assert!(optimality_gap(&oracle, &truth, &truth.x_u_star) < 1e-6);
    let mut s = RngStream::new(0, 0);
    for _ in 0..100 {
        assert!(optimality_gap(&oracle, &truth, &[s.uniform()]) >= 0.0);
    }
    assert_eq!(p.evaluations(), (0, 0));
}

#[test]
fn action_gap_matches_direct_summation() {
    let p = make_problem("camel_branin").unwrap();
    let oracle = GroundTruthOracle::new(&p, 2000);
    let probes = probe_set(1, 17);
    let constant: Vec<Vec<f64>> = vec![vec![0.5]; probes.len()];
    let gap = action_gap_full(&oracle, &probes, &constant).unwrap();

    let mut direct = 0.0;
    for x in &probes {
        let a = -5.0 + 15.0 * x[0];
        let star = oracle.phi_star(x)[0];
        direct += (-native_branin(a, 7.5) + native_branin(a, 15.0 * star)).abs();
    }
    assert!((gap - direct).abs() < 1e-8, "{gap} vs {direct}");

    let one = action_gap_full(&oracle, &probes[..1], &constant[..1]).unwrap();
    let x = &probes[0];
    let expect = (p.lower_value(x, &[0.5]) - p.lower_value(x, &oracle.phi_star(x))).abs();
    assert!((one - expect).abs() < 1e-12);
}

#[test]
fn action_gap_at_optimum_matches_direct_evaluation() {
    let p = make_problem("toy_quadratic").unwrap();
    let truth = true_bilevel_optimum(&p, 400);
    assert!(action_gap_at_optimum(&p, &truth, &truth.x_l_star) < 1e-12);
    let wrong = [0.9];
    let direct = (truth.f_star - (-(truth.x_u_star[0] - 0.3).powi(2) - (0.9f64 - 0.3).powi(2))).abs();
    assert!((action_gap_at_optimum(&p, &truth, &wrong) - direct).abs() < 1e-10);
}
