//! Sampling, grid rules and Monte Carlo integration.

use idrm_core::quadrature::{derive_seed, grid_quad, integrate_weighted, mc_integrate, sample_batch, TRule, WeightedPoints};
use idrm_core::Domain;
use ndarray::Array2;
use proptest::prelude::*;

#[test]
fn batches_are_deterministic_per_seed() {
    let dom = Domain::unit_cube(4);
    let a = sample_batch(&dom, 200, 80, 42).unwrap();
    let b = sample_batch(&dom, 200, 80, 42).unwrap();
    let c = sample_batch(&dom, 200, 80, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.interior.points, c.interior.points);
}

#[test]
fn derived_seeds_separate_streams() {
    let s: Vec<u64> = (0..5).map(|k| derive_seed(1, 1000 + k)).collect();
    for i in 0..5 {
        for j in 0..i {
            assert_ne!(s[i], s[j]);
        }
    }
    assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
}

#[test]
fn boundary_points_are_spread_over_faces_by_area() {
    // Box with edges (2, 1, 1): faces normal to axis 0 have area 1, the
    // others area 2, total 10.
    let dom = Domain::new(vec![0.0; 3], vec![2.0, 1.0, 1.0]).unwrap();
    let n = 1000;
    let batch = sample_batch(&dom, 10, n, 5).unwrap();
    let mut counts = [0usize; 6];
    for x in batch.boundary.points.outer_iter() {
        let f = (0..3)
            .find_map(|a| {
                if x[a] == dom.lower()[a] {
                    Some(2 * a)
                } else if x[a] == dom.upper()[a] {
                    Some(2 * a + 1)
                } else {
                    None
                }
            })
            .unwrap();
        counts[f] += 1;
    }
    for (f, &c) in counts.iter().enumerate() {
        let share = dom.face_area(f / 2) / dom.surface();
        let mean = share * n as f64;
        let sd = (n as f64 * share * (1.0 - share)).sqrt();
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "face {f}: {c} vs {mean}");
    }
    assert!((batch.boundary.total_weight() - dom.surface()).abs() < 1e-12);
    assert!((batch.interior.total_weight() - dom.volume()).abs() < 1e-12);
}

#[test]
fn interior_points_are_uniform() {
    let dom = Domain::unit_cube(10);
    let n = 20_000;
    let batch = sample_batch(&dom, n, 1, 3).unwrap();
    let mean: f64 = batch.interior.points.column(0).iter().sum::<f64>() / n as f64;
    let se = (1.0 / 12.0 / n as f64).sqrt();
    assert!((mean - 0.5).abs() <= 3.0 * se, "{mean}");
    assert!(batch.interior.points.iter().all(|&v| v > 0.0 && v < 1.0));
    match &batch.t_rule {
        TRule::PerPoint(ts) => {
            assert_eq!(ts.len(), n);
            assert!(ts.iter().all(|&t| t > 0.0 && t < 1.0));
        }
        other => panic!("unexpected t rule {other:?}"),
    }
}

#[test]
fn zero_sample_counts_are_rejected() {
    let dom = Domain::unit_cube(2);
    assert!(sample_batch(&dom, 0, 10, 1).is_err());
    assert!(sample_batch(&dom, 10, 0, 1).is_err());
}

#[test]
fn grid_rule_integrates_known_functions() {
    let g = grid_quad(&Domain::unit_cube(3), 0.05).unwrap();
    let vol = g.volume_points();
    assert!((vol.total_weight() - 1.0).abs() < 1e-12);
    let ones = vec![1.0; vol.len()];
    assert!((integrate_weighted(&vol, &ones).unwrap().estimate - 1.0).abs() < 1e-12);
    // Trapezoid on x² with h = 0.05: 1/3 + h²/6.
    let sq: Vec<f64> = vol.points.column(0).iter().map(|x| x * x).collect();
    let est = integrate_weighted(&vol, &sq).unwrap().estimate;
    assert!((est - 0.333_750).abs() < 1e-12, "{est}");
    assert!((g.surface_points().total_weight() - 6.0).abs() < 1e-12);
}

#[test]
fn grid_rule_rejects_steps_that_do_not_divide_the_edges() {
    assert!(grid_quad(&Domain::unit_cube(2), 0.3).is_err());
    assert!(grid_quad(&Domain::unit_cube(2), -0.1).is_err());
    assert!(grid_quad(&Domain::unit_cube(2), 0.25).is_ok());
}

#[test]
fn monte_carlo_examples() {
    let dom = Domain::unit_cube(2);
    let batch = sample_batch(&dom, 1, 1, 1).unwrap();
    let one = mc_integrate(&batch, |_| 3.0).unwrap();
    assert_eq!(one.estimate, 3.0);
    assert_eq!(one.std_error, 0.0);

    let big = sample_batch(&dom, 50_000, 1, 2).unwrap();
    let est = mc_integrate(&big, |x| x[0] * x[1]).unwrap();
    assert!((est.estimate - 0.25).abs() <= 3.0 * est.std_error);
    let constant = mc_integrate(&big, |_| 2.0).unwrap();
    assert!((constant.estimate - 2.0).abs() < 1e-9);
    assert!(constant.std_error < 1e-9);
}

#[test]
fn non_finite_densities_are_reported() {
    let batch = sample_batch(&Domain::unit_cube(1), 10, 1, 1).unwrap();
    assert!(mc_integrate(&batch, |_| f64::NAN).is_err());
}

#[test]
fn exclusion_drops_matching_nodes_and_their_t_values() {
    let batch = sample_batch(&Domain::unit_cube(3), 500, 300, 9).unwrap().exclude(|x| x[2] < 0.5 || x[2] == 0.0);
    assert!(batch.interior.points.column(2).iter().all(|&v| v >= 0.5));
    assert!(batch.boundary.points.column(2).iter().all(|&v| v != 0.0));
    match &batch.t_rule {
        TRule::PerPoint(ts) => assert_eq!(ts.len(), batch.interior.len()),
        other => panic!("unexpected t rule {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_integration_is_linear(
        f in prop::collection::vec(-10.0f64..10.0, 1..50),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let n = f.len();
        let g: Vec<f64> = f.iter().map(|v| v.sin()).collect();
        let pts = WeightedPoints { points: Array2::zeros((n, 1)), weights: vec![1.0 / n as f64; n] };
        let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = integrate_weighted(&pts, &comb).unwrap().estimate;
        let rhs = a * integrate_weighted(&pts, &f).unwrap().estimate + b * integrate_weighted(&pts, &g).unwrap().estimate;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn grid_rule_is_exact_for_affine_functions(
        c in prop::collection::vec(-3.0f64..3.0, 4),
        k in prop::sample::select(vec![2usize, 4, 5, 10]),
    ) {
        let dom = Domain::new(vec![-1.0, 0.0, 0.5], vec![1.0, 2.0, 2.5]).unwrap();
        let g = grid_quad(&dom, 2.0 / k as f64).unwrap();
        let vol = g.volume_points();
        let vals: Vec<f64> = vol.points.outer_iter().map(|x| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2]).collect();
        // Centroid (0, 1, 1.5), volume 8.
        let exact = 8.0 * (c[0] + c[2] + 1.5 * c[3]);
        let est = integrate_weighted(&vol, &vals).unwrap().estimate;
        prop_assert!((est - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
    }
}
