use dti_core::geometry::{knn, nearest_token_fixture, norm_stats, synthetic_vocabulary, Metric};
use dti_core::inversion::{
    dti_step, dti_step_traced, run_inversion, FnOracle, InversionConfig, LossEval, StepRule,
};
use dti_core::linalg::{dot, norm};
use dti_core::prenorm::{
    accumulated_drift_bounds, drift_report, forward_stack, layer_norm, make_stack,
    residual_angle_bounds, rms_norm, NormKind,
};
use dti_core::sphere::{angle, project_to_tangent, retract, slerp, UnitDirection};
use proptest::prelude::*;

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0_f64, d)
}

fn direction(d: usize) -> impl Strategy<Value = UnitDirection<f64>> {
    vector(d)
        .prop_filter("nonzero", |x| norm(x) > 1e-2)
        .prop_map(|x| UnitDirection::normalize(&x).unwrap())
}

fn unit_error(v: &UnitDirection<f64>) -> f64 {
    (norm(v.as_slice()) - 1.0).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sphere_operations_stay_on_the_sphere(
        v in direction(24),
        w in direction(24),
        g in vector(24),
        eta in 1e-4..2.0_f64,
        t in 0.0..=1.0_f64,
    ) {
        prop_assert!(unit_error(&v) <= 1e-9);
        let tangent = project_to_tangent(&v, &g).g;
        prop_assume!(norm(&tangent) > 1e-6);
        prop_assert!(unit_error(&retract(&v, &tangent, eta).unwrap()) <= 1e-9);
        prop_assume!(angle(&v, &w) < std::f64::consts::PI - 1e-6);
        prop_assert!(unit_error(&slerp(&v, &w, t).unwrap()) <= 1e-9);
    }

    #[test]
    fn slerp_walks_the_geodesic(a in direction(12), b in direction(12), t in 0.0..=1.0_f64) {
        let theta = angle(&a, &b);
        prop_assume!(theta > 1e-6 && theta < std::f64::consts::PI - 1e-6);
        let s = slerp(&a, &b, t).unwrap();
        prop_assert!((angle(&a, &s) + angle(&s, &b) - theta).abs() <= 1e-9);
    }

    #[test]
    fn angle_is_symmetric(a in direction(9), b in direction(9)) {
        prop_assert_eq!(angle(&a, &b).to_bits(), angle(&b, &a).to_bits());
    }

    #[test]
    fn norms_are_scale_invariant(x in vector(32)) {
        let mean = x.iter().sum::<f64>() / 32.0;
        let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
        prop_assume!(norm(&centered) > 1e-2);
        let bound = 1e-9 * 32f64.sqrt();
        for s in [1e-3, 1e-1, 1.0, 1e1, 1e3] {
            let scaled: Vec<f64> = x.iter().map(|v| s * v).collect();
            for f in [rms_norm::<f64>, layer_norm::<f64>] {
                let (a, b) = (f(&scaled).unwrap(), f(&x).unwrap());
                let gap: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
                prop_assert!(norm(&gap) <= bound);
            }
        }
        let r = rms_norm(&x).unwrap();
        prop_assert!((norm(&r) - 32f64.sqrt()).abs() <= 1e-12);
        let l = layer_norm(&x).unwrap();
        prop_assert!((norm(&l) - 32f64.sqrt()).abs() <= 1e-12);
        prop_assert!(l.iter().sum::<f64>().abs() / 32.0 <= 1e-12);
    }

    #[test]
    fn drift_bounds_hold_on_random_stacks(
        seed in any::<u64>(),
        depth in 1usize..5,
        rms in any::<bool>(),
        x in vector(16),
        scale in 0.5..200.0_f64,
    ) {
        prop_assume!(norm(&x) > 1e-2);
        let kind = if rms { NormKind::RmsNorm } else { NormKind::LayerNorm };
        let stack = make_stack::<f64>(16, depth, kind, seed).unwrap();
        let x0: Vec<f64> = x.iter().map(|v| scale * v / norm(&x)).collect();
        let states = forward_stack(&stack, &x0).unwrap();
        let report = drift_report(&stack, &x0).unwrap();
        let b = &report.realized_update_norms;
        // the per-block form needs the block's own update to stay below ‖x⁽ℓ⁾‖
        for ((a, bound), (state, bl)) in report
            .per_block_angles
            .iter()
            .zip(residual_angle_bounds(&states))
            .zip(states.iter().zip(b))
        {
            if *bl < norm(state) {
                prop_assert!(*a <= bound + 1e-12);
            }
        }
        if let Some((sum, closed)) = accumulated_drift_bounds(report.x0_norm, b) {
            prop_assert!(report.total_angle <= sum + 1e-12);
            prop_assert!(sum <= closed + 1e-12);
        }
    }

    #[test]
    fn prior_pull_is_monotone(
        v in direction(10),
        mu in direction(10),
        kappa in 1e-6..10.0_f64,
        eta in 1e-3..0.2_f64,
    ) {
        let rule = StepRule { m_star: 1.0, kappa, eta, mu: mu.clone(), normalize_gradient: true };
        let mut v = v;
        for _ in 0..40 {
            if angle(&v, &mu) <= 2.0 * (eta / 2.0).asin() {
                break;
            }
            let before = dot(v.as_slice(), mu.as_slice());
            let next = dti_step(&v, &[0.0; 10], &rule).unwrap();
            prop_assert!(!next.skipped);
            prop_assert!(dot(next.direction.as_slice(), mu.as_slice()) > before);
            v = next.direction;
        }
    }

    #[test]
    fn doubling_m_star_doubles_the_data_gradient(
        v in direction(8),
        g in vector(8),
        m in 0.1..10.0_f64,
    ) {
        let mu = UnitDirection::basis(8, 0).unwrap();
        let rule = StepRule { m_star: m, kappa: 0.0, eta: 0.01, mu, normalize_gradient: true };
        let doubled = StepRule { m_star: 2.0 * m, ..rule.clone() };
        let a = dti_step_traced(&v, &g, &rule).unwrap();
        let b = dti_step_traced(&v, &g, &doubled).unwrap();
        for (x, y) in a.g_data.iter().zip(&b.g_data) {
            prop_assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn cosine_neighbors_ignore_row_rescaling(factors in prop::collection::vec(0.05..20.0_f64, 6)) {
        let table = nearest_token_fixture::<f64>();
        let rescaled = table.rescale_rows(&factors).unwrap();
        let names = |t, metric| -> Vec<String> {
            knn(t, "apple", 5, metric).unwrap().into_iter().map(|n| n.token).collect()
        };
        prop_assert_eq!(names(&table, Metric::Cosine), names(&rescaled, Metric::Cosine));
    }
}

#[test]
fn euclidean_neighbors_follow_row_rescaling() {
    let table = nearest_token_fixture::<f64>();
    let i = table.index_of("apples").unwrap();
    let mut factors = vec![1.0; table.len()];
    factors[i] = 0.25;
    let rescaled = table.rescale_rows(&factors).unwrap();
    let top = |t| {
        knn(t, "apple", 1, Metric::Euclidean).unwrap()[0]
            .token
            .clone()
    };
    assert_eq!(top(&table), "decoy");
    assert_eq!(top(&rescaled), "apples");
}

#[test]
fn norm_stats_mean_matches_a_second_pass() {
    let table = synthetic_vocabulary::<f64>(257, 19, 0.4, 0.05, 8).unwrap();
    let stats = norm_stats(&table, 9).unwrap();
    let mut total = 0.0;
    for row in table.vectors() {
        total += row.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    assert!((stats.mean - total / 257.0).abs() <= 1e-12);
    assert!(stats.min <= stats.mean && stats.mean <= stats.max);
    assert_eq!(stats.histogram.iter().map(|b| b.count).sum::<usize>(), 257);
}

#[test]
fn knn_breaks_ties_by_vocabulary_order() {
    let rows = vec![
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
        vec![0.0, 1.0],
    ];
    let table = dti_core::EmbeddingTable64::new(
        ["q", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
        rows,
    )
    .unwrap();
    for metric in [Metric::Cosine, Metric::Euclidean] {
        let first: Vec<String> = knn(&table, "q", 3, metric)
            .unwrap()
            .into_iter()
            .map(|n| n.token)
            .collect();
        assert_eq!(first, ["b", "c", "d"]);
        let again: Vec<String> = knn(&table, "q", 3, metric)
            .unwrap()
            .into_iter()
            .map(|n| n.token)
            .collect();
        assert_eq!(first, again);
    }
}

#[test]
fn rsgd_reports_the_fixed_norm() {
    let target = [0.3, -1.0, 2.0, 0.5, 0.0, 1.1];
    let mut oracle = FnOracle::new(6, |e: &[f64]| {
        let r: Vec<f64> = e.iter().zip(&target).map(|(a, b)| a - b).collect();
        Ok(LossEval {
            loss: dot(&r, &r),
            grad: r.iter().map(|x| 2.0 * x).collect(),
        })
    });
    let mut cfg = InversionConfig::new(6).with_m_star(0.7);
    cfg.steps = 300;
    let result = run_inversion(&mut oracle, &cfg, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    for record in &result.trajectory {
        assert!((record.embedding_norm / 0.7 - 1.0).abs() <= 1e-6);
    }
}
