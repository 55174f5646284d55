use platform_design::allocation::{
    allocation_objective, optimize_allocation, softmax_to_allocation, wald_noncentrality, Allocation, DesignScenario,
    SoftmaxParams,
};
use platform_design::correlation::{test_stat_correlation, SingleStudyArms};
use platform_design::estimation::{estimate_trial, EstimateOptions, PairedEndpointTable};
use platform_design::multiplicity::{bonferroni_threshold, generalized_dunnett_threshold, holm_reject, ErrorMetric};
use platform_design::power::search_minimal_n;
use proptest::prelude::*;

fn single(delta: f64, s: f64, ra: f64, rb: f64) -> DesignScenario {
    DesignScenario::single(delta, s, 1.0, ra, rb).unwrap()
}

/// Best objective over a simplex grid of the given step.
fn grid_best(sc: &DesignScenario, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for i in 1..n {
        for j in 1..n - i {
            let (a, b) = (i as f64 * step, j as f64 * step);
            let alloc = Allocation::new(vec![a, b, 1.0 - a - b]).unwrap();
            best = best.max(allocation_objective(sc, &alloc).unwrap());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_lands_on_simplex(theta in prop::collection::vec(-20.0f64..20.0, 3), shift in -50.0f64..50.0) {
        let a = softmax_to_allocation(&SoftmaxParams { theta: theta.clone() }).unwrap();
        let sum: f64 = a.ratios().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(a.ratios().iter().all(|p| *p > 0.0 && *p < 1.0));
        let shifted: Vec<f64> = theta.iter().map(|t| t + shift).collect();
        let b = softmax_to_allocation(&SoftmaxParams { theta: shifted }).unwrap();
        for (x, y) in a.ratios().iter().zip(b.ratios()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_is_scale_free_and_bounded(
        na in 1.0f64..200.0, nb in 1.0f64..200.0, nab in 1.0f64..200.0,
        ra in 0.0f64..0.6, rb in 0.0f64..0.6, scale in 0.1f64..50.0,
    ) {
        let r1 = test_stat_correlation(&SingleStudyArms::new(na, nb, nab, ra, rb).unwrap()).unwrap();
        let r2 = test_stat_correlation(&SingleStudyArms::new(na * scale, nb * scale, nab * scale, ra, rb).unwrap()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r1));
        prop_assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn fwer_threshold_between_sidak_and_unadjusted(rho in 0.0f64..0.99, alpha in 0.01f64..0.2) {
        let th = generalized_dunnett_threshold(rho, &ErrorMetric::fwer(alpha)).unwrap();
        let bonf = bonferroni_threshold(2, alpha).unwrap();
        prop_assert!(th.p_threshold >= bonf - 1e-9);
        prop_assert!(th.p_threshold <= alpha + 1e-9);
        prop_assert!((th.achieved_level - alpha).abs() < 1e-6);
    }

    #[test]
    fn holm_rejects_at_least_bonferroni(p in prop::collection::vec(0.0f64..0.2, 1..6)) {
        let holm = holm_reject(&p, 0.05).unwrap();
        let level = bonferroni_threshold(p.len(), 0.05).unwrap();
        for (pi, h) in p.iter().zip(&holm) {
            if *pi <= level {
                prop_assert!(*h);
            }
        }
    }

    #[test]
    fn search_finds_exact_minimum(tau in 5.0f64..5000.0, target in 0.5f64..0.95, n0 in 3u64..200) {
        let curve = |n: u64| 1.0 - (-(n as f64) / tau).exp();
        let (n, p, _) = search_minimal_n(|n| Ok(curve(n)), target, n0, 3, 10_000_000).unwrap();
        prop_assert!(p >= target);
        prop_assert!(n == 3 || curve(n - 1) < target);
    }

    #[test]
    fn arm_counts_sum_and_stay_close(a in 0.05f64..0.9, b in 0.05f64..0.9, n in 3u64..5000) {
        prop_assume!(a + b < 0.95);
        let alloc = Allocation::new(vec![a, b, 1.0 - a - b]).unwrap();
        let counts = alloc.arm_counts(n);
        prop_assert_eq!(counts.iter().sum::<u64>(), n);
        for (c, p) in counts.iter().zip(alloc.ratios()) {
            prop_assert!((*c as f64 - p * n as f64).abs() < 1.0);
        }
    }

    #[test]
    fn allocation_ignores_effect_scale(delta in 0.1f64..2.0, s in 0.5f64..2.5, r in 0.0f64..0.8, scale in 0.2f64..5.0) {
        let a = optimize_allocation(&single(delta, s, r, r)).unwrap();
        let b = optimize_allocation(&single(delta * scale, s, r, r)).unwrap();
        for (x, y) in a.ratios().iter().zip(b.ratios()) {
            prop_assert!((x - y).abs() < 1e-4, "{:?} vs {:?}", a.ratios(), b.ratios());
        }
    }

    #[test]
    fn estimates_invariant_to_affine_rescaling(
        values in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 5..20),
        scale in 0.1f64..20.0,
        offset in -100.0f64..100.0,
    ) {
        let build = |f: &dyn Fn(f64) -> f64| {
            PairedEndpointTable::from_records(values.iter().enumerate().flat_map(|(i, (a, b, ab))| {
                let m = format!("m{i}");
                [(m.clone(), "A", f(*a)), (m.clone(), "B", f(*b)), (m, "AB", f(*ab))]
            }))
            .unwrap()
        };
        let opts = EstimateOptions::default();
        let e1 = estimate_trial(&build(&|x| x), "A", "B", "AB", &opts);
        let e2 = estimate_trial(&build(&|x| scale * x + offset), "A", "B", "AB", &opts);
        prop_assume!(e1.is_ok());
        let (e1, e2) = (e1.unwrap(), e2.unwrap());
        for (x, y) in [
            (e1.rho_ab_a, e2.rho_ab_a),
            (e1.rho_ab_b, e2.rho_ab_b),
            (e1.delta_b, e2.delta_b),
            (e1.delta_ab, e2.delta_ab),
        ] {
            prop_assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
        }
        prop_assert_eq!(e1.screened_out, e2.screened_out);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// The optimizer is never beaten by a 0.005 simplex grid.
    #[test]
    fn optimizer_dominates_grid(delta in 0.1f64..1.0, s in 0.5f64..2.5, ra in 0.0f64..0.8, rb in 0.0f64..0.8) {
        let sc = single(delta, s, ra, rb);
        let opt = allocation_objective(&sc, &optimize_allocation(&sc).unwrap()).unwrap();
        let grid = grid_best(&sc, 0.005);
        prop_assert!(opt >= grid * (1.0 - 1e-9), "optimizer {opt} < grid {grid}");
    }
}

#[test]
fn combination_share_falls_with_synergy() {
    for r in [0.0, 0.1, 0.3, 0.5, 0.7] {
        let mut last = f64::INFINITY;
        for i in 0..=18 {
            let s = 0.6 + 0.1 * i as f64;
            let p_ab = optimize_allocation(&single(0.3, s, r, r)).unwrap().p_ab(0);
            assert!(p_ab <= last + 1e-6, "rho {r}: p_AB rose at s = {s}");
            last = p_ab;
        }
    }
}

#[test]
fn optimum_balances_the_two_comparisons() {
    for s in [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3] {
        for r in [0.1, 0.3, 0.5, 0.7] {
            let sc = single(0.3, s, r, r);
            let alloc = optimize_allocation(&sc).unwrap();
            let w = wald_noncentrality(&sc, &alloc, 1.0).unwrap()[0];
            assert!((w.0 - w.1).abs() <= 1e-4 * w.0.max(w.1), "s {s}, rho {r}: {w:?}");
        }
    }
}
