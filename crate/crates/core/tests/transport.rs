use pats_core::{solve_transport, CostMatrix, SinkhornConfig, TransportPlan};
use pats_testkit::{lp::transport_optimum, SplitMix64};
use proptest::prelude::*;

struct Instance {
    costs: CostMatrix,
    source: Vec<f64>,
    target: Vec<f64>,
}

fn random_instance(seed: u64, n: usize, m: usize) -> Instance {
    let mut rng = SplitMix64::new(seed);
    let costs = (0..n * m).map(|_| rng.range(-1.0, 1.0)).collect();
    let source = (0..n).map(|_| rng.range(0.1, 2.0)).collect();
    let target = (0..m).map(|_| rng.range(0.1, 2.0)).collect();
    Instance {
        costs: CostMatrix::new(n, m, costs).unwrap(),
        source,
        target,
    }
}

/// Exact optimum of the dustbin-augmented balanced problem.
fn augmented_optimum(inst: &Instance, dustbin_cost: f64) -> f64 {
    let (n, m) = (inst.costs.rows(), inst.costs.cols());
    let cost: Vec<Vec<f64>> = (0..=n)
        .map(|i| {
            (0..=m)
                .map(|j| if i < n && j < m { inst.costs.get(i, j) } else { dustbin_cost })
                .collect()
        })
        .collect();
    let mut rows = inst.source.clone();
    rows.push(inst.target.iter().sum());
    let mut cols = inst.target.clone();
    cols.push(inst.source.iter().sum());
    transport_optimum(&cost, &rows, &cols).unwrap().0
}

fn assert_feasible(plan: &TransportPlan, tol: f64) {
    let (n, m) = (plan.n_sources(), plan.n_targets());
    assert!(plan.entries().iter().all(|&v| v >= 0.0 && v.is_finite()));
    let total_s: f64 = plan.source_areas().iter().sum();
    let total_t: f64 = plan.target_areas().iter().sum();
    for i in 0..=n {
        let want = if i < n { plan.source_areas()[i] } else { total_t };
        let got: f64 = (0..=m).map(|j| plan.get(i, j)).sum();
        assert!((got - want).abs() <= tol, "row {i}: {got} vs {want}");
    }
    for j in 0..=m {
        let want = if j < m { plan.target_areas()[j] } else { total_s };
        let got: f64 = (0..=n).map(|i| plan.get(i, j)).sum();
        assert!((got - want).abs() <= tol, "col {j}: {got} vs {want}");
    }
    assert!(plan.marginal_error() <= tol);
}

#[test]
fn random_3x4_within_two_percent_of_lp() {
    let inst = random_instance(3, 3, 4);
    let cfg = SinkhornConfig {
        max_iters: 5000,
        ..Default::default()
    };
    assert_eq!(cfg.reg, 0.01);
    let plan = solve_transport(&inst.costs, &inst.source, &inst.target, &cfg).unwrap();
    assert!(plan.converged());
    assert_feasible(&plan, 1e-6);
    let lp = augmented_optimum(&inst, 0.0);
    let got = plan.total_cost(&inst.costs, 0.0);
    assert!((got - lp).abs() <= 0.02 * lp.abs(), "sinkhorn {got}, lp {lp}");
}

#[test]
fn small_reg_within_one_percent_of_lp() {
    for seed in 0..20u64 {
        let n = 1 + (seed as usize % 5);
        let m = 1 + ((seed as usize * 7 + 3) % 6);
        let inst = random_instance(100 + seed, n, m);
        let cfg = SinkhornConfig {
            reg: 0.001,
            max_iters: 20_000,
            ..Default::default()
        };
        let plan = solve_transport(&inst.costs, &inst.source, &inst.target, &cfg).unwrap();
        assert_feasible(&plan, 1e-6);
        let lp = augmented_optimum(&inst, 0.0);
        let got = plan.total_cost(&inst.costs, 0.0);
        assert!(
            (got - lp).abs() <= 0.01 * lp.abs().max(1e-9),
            "seed {seed} ({n}x{m}): sinkhorn {got}, lp {lp}"
        );
    }
}

#[test]
fn nonzero_dustbin_cost_matches_lp() {
    let inst = random_instance(9, 4, 3);
    let cfg = SinkhornConfig {
        reg: 0.001,
        max_iters: 20_000,
        dustbin_cost: -0.2,
        ..Default::default()
    };
    let plan = solve_transport(&inst.costs, &inst.source, &inst.target, &cfg).unwrap();
    let lp = augmented_optimum(&inst, -0.2);
    let got = plan.total_cost(&inst.costs, -0.2);
    assert!((got - lp).abs() <= 0.01 * lp.abs(), "sinkhorn {got}, lp {lp}");
}

#[test]
fn error_shrinks_with_more_sweeps() {
    for seed in 0..8u64 {
        let inst = random_instance(200 + seed, 5, 6);
        let run = |k: usize| {
            let cfg = SinkhornConfig {
                max_iters: k,
                marginal_tol: 1e-14,
                ..Default::default()
            };
            solve_transport(&inst.costs, &inst.source, &inst.target, &cfg)
                .unwrap()
                .sinkhorn_error()
        };
        for k in [1, 5, 20, 100] {
            let (a, b) = (run(k), run(2 * k));
            assert!(b <= a + 1e-15, "seed {seed}, k {k}: {a} then {b}");
        }
    }
}

fn instance_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize, usize)> {
    (1usize..6, 1usize..7).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0f64..1.0, n * m),
            prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..3.0], n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..3.0], m),
            Just(n),
            Just(m),
        )
    })
}

proptest! {
    #[test]
    fn plans_are_feasible((costs, a, b, n, m) in instance_strategy(), reg in 0.005f64..0.5) {
        prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
        let costs = CostMatrix::new(n, m, costs).unwrap();
        let cfg = SinkhornConfig { reg, ..Default::default() };
        let plan = solve_transport(&costs, &a, &b, &cfg).unwrap();
        assert_feasible(&plan, 1e-6);
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                prop_assert!(plan.row(i).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn scaling_areas_scales_the_plan(
        (costs, a, b, n, m) in instance_strategy(),
        t in 0.1f64..10.0,
    ) {
        prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
        let costs = CostMatrix::new(n, m, costs).unwrap();
        let cfg = SinkhornConfig { reg: 0.05, max_iters: 10_000, marginal_tol: 1e-13, ..Default::default() };
        let base = solve_transport(&costs, &a, &b, &cfg).unwrap();
        let sa: Vec<f64> = a.iter().map(|v| v * t).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * t).collect();
        let scaled = solve_transport(&costs, &sa, &sb, &SinkhornConfig { marginal_tol: 1e-13 * t, ..cfg }).unwrap();
        prop_assume!(base.converged() && scaled.converged());
        for (p, q) in base.entries().iter().zip(scaled.entries()) {
            let want = p * t;
            prop_assert!((q - want).abs() <= 1e-5 * want.abs().max(1e-9 * t), "{} vs {}", q, want);
        }
    }
}
