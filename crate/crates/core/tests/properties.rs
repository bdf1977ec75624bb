mod common;

use common::props;
use impact_game_core::matrices::build_matrices;
use impact_game_core::{
    closed_form_equilibrium, critical_theta, predicted_theta_star, BundleParams, CrossImpactMatrix, DecayKernel,
    GameSpec, PredictionMode, StabilityProblem, StrategyArray, TimeGrid,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn check(result: props::Check) {
    if let Err(msg) = result {
        panic!("{msg}");
    }
}

#[test]
fn inventory_conservation() {
    check(props::inventory_conservation(101, 40));
}

#[test]
fn fundamentals_normalized() {
    check(props::fundamentals_normalized(102, 40));
}

#[test]
fn closed_form_matches_kkt() {
    check(props::closed_form_matches_kkt(103, 40));
}

#[test]
fn idle_iff_zero_aggregate() {
    check(props::idle_iff_zero_aggregate(104, 40));
}

#[test]
fn identity_decouples() {
    check(props::identity_decouples(105, 15));
}

#[test]
fn priority_permutations() {
    check(props::priority_permutations(106));
}

#[test]
fn largest_eigenvalue_bound() {
    check(props::largest_eigenvalue_bound(107, 150));
}

#[test]
fn best_response() {
    check(props::best_response(108, 15));
}

#[test]
fn eigenbasis() {
    check(props::eigenbasis(109, 15));
}

fn spec(q: f64, inv: DMatrix<f64>, theta: f64) -> GameSpec {
    let m = inv.nrows();
    let ci = if m == 1 { CrossImpactMatrix::identity(1) } else { CrossImpactMatrix::one_factor(m, q) };
    GameSpec::new(TimeGrid::equidistant(12, 1.0).unwrap(), DecayKernel::exponential(1.0).unwrap(), ci.unwrap(), inv)
        .with_theta(theta)
}

fn strategies(s: &GameSpec) -> StrategyArray {
    closed_form_equilibrium(s).unwrap().strategies
}

#[test]
fn two_agent_threshold_verdicts() {
    // The base-case threshold sits well inside +/- 0.05 of both predictions.
    let grid = TimeGrid::equidistant(50, 1.0).unwrap();
    let kernel = DecayKernel::exponential(1.0).unwrap();
    let q = CrossImpactMatrix::identity(1).unwrap();
    let problem = StabilityProblem::new(grid, kernel, q.clone(), q.matrix().clone(), 2, 0.0, 0.0).unwrap();
    let est = critical_theta(&problem, (0.0, 1.0), 1e-6).unwrap().estimate;
    for mode in [PredictionMode::Theorem, PredictionMode::Conjecture] {
        let pred = predicted_theta_star(&[1.0], 1.0, 2, 0.0, mode);
        assert!((est - pred).abs() <= 0.05, "{mode:?}: estimate {est}, predicted {pred}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn priority_complement(n in 2usize..30, p in 0.0f64..=1.0, rate in 0.1f64..5.0) {
        let grid = TimeGrid::equidistant(n, 1.0).unwrap();
        let kernel = DecayKernel::exponential(rate).unwrap();
        let a = build_matrices(&grid, &kernel, BundleParams { priority: p, ..Default::default() }).unwrap();
        let b = build_matrices(&grid, &kernel, BundleParams { priority: 1.0 - p, ..Default::default() }).unwrap();
        let diff = (&a.gamma_p + b.gamma_p.transpose() - &a.gamma).amax();
        prop_assert!(diff <= 1e-12 * a.gamma.amax());
    }

    #[test]
    fn equilibrium_is_linear_in_inventories(
        x in prop::collection::vec(-3.0f64..3.0, 4),
        y in prop::collection::vec(-3.0f64..3.0, 4),
        a in -2.0f64..2.0,
        q in 0.0f64..0.9,
        theta in 0.0f64..2.0,
    ) {
        let xs = DMatrix::from_column_slice(2, 2, &x);
        let ys = DMatrix::from_column_slice(2, 2, &y);
        let lhs = strategies(&spec(q, &xs * a + &ys, theta));
        let sx = strategies(&spec(q, xs, theta));
        let sy = strategies(&spec(q, ys, theta));
        let rhs: Vec<f64> = sx.as_slice().iter().zip(sy.as_slice()).map(|(u, v)| a * u + v).collect();
        let err = lhs.as_slice().iter().zip(&rhs).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9, "linearity error {err}");
    }

    #[test]
    fn swapping_agents_swaps_strategies(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        theta in 0.0f64..2.0,
    ) {
        let inv = DMatrix::from_row_slice(1, 3, &x);
        let mut swapped = inv.clone();
        swapped.swap_columns(0, 2);
        let a = strategies(&spec(0.0, inv, theta));
        let b = strategies(&spec(0.0, swapped, theta));
        for k in 0..a.times() {
            prop_assert!((a.get(0, 0, k) - b.get(0, 2, k)).abs() <= 1e-10);
            prop_assert!((a.get(0, 1, k) - b.get(0, 1, k)).abs() <= 1e-10);
        }
    }
}
