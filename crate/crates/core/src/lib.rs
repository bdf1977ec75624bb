//! Nash equilibria of multi-agent, multi-asset market impact games with
//! transient impact and quadratic transaction costs.
//!
//! The crate is `no_std` (it needs `alloc`). Dense linear algebra comes from
//! `nalgebra`; elementary functions from `libm`.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod costs;
pub mod cross_impact;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod hetero;
pub mod kernel;
pub mod linalg;
pub mod matrices;
pub mod simulate;
pub mod stability;
pub mod strategy;

pub use costs::{cost_gradient, cost_report, expected_cost, variance, variance_and_mv, CostReport, MarketModel};
pub use cross_impact::{
    analyze_cross_impact, build_cross_impact, CrossImpactFamily, CrossImpactMatrix, SpectralReport,
};
pub use equilibrium::{
    aggregate_flow_is_zero, arbitrageur_is_idle, closed_form_equilibrium, fundamental_solutions, tim_solution,
    Equilibrium, FundamentalSolutions, GameSpec, SolverOptions,
};
pub use error::{GameError, Result};
pub use grid::{make_equidistant_grid, TimeGrid};
pub use hetero::{payoff_matrix, solve_hetero_nash, HeteroGameSpec, KktSystem, PayoffMode, PayoffTable};
pub use kernel::{crowding_factor, DecayKernel, KernelShape};
pub use matrices::{build_matrices, BundleParams, MatrixBundle};
pub use simulate::{post_trade_drift, simulate_price, PricePath, SimulationOptions};
pub use stability::{
    critical_theta, is_unstable_at, oscillation_flags, predicted_theta_star, stability_report, stability_sweep,
    sweep_row, CriticalTheta, OscillationFlags, PredictionMode, StabilityProblem, StabilityReport, SweepBase,
    SweepPoint, SweepRow, ThresholdMethod,
};
pub use strategy::StrategyArray;
