//! Expected execution costs, revenue variance and the mean-variance
//! functional for deterministic strategies.
//!
//! Costs are impact costs: the constant `X_j S_0` is dropped.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::equilibrium::GameSpec;
use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::kernel::DecayKernel;
use crate::matrices::kernel_matrices;
use crate::strategy::StrategyArray;

/// Everything that determines the expected cost of a strategy profile.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub grid: TimeGrid,
    /// Unscaled decay kernel.
    pub kernel: DecayKernel,
    pub cross_impact: DMatrix<f64>,
    /// Transaction cost of each agent.
    pub theta: Vec<f64>,
    /// Impact scale of each agent's trades.
    pub scale: Vec<f64>,
    /// `priority[(j, l)]` is the probability that agent `l` trades before
    /// agent `j` at a shared time. The diagonal is ignored.
    pub priority: DMatrix<f64>,
}

impl MarketModel {
    /// Model of a game with identical agents and fair priority.
    pub fn homogeneous(spec: &GameSpec) -> Self {
        let j = spec.agents();
        let s = spec.crowding();
        Self {
            grid: spec.grid.clone(),
            kernel: spec.kernel,
            cross_impact: spec.cross_impact.matrix().clone(),
            theta: alloc::vec![spec.theta; j],
            scale: alloc::vec![s; j],
            priority: DMatrix::from_element(j, j, 0.5),
        }
    }

    pub fn agents(&self) -> usize {
        self.theta.len()
    }

    pub fn assets(&self) -> usize {
        self.cross_impact.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.agents();
        if self.scale.len() != j || self.priority.nrows() != j || self.priority.ncols() != j {
            return Err(invalid!(
                "inconsistent agent counts: {} costs, {} scales, {}x{} priority matrix",
                j,
                self.scale.len(),
                self.priority.nrows(),
                self.priority.ncols()
            ));
        }
        if !self.cross_impact.is_square() {
            return Err(invalid!("cross-impact matrix must be square"));
        }
        Ok(())
    }

    fn check(&self, xi: &StrategyArray) -> Result<()> {
        self.validate()?;
        if xi.assets() != self.assets() || xi.agents() != self.agents() || xi.times() != self.grid.len() {
            return Err(invalid!(
                "strategy array is {}x{}x{} but the model has {} assets, {} agents and {} times",
                xi.assets(),
                xi.agents(),
                xi.times(),
                self.assets(),
                self.agents(),
                self.grid.len()
            ));
        }
        Ok(())
    }
}

/// `sum_{i,a} Q_ia * (A B C^T)_ia`.
fn weighted_form(q: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    q.component_mul(&(a * b * c.transpose())).sum()
}

struct Kernels {
    g0: f64,
    gamma: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl Kernels {
    fn new(model: &MarketModel) -> Self {
        let (g0, gamma, lower) = kernel_matrices(&model.grid, &model.kernel);
        Self { g0, gamma, lower }
    }

    fn latency(&self, p: f64) -> DMatrix<f64> {
        let n = self.lower.nrows();
        &self.lower + DMatrix::<f64>::identity(n, n) * (p * self.g0)
    }
}

fn expected_cost_with(model: &MarketModel, k: &Kernels, xi: &StrategyArray, j: usize) -> f64 {
    let q = &model.cross_impact;
    let xj = xi.agent_matrix(j);
    let mut cost = 0.5 * model.scale[j] * weighted_form(q, &xj, &k.gamma, &xj);
    cost += model.theta[j] * xj.norm_squared();
    for l in (0..model.agents()).filter(|&l| l != j) {
        let xl = xi.agent_matrix(l);
        cost += model.scale[l] * weighted_form(q, &xj, &k.latency(model.priority[(j, l)]), &xl);
    }
    cost
}

/// Expected impact cost of agent `j` given everyone's strategies.
pub fn expected_cost(model: &MarketModel, xi: &StrategyArray, agent: usize) -> Result<f64> {
    model.check(xi)?;
    if agent >= model.agents() {
        return Err(invalid!("agent index {agent} out of range"));
    }
    Ok(expected_cost_with(model, &Kernels::new(model), xi, agent))
}

/// Gradient of [`expected_cost`] with respect to agent `j`'s own trades, as
/// an `M x (N+1)` matrix.
pub fn cost_gradient(model: &MarketModel, xi: &StrategyArray, agent: usize) -> Result<DMatrix<f64>> {
    model.check(xi)?;
    if agent >= model.agents() {
        return Err(invalid!("agent index {agent} out of range"));
    }
    let k = Kernels::new(model);
    let q = &model.cross_impact;
    let xj = xi.agent_matrix(agent);
    let mut grad = q * &xj * &k.gamma * model.scale[agent] + &xj * (2.0 * model.theta[agent]);
    for l in (0..model.agents()).filter(|&l| l != agent) {
        let xl = xi.agent_matrix(l);
        grad += q * xl * k.latency(model.priority[(agent, l)]).transpose() * model.scale[l];
    }
    Ok(grad)
}

fn min_times(grid: &TimeGrid) -> DMatrix<f64> {
    let t = grid.points();
    DMatrix::from_fn(t.len(), t.len(), |a, b| t[a].min(t[b]))
}

/// Variance of agent `j`'s revenue under the Bachelier model with
/// covariance rate `sigma`.
pub fn variance(grid: &TimeGrid, sigma: &DMatrix<f64>, xi: &StrategyArray, agent: usize) -> Result<f64> {
    if sigma.nrows() != xi.assets() || sigma.ncols() != xi.assets() || xi.times() != grid.len() {
        return Err(invalid!("covariance or grid does not match the strategy array"));
    }
    let xj = xi.agent_matrix(agent);
    Ok(weighted_form(sigma, &xj, &min_times(grid), &xj).max(0.0))
}

/// `(Var, E + gamma/2 Var)` for agent `j`.
pub fn variance_and_mv(
    model: &MarketModel,
    sigma: &DMatrix<f64>,
    risk_aversion: f64,
    xi: &StrategyArray,
    agent: usize,
) -> Result<(f64, f64)> {
    let e = expected_cost(model, xi, agent)?;
    let var = variance(&model.grid, sigma, xi, agent)?;
    Ok((var, e + 0.5 * risk_aversion * var))
}

/// Gradient of the mean-variance functional with respect to agent `j`'s
/// trades.
pub fn mv_gradient(
    model: &MarketModel,
    sigma: &DMatrix<f64>,
    risk_aversion: f64,
    xi: &StrategyArray,
    agent: usize,
) -> Result<DMatrix<f64>> {
    let g = cost_gradient(model, xi, agent)?;
    let xj = xi.agent_matrix(agent);
    Ok(g + sigma * xj * min_times(&model.grid) * risk_aversion)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub expected: f64,
    pub variance: f64,
    pub mean_variance: f64,
}

/// Costs of every agent.
pub fn cost_report(
    model: &MarketModel,
    sigma: &DMatrix<f64>,
    risk_aversion: f64,
    xi: &StrategyArray,
) -> Result<Vec<CostReport>> {
    model.check(xi)?;
    let k = Kernels::new(model);
    (0..model.agents())
        .map(|j| {
            let expected = expected_cost_with(model, &k, xi, j);
            let var = variance(&model.grid, sigma, xi, j)?;
            Ok(CostReport { expected, variance: var, mean_variance: expected + 0.5 * risk_aversion * var })
        })
        .collect()
}
