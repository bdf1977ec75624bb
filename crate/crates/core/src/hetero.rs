//! Nash equilibria for risk-neutral games with heterogeneous agents.
//!
//! Agents may differ in transaction cost `theta_j`, impact scale `s_j`,
//! pairwise execution priority and in which assets they are allowed to
//! trade. The game is linear-quadratic, so stacking every agent's
//! first-order conditions together with its inventory constraints gives a
//! single linear system.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::costs::{expected_cost, MarketModel};
use crate::cross_impact::CrossImpactMatrix;
use crate::equilibrium::GameSpec;
use crate::error::{invalid, GameError, Result};
use crate::grid::TimeGrid;
use crate::kernel::{crowding_factor, DecayKernel};
use crate::linalg::{GuardedLu, DEFAULT_MAX_CONDITION};
use crate::matrices::kernel_matrices;
use crate::strategy::StrategyArray;

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGameSpec {
    pub grid: TimeGrid,
    /// Unscaled decay kernel; agent scales multiply it.
    pub kernel: DecayKernel,
    pub cross_impact: CrossImpactMatrix,
    /// `M x J` inventories.
    pub inventories: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub scale: Vec<f64>,
    /// `priority[(j, l)]`: probability that agent `l` executes before agent
    /// `j` at a shared time.
    pub priority: DMatrix<f64>,
    /// `mask[(i, j)]` is true when agent `j` may trade asset `i`.
    pub mask: DMatrix<bool>,
    pub max_condition: f64,
}

impl HeteroGameSpec {
    /// Fair priority, unit scales, zero transaction costs and full masks.
    pub fn new(grid: TimeGrid, kernel: DecayKernel, cross_impact: CrossImpactMatrix, inventories: DMatrix<f64>) -> Self {
        let (m, j) = inventories.shape();
        Self {
            grid,
            kernel,
            cross_impact,
            inventories,
            theta: vec![0.0; j],
            scale: vec![1.0; j],
            priority: DMatrix::from_element(j, j, 0.5),
            mask: DMatrix::from_element(m, j, true),
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }

    /// Risk-neutral homogeneous game expressed in heterogeneous form.
    pub fn from_homogeneous(spec: &GameSpec) -> Result<Self> {
        if spec.risk_aversion > 0.0 {
            return Err(GameError::Domain("the heterogeneous solver only handles risk-neutral games".into()));
        }
        let j = spec.agents();
        let mut out = Self::new(spec.grid.clone(), spec.kernel, spec.cross_impact.clone(), spec.inventories.clone())
            .with_theta(vec![spec.theta; j])
            .with_scale(vec![spec.crowding(); j]);
        out.max_condition = spec.options.max_condition;
        Ok(out)
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_uniform_theta(self, theta: f64) -> Self {
        let j = self.agents();
        self.with_theta(vec![theta; j])
    }

    pub fn with_scale(mut self, scale: Vec<f64>) -> Self {
        self.scale = scale;
        self
    }

    /// Scales `J^-beta_j`.
    pub fn with_betas(self, betas: &[f64]) -> Self {
        let j = self.agents();
        self.with_scale(betas.iter().map(|&b| crowding_factor(j, b)).collect())
    }

    pub fn with_priority(mut self, priority: DMatrix<f64>) -> Self {
        self.priority = priority;
        self
    }

    /// Two-agent priority: agent 1 executes before agent 0 with
    /// probability `p`.
    pub fn with_two_agent_priority(self, p: f64) -> Self {
        self.with_priority(DMatrix::from_row_slice(2, 2, &[0.5, p, 1.0 - p, 0.5]))
    }

    pub fn with_mask(mut self, mask: DMatrix<bool>) -> Self {
        self.mask = mask;
        self
    }

    /// Homogeneous-scale game with inventories `s_j X_j`.
    ///
    /// Substituting `eta_j = s_j xi_j` turns the scaled-kernel game into a
    /// game with unit scales and transformed inventories; this is the
    /// reading under which heterogeneous impact scaling is usually
    /// reported.
    pub fn inventory_rescaled(&self) -> Self {
        let mut out = self.clone();
        for (j, s) in self.scale.iter().enumerate() {
            for i in 0..self.assets() {
                out.inventories[(i, j)] *= s;
            }
        }
        out.scale = vec![1.0; self.agents()];
        out
    }

    pub fn assets(&self) -> usize {
        self.cross_impact.assets()
    }

    pub fn agents(&self) -> usize {
        self.inventories.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, j) = (self.assets(), self.agents());
        if j == 0 {
            return Err(invalid!("a game needs at least one agent"));
        }
        if self.inventories.nrows() != m {
            return Err(invalid!("inventories have {} rows but there are {} assets", self.inventories.nrows(), m));
        }
        if self.theta.len() != j || self.scale.len() != j {
            return Err(invalid!(
                "expected {j} transaction costs and scales, got {} and {}",
                self.theta.len(),
                self.scale.len()
            ));
        }
        if self.priority.shape() != (j, j) {
            return Err(invalid!("priority matrix must be {j}x{j}"));
        }
        if self.mask.shape() != (m, j) {
            return Err(invalid!("tradable mask must be {m}x{j}"));
        }
        if let Some(t) = self.theta.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(invalid!("transaction costs must be nonnegative, got {t}"));
        }
        if let Some(s) = self.scale.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(invalid!("impact scales must be positive, got {s}"));
        }
        for a in 0..j {
            for b in 0..j {
                let p = self.priority[(a, b)];
                if a != b && (!(0.0..=1.0).contains(&p) || (p + self.priority[(b, a)] - 1.0).abs() > 1e-12) {
                    return Err(invalid!(
                        "priorities must lie in [0, 1] and satisfy p_jl + p_lj = 1 (agents {a}, {b})"
                    ));
                }
            }
        }
        for i in 0..m {
            for a in 0..j {
                if !self.inventories[(i, a)].is_finite() {
                    return Err(invalid!("inventories must be finite"));
                }
                if !self.mask[(i, a)] && self.inventories[(i, a)] != 0.0 {
                    return Err(invalid!("agent {a} holds asset {i} but may not trade it"));
                }
            }
        }
        Ok(())
    }

    pub fn market_model(&self) -> MarketModel {
        MarketModel {
            grid: self.grid.clone(),
            kernel: self.kernel,
            cross_impact: self.cross_impact.matrix().clone(),
            theta: self.theta.clone(),
            scale: self.scale.clone(),
            priority: self.priority.clone(),
        }
    }
}

/// Stacked first-order conditions.
///
/// Unknowns are the active (agent, asset) time series in agent-major
/// order, followed by one multiplier per active pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Active `(asset, agent)` pairs in unknown order.
    pub active: Vec<(usize, usize)>,
    pub times: usize,
}

impl KktSystem {
    pub fn assemble(spec: &HeteroGameSpec) -> Result<Self> {
        spec.validate()?;
        let (m, j_count, n) = (spec.assets(), spec.agents(), spec.grid.len());
        let (g0, gamma, lower) = kernel_matrices(&spec.grid, &spec.kernel);
        let q = spec.cross_impact.matrix();
        let active: Vec<(usize, usize)> =
            (0..j_count).flat_map(|j| (0..m).map(move |i| (i, j))).filter(|&(i, j)| spec.mask[(i, j)]).collect();
        let nv = active.len() * n;
        let size = nv + active.len();
        let mut a = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        let eye = DMatrix::<f64>::identity(n, n);
        for (r, &(i, j)) in active.iter().enumerate() {
            for (c, &(ia, l)) in active.iter().enumerate() {
                let block = if l == j {
                    let mut b = &gamma * (spec.scale[j] * q[(i, ia)]);
                    if ia == i {
                        b += &eye * (2.0 * spec.theta[j]);
                    }
                    b
                } else {
                    (&lower + &eye * (spec.priority[(j, l)] * g0)) * (spec.scale[l] * q[(i, ia)])
                };
                a.view_mut((r * n, c * n), (n, n)).copy_from(&block);
            }
            let mult = nv + r;
            for k in 0..n {
                a[(r * n + k, mult)] = -1.0;
                a[(mult, r * n + k)] = 1.0;
            }
            rhs[mult] = spec.inventories[(i, j)];
        }
        Ok(Self { matrix: a, rhs, active, times: n })
    }

    /// Own-cost Hessian of agent `j` on its active coordinates.
    pub fn self_block(&self, agent: usize) -> DMatrix<f64> {
        let n = self.times;
        let rows: Vec<usize> = self.active.iter().enumerate().filter(|(_, p)| p.1 == agent).map(|(r, _)| r).collect();
        let size = rows.len() * n;
        let mut out = DMatrix::zeros(size, size);
        for (a, &ra) in rows.iter().enumerate() {
            for (b, &rb) in rows.iter().enumerate() {
                out.view_mut((a * n, b * n), (n, n)).copy_from(&self.matrix.view((ra * n, rb * n), (n, n)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroEquilibrium {
    pub strategies: StrategyArray,
    /// Lagrange multiplier of each active `(asset, agent)` pair.
    pub multipliers: Vec<((usize, usize), f64)>,
    pub condition: f64,
}

pub fn solve_hetero_nash(spec: &HeteroGameSpec) -> Result<HeteroEquilibrium> {
    let sys = KktSystem::assemble(spec)?;
    for j in 0..spec.agents() {
        let block = sys.self_block(j);
        if block.nrows() > 0 && block.clone().cholesky().is_none() {
            return Err(GameError::Domain(alloc::format!("own-cost Hessian of agent {j} is not positive definite")));
        }
    }
    let lu = GuardedLu::new(&sys.matrix, spec.max_condition).map_err(|e| match e {
        GameError::IllConditioned { condition, .. } => GameError::NoUniqueEquilibrium(alloc::format!(
            "stacked first-order system is singular or ill-conditioned (condition estimate {condition:.3e})"
        )),
        other => other,
    })?;
    let z = lu.solve(&sys.rhs)?;
    let n = sys.times;
    let mut strategies = StrategyArray::zeros(spec.assets(), spec.agents(), n);
    for (r, &(i, j)) in sys.active.iter().enumerate() {
        strategies.series_mut(i, j).copy_from_slice(&z.as_slice()[r * n..(r + 1) * n]);
    }
    let nv = sys.active.len() * n;
    let multipliers = sys.active.iter().enumerate().map(|(r, &p)| (p, z[nv + r])).collect();
    Ok(HeteroEquilibrium { strategies, multipliers, condition: lu.condition() })
}

/// How the strategies behind a payoff cell are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PayoffMode {
    /// Each agent plays its equilibrium strategy of the game in which every
    /// agent faces that agent's own asset restriction; costs are evaluated
    /// on the resulting profile.
    #[default]
    Perceived,
    /// Every agent plays its strategy from one joint equilibrium in which
    /// each agent has its own restriction.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffCell {
    /// Option index chosen by each agent.
    pub choice: Vec<usize>,
    pub costs: Vec<f64>,
    /// No agent lowers its cost by switching option alone.
    pub nash: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTable {
    pub options_per_agent: Vec<usize>,
    pub cells: Vec<PayoffCell>,
}

impl PayoffTable {
    pub fn cell(&self, choice: &[usize]) -> Option<&PayoffCell> {
        self.cells.iter().find(|c| c.choice == choice)
    }
}

fn choices(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in counts {
        out = out.into_iter().flat_map(|prefix| (0..c).map(move |k| {
            let mut p = prefix.clone();
            p.push(k);
            p
        })).collect();
    }
    out
}

/// Expected costs for every combination of per-agent asset masks.
///
/// `options[j]` lists the masks agent `j` may choose from; each mask has one
/// flag per asset.
pub fn payoff_matrix(
    base: &HeteroGameSpec,
    options: &[Vec<Vec<bool>>],
    mode: PayoffMode,
    nash_tol: f64,
) -> Result<PayoffTable> {
    let (m, j_count) = (base.assets(), base.agents());
    if options.len() != j_count {
        return Err(invalid!("expected mask options for {j_count} agents, got {}", options.len()));
    }
    for (j, opts) in options.iter().enumerate() {
        if opts.is_empty() {
            return Err(invalid!("agent {j} has no mask options"));
        }
        if let Some(bad) = opts.iter().find(|o| o.len() != m) {
            return Err(invalid!("mask of agent {j} has {} flags, expected {m}", bad.len()));
        }
    }
    let counts: Vec<usize> = options.iter().map(Vec::len).collect();
    let model = base.market_model();
    let masked = |cols: &[&Vec<bool>]| {
        let mask = DMatrix::from_fn(m, j_count, |i, j| cols[j][i]);
        solve_hetero_nash(&base.clone().with_mask(mask))
    };
    let mut uniform_cache: Vec<(Vec<bool>, StrategyArray)> = Vec::new();
    let mut cells = Vec::new();
    for choice in choices(&counts) {
        let profile = match mode {
            PayoffMode::Joint => {
                let cols: Vec<&Vec<bool>> = choice.iter().enumerate().map(|(j, &c)| &options[j][c]).collect();
                masked(&cols)?.strategies
            }
            PayoffMode::Perceived => {
                let mut profile = StrategyArray::zeros(m, j_count, base.grid.len());
                for (j, &c) in choice.iter().enumerate() {
                    let key = &options[j][c];
                    let idx = match uniform_cache.iter().position(|(k, _)| k == key) {
                        Some(idx) => idx,
                        None => {
                            let cols = vec![key; j_count];
                            uniform_cache.push((key.clone(), masked(&cols)?.strategies));
                            uniform_cache.len() - 1
                        }
                    };
                    profile.set_agent_matrix(j, &uniform_cache[idx].1.agent_matrix(j));
                }
                profile
            }
        };
        let costs = (0..j_count).map(|j| expected_cost(&model, &profile, j)).collect::<Result<Vec<_>>>()?;
        cells.push(PayoffCell { choice, costs, nash: false });
    }
    let snapshot: Vec<(Vec<usize>, Vec<f64>)> = cells.iter().map(|c| (c.choice.clone(), c.costs.clone())).collect();
    for cell in &mut cells {
        cell.nash = (0..j_count).all(|j| {
            snapshot.iter().filter(|(ch, _)| (0..j_count).all(|l| l == j || ch[l] == cell.choice[l])).all(
                |(_, costs)| costs[j] >= cell.costs[j] - nash_tol * cell.costs[j].abs().max(1.0),
            )
        });
    }
    Ok(PayoffTable { options_per_agent: counts, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::closed_form_equilibrium;
    use crate::grid::make_equidistant_grid;

    fn two_agents(steps: usize, theta: [f64; 2]) -> HeteroGameSpec {
        HeteroGameSpec::new(
            make_equidistant_grid(steps, 1.0).unwrap(),
            DecayKernel::exponential(1.0).unwrap(),
            CrossImpactMatrix::identity(1).unwrap(),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .with_theta(theta.to_vec())
    }

    fn costs(spec: &HeteroGameSpec) -> Vec<f64> {
        let eq = solve_hetero_nash(spec).unwrap();
        let model = spec.market_model();
        (0..spec.agents()).map(|j| expected_cost(&model, &eq.strategies, j).unwrap()).collect()
    }

    #[test]
    fn homogeneous_matches_closed_form() {
        let spec = GameSpec::new(
            make_equidistant_grid(10, 1.0).unwrap(),
            DecayKernel::exponential(2.0).unwrap(),
            CrossImpactMatrix::one_factor(2, 0.3).unwrap(),
            DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.2, 0.3, 0.0, 0.7]),
        )
        .with_theta(0.4)
        .with_beta(0.5);
        let cf = closed_form_equilibrium(&spec).unwrap();
        let kkt = solve_hetero_nash(&HeteroGameSpec::from_homogeneous(&spec).unwrap()).unwrap();
        assert!(cf.strategies.max_abs_diff(&kkt.strategies) < 1e-8);
    }

    #[test]
    fn full_priority_row() {
        let c = costs(&two_agents(15, [1.0, 1.0]).with_two_agent_priority(1.0));
        assert!((c[0] - 0.8568).abs() < 1e-4 && (c[1] - 0.7360).abs() < 1e-4, "{c:?}");
    }

    #[test]
    fn cheaper_agent_pushes_up_the_other() {
        let c = costs(&two_agents(15, [1.0, 0.5]));
        assert!((c[0] - 0.8286).abs() < 1e-4 && (c[1] - 0.7317).abs() < 1e-4, "{c:?}");
    }

    #[test]
    fn rejects_risk_aversion_and_bad_masks() {
        let spec = GameSpec::new(
            make_equidistant_grid(3, 1.0).unwrap(),
            DecayKernel::exponential(1.0).unwrap(),
            CrossImpactMatrix::identity(1).unwrap(),
            DMatrix::from_element(1, 2, 1.0),
        )
        .with_risk_aversion(1.0);
        assert!(matches!(HeteroGameSpec::from_homogeneous(&spec), Err(GameError::Domain(_))));
        let bad = two_agents(3, [1.0, 1.0]).with_mask(DMatrix::from_row_slice(1, 2, &[true, false]));
        assert!(matches!(solve_hetero_nash(&bad), Err(GameError::InvalidArgument(_))));
        let bad = two_agents(3, [1.0, 1.0]).with_priority(DMatrix::from_row_slice(2, 2, &[0.5, 0.7, 0.7, 0.5]));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn singular_system_is_reported() {
        // Zero transaction cost with a kernel that is flat on the grid makes
        // every schedule equally good.
        let spec = HeteroGameSpec::new(
            make_equidistant_grid(3, 1.0).unwrap(),
            DecayKernel::exponential(1e-300).unwrap(),
            CrossImpactMatrix::identity(1).unwrap(),
            DMatrix::from_element(1, 2, 1.0),
        );
        assert!(solve_hetero_nash(&spec).is_err());
    }

    #[test]
    fn fair_priority_cross_blocks_sum_to_gamma() {
        let spec = HeteroGameSpec::new(
            make_equidistant_grid(4, 1.0).unwrap(),
            DecayKernel::exponential(1.0).unwrap(),
            CrossImpactMatrix::identity(1).unwrap(),
            DMatrix::from_element(1, 2, 1.0),
        );
        let sys = KktSystem::assemble(&spec).unwrap();
        let n = 5;
        let c01 = sys.matrix.view((0, n), (n, n)).into_owned();
        let c10 = sys.matrix.view((n, 0), (n, n)).into_owned();
        let (_, gamma, _) = kernel_matrices(&spec.grid, &spec.kernel);
        assert!((c01 + c10.transpose() - gamma).amax() < 1e-15);
    }

    #[test]
    fn table_modes_share_diagonal_cells() {
        let base = HeteroGameSpec::new(
            make_equidistant_grid(25, 1.0).unwrap(),
            DecayKernel::exponential(1.0).unwrap(),
            CrossImpactMatrix::one_factor(2, 0.6).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        )
        .with_uniform_theta(1.5);
        let opts = vec![vec![vec![true, false], vec![true, true]]; 2];
        let perceived = payoff_matrix(&base, &opts, PayoffMode::Perceived, 1e-12).unwrap();
        let joint = payoff_matrix(&base, &opts, PayoffMode::Joint, 1e-12).unwrap();
        for choice in [[0, 0], [1, 1]] {
            let a = perceived.cell(&choice).unwrap();
            let b = joint.cell(&choice).unwrap();
            assert!((a.costs[0] - b.costs[0]).abs() < 1e-12 && (a.costs[1] - b.costs[1]).abs() < 1e-12);
        }
        assert!(perceived.cell(&[1, 1]).unwrap().nash);
        assert_eq!(perceived.cells.iter().filter(|c| c.nash).count(), 1);
    }
}
