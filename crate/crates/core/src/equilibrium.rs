//! Closed-form Nash equilibria for games with identical agents.
//!
//! The cross-impact matrix is diagonalized, `Q = V diag(lambda) V^T`, and
//! each virtual asset `V^T S` is an independent single-asset game with
//! kernel `lambda_i J^-beta G`. In the single-asset game every equilibrium
//! strategy is `Xbar v + (X_j - Xbar) w` for two fundamental solutions.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cross_impact::{analyze_cross_impact, CrossImpactMatrix, SpectralReport};
use crate::error::{invalid, GameError, Result};
use crate::grid::TimeGrid;
use crate::kernel::{crowding_factor, DecayKernel};
use crate::linalg::{is_symmetric, solve_guarded, symmetric_eigen_desc, DEFAULT_MAX_CONDITION};
use crate::matrices::{build_matrices, BundleParams, MatrixBundle};
use crate::strategy::StrategyArray;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance of the `Q Sigma = Sigma Q` test.
    pub commute_tol: f64,
    /// Largest accepted 1-norm condition estimate of a linear system.
    pub max_condition: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { commute_tol: 1e-9, max_condition: DEFAULT_MAX_CONDITION }
    }
}

/// Parameters of a game with `M` assets and `J` identical agents.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub grid: TimeGrid,
    /// Unscaled decay kernel; the crowding factor `J^-beta` is applied by
    /// the solvers.
    pub kernel: DecayKernel,
    pub theta: f64,
    pub risk_aversion: f64,
    pub beta: f64,
    pub cross_impact: CrossImpactMatrix,
    /// Covariance rate of the unaffected price.
    pub sigma: DMatrix<f64>,
    /// `M x J` inventories; column `j` belongs to agent `j`. Positive
    /// entries are sold.
    pub inventories: DMatrix<f64>,
    pub options: SolverOptions,
}

impl GameSpec {
    /// Risk-neutral game without transaction costs and with `Sigma = Q`.
    pub fn new(grid: TimeGrid, kernel: DecayKernel, cross_impact: CrossImpactMatrix, inventories: DMatrix<f64>) -> Self {
        let sigma = cross_impact.matrix().clone();
        Self {
            grid,
            kernel,
            theta: 0.0,
            risk_aversion: 0.0,
            beta: 0.0,
            cross_impact,
            sigma,
            inventories,
            options: SolverOptions::default(),
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_risk_aversion(mut self, gamma: f64) -> Self {
        self.risk_aversion = gamma;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_sigma(mut self, sigma: DMatrix<f64>) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn assets(&self) -> usize {
        self.cross_impact.assets()
    }

    pub fn agents(&self) -> usize {
        self.inventories.ncols()
    }

    /// `J^-beta`.
    pub fn crowding(&self) -> f64 {
        crowding_factor(self.agents(), self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.assets();
        if self.inventories.nrows() != m {
            return Err(invalid!("inventories have {} rows but there are {} assets", self.inventories.nrows(), m));
        }
        if self.agents() == 0 {
            return Err(invalid!("a game needs at least one agent"));
        }
        if self.inventories.iter().any(|x| !x.is_finite()) {
            return Err(invalid!("inventories must be finite"));
        }
        for (name, value) in [("theta", self.theta), ("risk aversion", self.risk_aversion), ("beta", self.beta)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(invalid!("{name} must be nonnegative and finite, got {value}"));
            }
        }
        validate_covariance(&self.sigma, m)?;
        if !(self.options.commute_tol > 0.0) || !(self.options.max_condition > 1.0) {
            return Err(invalid!("solver tolerances must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn validate_covariance(sigma: &DMatrix<f64>, assets: usize) -> Result<()> {
    if sigma.nrows() != assets || sigma.ncols() != assets {
        return Err(invalid!("covariance is {}x{} but there are {} assets", sigma.nrows(), sigma.ncols(), assets));
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(invalid!("covariance has non-finite entries"));
    }
    if !is_symmetric(sigma, 1e-12) {
        return Err(GameError::Validation("covariance is not symmetric".into()));
    }
    let (values, _) = symmetric_eigen_desc(sigma)?;
    let floor = -1e-12 * values[0].abs().max(1.0);
    if values[values.len() - 1] < floor {
        return Err(GameError::Validation(alloc::format!(
            "covariance is not positive semidefinite (smallest eigenvalue {})",
            values[values.len() - 1]
        )));
    }
    Ok(())
}

/// Normalized solutions spanning every single-asset equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSolutions {
    pub v: DVector<f64>,
    pub w: DVector<f64>,
}

fn normalized_solve(a: &DMatrix<f64>, max_condition: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let x = solve_guarded(a, &DVector::from_element(n, 1.0), max_condition)?;
    let total: f64 = x.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(GameError::Numeric("fundamental solution has zero total volume".into()));
    }
    Ok(x / total)
}

/// `v ~ [Gamma^{gamma,theta} + (J-1) Gamma~]^-1 e` and
/// `w ~ [Gamma^{gamma,theta} - Gamma~]^-1 e`, both scaled to unit sum.
pub fn fundamental_solutions(bundle: &MatrixBundle, agents: usize, max_condition: f64) -> Result<FundamentalSolutions> {
    if agents == 0 {
        return Err(invalid!("agent count must be positive"));
    }
    let a_v = &bundle.gamma_risk + &bundle.gamma_tilde * (agents as f64 - 1.0);
    let a_w = &bundle.gamma_risk - &bundle.gamma_tilde;
    Ok(FundamentalSolutions { v: normalized_solve(&a_v, max_condition)?, w: normalized_solve(&a_w, max_condition)? })
}

/// Optimal single-trader schedule per unit inventory, `Gamma^{gamma,theta}^-1 e`
/// scaled to unit sum.
pub fn tim_solution(bundle: &MatrixBundle, max_condition: f64) -> Result<DVector<f64>> {
    normalized_solve(&bundle.gamma_risk, max_condition)
}

/// Kernel scale and variance rate of each virtual asset.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualAssets {
    pub spectral: SpectralReport,
    /// `lambda_i J^-beta`.
    pub scales: Vec<f64>,
    /// `(V^T Sigma V)_ii`.
    pub var_rates: Vec<f64>,
}

/// Diagonalizes `Q` and checks the assumptions of the closed form.
///
/// Within a degenerate eigenspace of `Q` the basis is rotated so that it
/// also diagonalizes `Sigma`; this is possible whenever the two commute.
pub fn virtual_assets(spec: &GameSpec) -> Result<VirtualAssets> {
    let sigma = &spec.sigma;
    let mut spectral = analyze_cross_impact(&spec.cross_impact, Some(sigma), spec.options.commute_tol)?;
    let lambda_min = spectral.lambda_min();
    if !(lambda_min > 0.0) {
        return Err(GameError::Domain(alloc::format!(
            "cross-impact matrix must be positive definite (smallest eigenvalue {lambda_min})"
        )));
    }
    if spec.risk_aversion > 0.0 && spectral.commutes_with_sigma == Some(false) {
        return Err(GameError::Domain(
            "risk-averse games require the cross-impact matrix to commute with the covariance (Q Sigma = Sigma Q)"
                .into(),
        ));
    }
    align_degenerate_eigenspaces(&mut spectral, sigma)?;
    let v = &spectral.eigenvectors;
    let rotated = v.transpose() * sigma * v;
    let crowding = spec.crowding();
    let scales = spectral.eigenvalues.iter().map(|l| l * crowding).collect();
    let var_rates = (0..spec.assets()).map(|i| rotated[(i, i)].max(0.0)).collect();
    Ok(VirtualAssets { spectral, scales, var_rates })
}

fn align_degenerate_eigenspaces(spectral: &mut SpectralReport, sigma: &DMatrix<f64>) -> Result<()> {
    let m = spectral.eigenvalues.len();
    let tol = 1e-10 * spectral.lambda_max.abs().max(1.0);
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && (spectral.eigenvalues[start] - spectral.eigenvalues[end]).abs() <= tol {
            end += 1;
        }
        if end - start > 1 {
            let block = spectral.eigenvectors.columns(start, end - start).into_owned();
            let sub = block.transpose() * sigma * &block;
            let (_, u) = symmetric_eigen_desc(&sub)?;
            let rotated = &block * u;
            spectral.eigenvectors.columns_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }
    Ok(())
}

/// Solves the fundamental solutions of each virtual asset, reusing results
/// for virtual assets with identical parameters.
#[allow(clippy::too_many_arguments)]
pub(crate) fn virtual_fundamentals(
    grid: &TimeGrid,
    kernel: &DecayKernel,
    scales: &[f64],
    var_rates: &[f64],
    theta: f64,
    risk_aversion: f64,
    agents: usize,
    max_condition: f64,
) -> Result<Vec<FundamentalSolutions>> {
    let mut out: Vec<FundamentalSolutions> = Vec::with_capacity(scales.len());
    for i in 0..scales.len() {
        let same = (0..i).find(|&k| nearly_equal(scales[k], scales[i]) && nearly_equal(var_rates[k], var_rates[i]));
        if let Some(k) = same {
            let copy = out[k].clone();
            out.push(copy);
            continue;
        }
        let params = BundleParams { theta, risk_aversion, priority: 0.5, var_rate: var_rates[i] };
        let bundle = build_matrices(grid, &kernel.scaled(scales[i])?, params)?;
        out.push(fundamental_solutions(&bundle, agents, max_condition)?);
    }
    Ok(out)
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-13 * a.abs().max(b.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    /// `M x J x (N+1)` equilibrium trades.
    pub strategies: StrategyArray,
    /// The same trades in virtual-asset coordinates.
    pub virtual_strategies: StrategyArray,
    pub spectral: SpectralReport,
    /// One entry per virtual asset, in eigenvalue order.
    pub fundamentals: Vec<FundamentalSolutions>,
    pub virtual_scales: Vec<f64>,
    pub virtual_var_rates: Vec<f64>,
}

pub fn closed_form_equilibrium(spec: &GameSpec) -> Result<Equilibrium> {
    spec.validate()?;
    let va = virtual_assets(spec)?;
    let (m, j_count, n) = (spec.assets(), spec.agents(), spec.grid.len());
    let fundamentals = virtual_fundamentals(
        &spec.grid,
        &spec.kernel,
        &va.scales,
        &va.var_rates,
        spec.theta,
        spec.risk_aversion,
        j_count,
        spec.options.max_condition,
    )?;
    let v = &va.spectral.eigenvectors;
    let xp = v.transpose() * &spec.inventories;
    let mut virtual_strategies = StrategyArray::zeros(m, j_count, n);
    for i in 0..m {
        let mean = xp.row(i).sum() / j_count as f64;
        let f = &fundamentals[i];
        for j in 0..j_count {
            let dev = xp[(i, j)] - mean;
            for (k, out) in virtual_strategies.series_mut(i, j).iter_mut().enumerate() {
                *out = mean * f.v[k] + dev * f.w[k];
            }
        }
    }
    let mut strategies = StrategyArray::zeros(m, j_count, n);
    for j in 0..j_count {
        strategies.set_agent_matrix(j, &(v * virtual_strategies.agent_matrix(j)));
    }
    Ok(Equilibrium {
        strategies,
        virtual_strategies,
        spectral: va.spectral,
        fundamentals,
        virtual_scales: va.scales,
        virtual_var_rates: va.var_rates,
    })
}

/// True when the aggregate inventory of every asset vanishes, relative to
/// the largest inventory.
pub fn aggregate_flow_is_zero(spec: &GameSpec, tol: f64) -> bool {
    let scale = spec.inventories.amax().max(f64::MIN_POSITIVE);
    spec.inventories.row_iter().all(|row| row.sum().abs() <= tol * scale)
}

/// True when agent `j` does not trade at all.
pub fn arbitrageur_is_idle(eq: &Equilibrium, agent: usize, tol: f64) -> bool {
    let s = &eq.strategies;
    (0..s.assets()).all(|i| s.series(i, agent).iter().all(|x| x.abs() <= tol))
}
