//! Experiment configuration: a single JSON document.

use std::fmt;

use impact_game_core::{
    build_cross_impact, CrossImpactFamily, CrossImpactMatrix, DecayKernel, GameSpec, HeteroGameSpec, SolverOptions,
    TimeGrid,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Equilibrium,
    Costs,
    PayoffMatrix,
    ThetaCritical,
    Sweep,
    Simulate,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Equilibrium => "equilibrium",
            Self::Costs => "costs",
            Self::PayoffMatrix => "payoff-matrix",
            Self::ThetaCritical => "theta-critical",
            Self::Sweep => "sweep",
            Self::Simulate => "simulate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
    /// Transaction cost shared by agents without their own.
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub priority: PriorityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_impact: Option<CrossImpactConfig>,
    #[serde(default)]
    pub sigma: SigmaConfig,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of trading intervals `N`; the grid has `N + 1` points.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Explicit trading times; overrides `steps` and `horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { steps: default_steps(), horizon: 1.0, times: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Exponential,
    PowerLaw,
}

/// How per-agent impact scales `s_j` enter the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Each agent's own trades feel the kernel `s_j G`.
    #[default]
    Kernel,
    /// Unit scales with inventories `s_j X_j`.
    Inventory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "exponential")]
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    /// Multiplies the kernel.
    #[serde(default = "one")]
    pub scale: f64,
    /// Crowding exponent: agents feel `J^-beta G`.
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub scale_mode: ScaleMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Exponential,
            rate: None,
            alpha: None,
            offset: None,
            scale: 1.0,
            beta: 0.0,
            scale_mode: ScaleMode::Kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Target inventory per asset.
    pub inventory: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Own crowding exponent, giving scale `J^-beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Explicit impact scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Assets the agent may trade.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorityConfig {
    /// Two agents: agent 1 executes before agent 0 with this probability.
    /// With more agents only 1/2 is accepted.
    Scalar(f64),
    /// Entry `(j, l)`: probability that `l` executes before `j`.
    Matrix(Vec<Vec<f64>>),
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self::Scalar(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrossImpactConfig {
    Identity,
    OneFactor { q: f64 },
    RankOne { loadings: Vec<f64> },
    Block { sizes: Vec<usize>, within: Vec<f64>, across: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaName {
    #[serde(rename = "equal_to_Q", alias = "equal_to_q")]
    EqualToQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaConfig {
    Named(SigmaName),
    /// Multiple of the identity.
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self::Named(SigmaName::EqualToQ)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Bisection tolerance on theta and tolerance of boolean checks.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
    #[serde(default = "default_commute_tol")]
    pub commute_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_condition: default_max_condition(),
            commute_tol: default_commute_tol(),
            bracket: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffModeConfig {
    #[default]
    Perceived,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    /// `options[j]` lists the masks agent `j` chooses from.
    pub options: Vec<Vec<Vec<bool>>>,
    #[serde(default)]
    pub mode: PayoffModeConfig,
    #[serde(default = "default_nash_tol")]
    pub nash_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPointConfig {
    pub assets: usize,
    pub agents: usize,
    pub steps: usize,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub beta: f64,
}

/// Either explicit points or the product of the value lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<SweepPointConfig>>,
    #[serde(default = "vec_one")]
    pub assets: Vec<usize>,
    #[serde(default = "vec_two")]
    pub agents: Vec<usize>,
    #[serde(default = "vec_steps")]
    pub steps: Vec<usize>,
    #[serde(default = "vec_zero")]
    pub gamma: Vec<f64>,
    #[serde(default = "vec_zero")]
    pub beta: Vec<f64>,
    /// One-factor coupling for multi-asset points.
    #[serde(default = "half")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<f64>>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_times: Option<Vec<f64>>,
    /// Covariance of the unaffected price; defaults to `sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatility: Option<SigmaConfig>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { s0: None, substeps: default_substeps(), horizon: None, fine_times: None, volatility: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// File name stem; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn default_steps() -> usize {
    50
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn exponential() -> KernelFamily {
    KernelFamily::Exponential
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_condition() -> f64 {
    1e12
}
fn default_commute_tol() -> f64 {
    1e-9
}
fn default_nash_tol() -> f64 {
    1e-12
}
fn default_substeps() -> usize {
    10
}
fn vec_one() -> Vec<usize> {
    vec![1]
}
fn vec_two() -> Vec<usize> {
    vec![2]
}
fn vec_steps() -> Vec<usize> {
    vec![50]
}
fn vec_zero() -> Vec<f64> {
    vec![0.0]
}

/// Parses a config, reporting the JSON path of any schema violation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::usage(path, e.into_inner().to_string())
    })
}

fn usage(path: &str, msg: impl Into<String>) -> CliError {
    CliError::usage(path.to_string(), msg.into())
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(usage(&format!("{path}[{i}]"), format!("row has {} entries, expected {n}", r.len())));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Games the config describes, in the form the solvers take.
#[derive(Debug, Clone)]
pub enum Game {
    Homogeneous(GameSpec),
    Heterogeneous(HeteroGameSpec),
}

impl ExperimentConfig {
    pub fn assets(&self) -> usize {
        self.agents.first().map_or(0, |a| a.inventory.len())
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        let g = &self.grid;
        match &g.times {
            Some(t) => TimeGrid::new(t.clone()).map_err(|e| usage("grid.times", e.to_string())),
            None => TimeGrid::equidistant(g.steps, g.horizon).map_err(|e| usage("grid", e.to_string())),
        }
    }

    pub fn kernel(&self) -> Result<DecayKernel, CliError> {
        let k = &self.kernel;
        let base = match k.family {
            KernelFamily::Exponential => {
                if k.alpha.is_some() || k.offset.is_some() {
                    return Err(usage("kernel", "alpha and offset belong to the power_law family"));
                }
                DecayKernel::exponential(k.rate.unwrap_or(1.0)).map_err(|e| usage("kernel.rate", e.to_string()))?
            }
            KernelFamily::PowerLaw => {
                if k.rate.is_some() {
                    return Err(usage("kernel.rate", "rate belongs to the exponential family"));
                }
                let alpha = k.alpha.ok_or_else(|| usage("kernel.alpha", "power_law kernel needs alpha"))?;
                DecayKernel::power_law(alpha, k.offset.unwrap_or(1.0))
                    .map_err(|e| usage("kernel", e.to_string()))?
            }
        };
        base.scaled(k.scale).map_err(|e| usage("kernel.scale", e.to_string()))
    }

    pub fn cross_impact(&self, assets: usize) -> Result<CrossImpactMatrix, CliError> {
        let family = match self.cross_impact.clone().unwrap_or(CrossImpactConfig::Identity) {
            CrossImpactConfig::Identity => CrossImpactFamily::Identity { assets },
            CrossImpactConfig::OneFactor { q } => CrossImpactFamily::OneFactor { assets, q },
            CrossImpactConfig::RankOne { loadings } => CrossImpactFamily::RankOne { loadings },
            CrossImpactConfig::Block { sizes, within, across } => CrossImpactFamily::Block { sizes, within, across },
            CrossImpactConfig::Explicit { matrix: rows } => {
                CrossImpactFamily::Explicit(matrix(&rows, "cross_impact.matrix")?)
            }
        };
        let q = build_cross_impact(&family).map_err(|e| usage("cross_impact", e.to_string()))?;
        if q.assets() != assets {
            return Err(usage("cross_impact", format!("matrix is {0}x{0} but agents hold {assets} assets", q.assets())));
        }
        Ok(q)
    }

    pub fn covariance(sigma: &SigmaConfig, q: &CrossImpactMatrix, path: &str) -> Result<DMatrix<f64>, CliError> {
        let m = q.assets();
        let out = match sigma {
            SigmaConfig::Named(SigmaName::EqualToQ) => q.matrix().clone(),
            SigmaConfig::Scalar(s) => DMatrix::identity(m, m) * *s,
            SigmaConfig::Matrix(rows) => matrix(rows, path)?,
        };
        if out.nrows() != m {
            return Err(usage(path, format!("covariance is {0}x{0}, expected {m}x{m}", out.nrows())));
        }
        Ok(out)
    }

    pub fn inventories(&self) -> Result<DMatrix<f64>, CliError> {
        if self.agents.is_empty() {
            return Err(usage("agents", "at least one agent is required"));
        }
        let m = self.assets();
        if m == 0 {
            return Err(usage("agents[0].inventory", "inventory must list at least one asset"));
        }
        for (j, a) in self.agents.iter().enumerate() {
            if a.inventory.len() != m {
                return Err(usage(
                    &format!("agents[{j}].inventory"),
                    format!("has {} assets, expected {m}", a.inventory.len()),
                ));
            }
        }
        Ok(DMatrix::from_fn(m, self.agents.len(), |i, j| self.agents[j].inventory[i]))
    }

    fn options(&self) -> SolverOptions {
        SolverOptions { commute_tol: self.solver.commute_tol, max_condition: self.solver.max_condition }
    }

    fn priority(&self) -> Result<Option<DMatrix<f64>>, CliError> {
        let j = self.agents.len();
        match &self.priority {
            PriorityConfig::Scalar(p) if *p == 0.5 => Ok(None),
            PriorityConfig::Scalar(p) if j == 2 => Ok(Some(DMatrix::from_row_slice(2, 2, &[0.5, *p, 1.0 - p, 0.5]))),
            PriorityConfig::Scalar(_) => Err(usage("priority", "a scalar priority other than 1/2 needs two agents")),
            PriorityConfig::Matrix(rows) => {
                let p = matrix(rows, "priority")?;
                if p.nrows() != j {
                    return Err(usage("priority", format!("matrix must be {j}x{j}")));
                }
                Ok(Some(p))
            }
        }
    }

    fn scales(&self) -> Result<Option<Vec<f64>>, CliError> {
        let j = self.agents.len();
        let mut any = self.kernel.beta != 0.0 && self.kernel.scale_mode == ScaleMode::Inventory;
        let mut out = Vec::with_capacity(j);
        for (idx, a) in self.agents.iter().enumerate() {
            if a.beta.is_some() && a.scale.is_some() {
                return Err(usage(&format!("agents[{idx}]"), "give either beta or scale, not both"));
            }
            any |= a.beta.is_some() || a.scale.is_some();
            out.push(match (a.scale, a.beta) {
                (Some(s), _) => s,
                (None, b) => impact_game_core::crowding_factor(j, b.unwrap_or(self.kernel.beta)),
            });
        }
        Ok(any.then_some(out))
    }

    /// Builds the game; per-agent parameters select the heterogeneous solver.
    pub fn game(&self) -> Result<Game, CliError> {
        let grid = self.grid()?;
        let kernel = self.kernel()?;
        let inv = self.inventories()?;
        let q = self.cross_impact(inv.nrows())?;
        let thetas: Vec<f64> = self.agents.iter().map(|a| a.theta.unwrap_or(self.theta)).collect();
        let priority = self.priority()?;
        let scales = self.scales()?;
        let masked = self.agents.iter().any(|a| a.mask.is_some());
        let uniform_theta = thetas.iter().all(|&t| t == self.theta);
        if uniform_theta && priority.is_none() && scales.is_none() && !masked {
            let sigma = Self::covariance(&self.sigma, &q, "sigma")?;
            let spec = GameSpec::new(grid, kernel, q, inv)
                .with_theta(self.theta)
                .with_risk_aversion(self.gamma)
                .with_beta(self.kernel.beta)
                .with_sigma(sigma)
                .with_options(self.options());
            return Ok(Game::Homogeneous(spec));
        }
        if self.gamma != 0.0 {
            return Err(usage("gamma", "risk aversion is only supported for homogeneous games"));
        }
        let m = inv.nrows();
        let mut spec = HeteroGameSpec::new(grid, kernel, q, inv).with_theta(thetas);
        spec.max_condition = self.solver.max_condition;
        let scales =
            scales.unwrap_or_else(|| vec![impact_game_core::crowding_factor(self.agents.len(), self.kernel.beta); self.agents.len()]);
        spec = spec.with_scale(scales);
        if let Some(p) = priority {
            spec = spec.with_priority(p);
        }
        if masked {
            for (j, a) in self.agents.iter().enumerate() {
                if let Some(mask) = &a.mask {
                    if mask.len() != m {
                        return Err(usage(&format!("agents[{j}].mask"), format!("has {} flags, expected {m}", mask.len())));
                    }
                }
            }
            let mask = DMatrix::from_fn(m, self.agents.len(), |i, j| self.agents[j].mask.as_ref().is_none_or(|k| k[i]));
            spec = spec.with_mask(mask);
        }
        if self.kernel.scale_mode == ScaleMode::Inventory {
            spec = spec.inventory_rescaled();
        }
        Ok(Game::Heterogeneous(spec))
    }

    pub fn solver_options(&self) -> SolverOptions {
        self.options()
    }
}
