//! Kernel matrices on a trading grid.
//!
//! All matrices are `(N+1) x (N+1)` and indexed by trading time. With
//! `G` the decay kernel and `t_k` the grid:
//!
//! | field         | entries                                              |
//! |---------------|------------------------------------------------------|
//! | `gamma`       | `G(|t_i - t_j|)`                                     |
//! | `lower`       | `G(t_i - t_j)` for `i > j`, zero otherwise           |
//! | `gamma_tilde` | `lower + G(0)/2 * I`                                 |
//! | `gamma_theta` | `gamma + 2 theta * I`                                |
//! | `gamma_p`     | `lower + p G(0) * I` (priority-weighted latency)     |
//! | `phi`         | `var_rate * min(t_i, t_j)` (Bachelier covariance)    |
//! | `gamma_risk`  | `gamma_theta + risk_aversion * phi`                  |

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::kernel::DecayKernel;

/// Scalar inputs of [`build_matrices`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleParams {
    /// Quadratic transaction cost.
    pub theta: f64,
    /// Risk aversion.
    pub risk_aversion: f64,
    /// Probability that the other agent executes first at a shared time.
    pub priority: f64,
    /// Variance of the unaffected price per unit time.
    pub var_rate: f64,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self { theta: 0.0, risk_aversion: 0.0, priority: 0.5, var_rate: 0.0 }
    }
}

impl BundleParams {
    pub fn with_theta(theta: f64) -> Self {
        Self { theta, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(invalid!("transaction cost theta must be nonnegative, got {}", self.theta));
        }
        if !(self.risk_aversion >= 0.0) || !self.risk_aversion.is_finite() {
            return Err(invalid!("risk aversion must be nonnegative, got {}", self.risk_aversion));
        }
        if !(0.0..=1.0).contains(&self.priority) {
            return Err(invalid!("priority probability must lie in [0, 1], got {}", self.priority));
        }
        if !(self.var_rate >= 0.0) || !self.var_rate.is_finite() {
            return Err(invalid!("variance rate must be nonnegative, got {}", self.var_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBundle {
    pub g0: f64,
    pub gamma: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub gamma_tilde: DMatrix<f64>,
    pub gamma_theta: DMatrix<f64>,
    pub gamma_p: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub gamma_risk: DMatrix<f64>,
    pub params: BundleParams,
}

impl MatrixBundle {
    pub fn size(&self) -> usize {
        self.gamma.nrows()
    }
}

/// Strict-lower kernel matrix `L` and the full matrix `Γ = L + Lᵀ + G(0) I`,
/// built from a single set of kernel evaluations.
pub fn kernel_matrices(grid: &TimeGrid, kernel: &DecayKernel) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let t = grid.points();
    let n = t.len();
    let g0 = kernel.at_zero();
    let mut lower = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            lower[(i, j)] = kernel.eval(t[i] - t[j]);
        }
    }
    let mut gamma = &lower + lower.transpose();
    for i in 0..n {
        gamma[(i, i)] = g0;
    }
    (g0, gamma, lower)
}

/// `var_rate * min(t_i, t_j)`.
pub fn bachelier_covariance(grid: &TimeGrid, var_rate: f64) -> DMatrix<f64> {
    let t = grid.points();
    DMatrix::from_fn(t.len(), t.len(), |i, j| var_rate * t[i].min(t[j]))
}

pub fn build_matrices(grid: &TimeGrid, kernel: &DecayKernel, params: BundleParams) -> Result<MatrixBundle> {
    params.validate()?;
    kernel.validate_on(grid)?;
    let n = grid.len();
    let (g0, gamma, lower) = kernel_matrices(grid, kernel);
    let identity = DMatrix::<f64>::identity(n, n);
    let gamma_tilde = &lower + &identity * (0.5 * g0);
    let gamma_theta = &gamma + &identity * (2.0 * params.theta);
    let gamma_p = &lower + &identity * (params.priority * g0);
    let phi = bachelier_covariance(grid, params.var_rate);
    let gamma_risk = &gamma_theta + &phi * params.risk_aversion;
    Ok(MatrixBundle { g0, gamma, lower, gamma_tilde, gamma_theta, gamma_p, phi, gamma_risk, params })
}
