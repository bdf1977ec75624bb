//! Cross-impact matrices and their spectral analysis.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{invalid, GameError, Result};
use crate::linalg::{is_symmetric, symmetric_eigen_desc};

/// Tolerance used when checking symmetry of user supplied matrices.
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric `M x M` matrix of impact coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossImpactMatrix(DMatrix<f64>);

impl CrossImpactMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(invalid!("cross-impact matrix must have at least one asset"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(invalid!("cross-impact matrix has non-finite entries"));
        }
        if !is_symmetric(&matrix, SYMMETRY_TOL) {
            return Err(GameError::Validation("cross-impact matrix is not symmetric".into()));
        }
        Ok(Self(matrix))
    }

    pub fn identity(assets: usize) -> Result<Self> {
        build_cross_impact(&CrossImpactFamily::Identity { assets })
    }

    pub fn one_factor(assets: usize, q: f64) -> Result<Self> {
        build_cross_impact(&CrossImpactFamily::OneFactor { assets, q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn assets(&self) -> usize {
        self.0.nrows()
    }

    /// Sum of the strictly upper off-diagonal entries.
    pub fn off_diagonal_sum(&self) -> f64 {
        let n = self.assets();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.0[(i, j)]).sum()
    }

    pub fn has_unit_diagonal(&self, tol: f64) -> bool {
        self.0.diagonal().iter().all(|d| (d - 1.0).abs() <= tol)
    }
}

/// Structured families of cross-impact matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum CrossImpactFamily {
    Identity { assets: usize },
    /// `(1 - q) I + q e e^T`.
    OneFactor { assets: usize, q: f64 },
    /// `diag(1 - b_i^2) + b b^T`.
    RankOne { loadings: Vec<f64> },
    /// One-factor blocks with coupling `within[b]` inside block `b` and
    /// `across` between blocks.
    Block { sizes: Vec<usize>, within: Vec<f64>, across: f64 },
    Explicit(DMatrix<f64>),
}

pub fn build_cross_impact(family: &CrossImpactFamily) -> Result<CrossImpactMatrix> {
    match family {
        CrossImpactFamily::Identity { assets } => {
            if *assets == 0 {
                return Err(invalid!("number of assets must be positive"));
            }
            Ok(CrossImpactMatrix(DMatrix::identity(*assets, *assets)))
        }
        CrossImpactFamily::OneFactor { assets, q } => {
            if *assets == 0 {
                return Err(invalid!("number of assets must be positive"));
            }
            if !(*q > 0.0 && *q < 1.0) {
                return Err(invalid!("one-factor coupling must lie in (0, 1), got {q}"));
            }
            let m = *assets;
            Ok(CrossImpactMatrix(DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { *q })))
        }
        CrossImpactFamily::RankOne { loadings } => {
            if loadings.is_empty() {
                return Err(invalid!("rank-one family needs at least one loading"));
            }
            if let Some(b) = loadings.iter().find(|b| !(b.abs() < 1.0)) {
                return Err(invalid!("rank-one loadings must satisfy |b| < 1, got {b}"));
            }
            let m = loadings.len();
            Ok(CrossImpactMatrix(DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    1.0
                } else {
                    loadings[i] * loadings[j]
                }
            })))
        }
        CrossImpactFamily::Block { sizes, within, across } => {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(invalid!("block sizes must be positive"));
            }
            if sizes.len() != within.len() {
                return Err(invalid!(
                    "got {} block sizes but {} within-block couplings",
                    sizes.len(),
                    within.len()
                ));
            }
            if !(*across >= 0.0) {
                return Err(invalid!("inter-block coupling must be nonnegative, got {across}"));
            }
            if let Some(q) = within.iter().find(|q| !(**q > *across && **q < 1.0)) {
                return Err(invalid!("within-block coupling {q} must lie in ({across}, 1)"));
            }
            let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| core::iter::repeat_n(b, s)).collect();
            let m = labels.len();
            Ok(CrossImpactMatrix(DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    1.0
                } else if labels[i] == labels[j] {
                    within[labels[i]]
                } else {
                    *across
                }
            })))
        }
        CrossImpactFamily::Explicit(m) => CrossImpactMatrix::new(m.clone()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub lambda_max: f64,
    /// Whether `Q` and the supplied covariance commute.
    pub commutes_with_sigma: Option<bool>,
    /// `1 + 2h/M` for unit-diagonal matrices, the smallest possible largest
    /// eigenvalue given the off-diagonal sum `h`.
    pub one_factor_bound: Option<f64>,
}

impl SpectralReport {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Commutation test `||Q S - S Q|| <= tol ||Q|| ||S||` in the Frobenius norm.
pub fn commutes(q: &DMatrix<f64>, sigma: &DMatrix<f64>, tol: f64) -> bool {
    let diff = q * sigma - sigma * q;
    diff.norm() <= tol * q.norm() * sigma.norm()
}

pub fn analyze_cross_impact(
    q: &CrossImpactMatrix,
    sigma: Option<&DMatrix<f64>>,
    tol: f64,
) -> Result<SpectralReport> {
    let (eigenvalues, eigenvectors) = symmetric_eigen_desc(q.matrix())?;
    let commutes_with_sigma = match sigma {
        Some(s) => {
            if s.nrows() != q.assets() || s.ncols() != q.assets() {
                return Err(invalid!(
                    "covariance is {}x{} but there are {} assets",
                    s.nrows(),
                    s.ncols(),
                    q.assets()
                ));
            }
            Some(commutes(q.matrix(), s, tol))
        }
        None => None,
    };
    let m = q.assets() as f64;
    let one_factor_bound = q.has_unit_diagonal(1e-12).then(|| 1.0 + 2.0 * q.off_diagonal_sum() / m);
    Ok(SpectralReport { lambda_max: eigenvalues[0], eigenvalues, eigenvectors, commutes_with_sigma, one_factor_bound })
}
