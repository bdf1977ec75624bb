//! Dense linear algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{GameError, Result};

/// Default rejection threshold for the 1-norm condition estimate.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

/// LU factorization together with a 1-norm condition estimate.
pub struct GuardedLu {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl GuardedLu {
    /// Factorizes `a` and rejects it when singular or when the condition
    /// estimate exceeds `max_condition`.
    pub fn new(a: &DMatrix<f64>, max_condition: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(GameError::InvalidArgument(alloc::format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(GameError::Numeric("matrix has non-finite entries".into()));
        }
        let norm_a = one_norm(a);
        let lu = a.clone().lu();
        if !lu.is_invertible() {
            return Err(GameError::IllConditioned { condition: f64::INFINITY, limit: max_condition });
        }
        let mut solver = Self { lu, condition: f64::INFINITY };
        let inv_norm = solver.inverse_one_norm_estimate();
        solver.condition = norm_a * inv_norm;
        if !solver.condition.is_finite() || solver.condition > max_condition {
            return Err(GameError::IllConditioned { condition: solver.condition, limit: max_condition });
        }
        Ok(solver)
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self
            .lu
            .solve(b)
            .ok_or_else(|| GameError::Numeric("LU solve failed".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GameError::Numeric("linear solve produced non-finite values".into()));
        }
        Ok(x)
    }

    /// Solves `A^T x = b` from the stored factors (`P A = L U`).
    fn solve_transpose(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let l = self.lu.l();
        let u = self.lu.u();
        let y = u.transpose().solve_lower_triangular(b)?;
        let mut z = l.transpose().solve_upper_triangular(&y)?;
        self.lu.p().inv_permute_rows(&mut z);
        Some(z)
    }

    /// Hager's estimator for `||A^-1||_1` with Higham's alternating-sign
    /// safeguard.
    fn inverse_one_norm_estimate(&self) -> f64 {
        let n = self.lu.l().nrows();
        if n == 1 {
            return self.lu.solve(&DVector::from_element(1, 1.0)).map_or(f64::INFINITY, |x| x[0].abs());
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut estimate = 0.0;
        let mut last_index = usize::MAX;
        for _ in 0..5 {
            let Some(y) = self.lu.solve(&x) else { return f64::INFINITY };
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let signs = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let Some(z) = self.solve_transpose(&signs) else { return f64::INFINITY };
            let (index, zmax) = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            if zmax <= z.dot(&x) || index == last_index {
                break;
            }
            last_index = index;
            x.fill(0.0);
            x[index] = 1.0;
        }
        let alt = DVector::from_fn(n, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + i as f64 / (n - 1) as f64)
        });
        if let Some(y) = self.lu.solve(&alt) {
            let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
            if alt_est > estimate {
                estimate = alt_est;
            }
        }
        estimate
    }
}

/// One-shot guarded solve of `a x = b`.
pub fn solve_guarded(a: &DMatrix<f64>, b: &DVector<f64>, max_condition: f64) -> Result<DVector<f64>> {
    GuardedLu::new(a, max_condition)?.solve(b)
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= rel_tol * scale))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Ties keep the solver's index order.
pub fn symmetric_eigen_desc(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !a.is_square() {
        return Err(GameError::InvalidArgument("eigen-decomposition needs a square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(GameError::Numeric("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let eig = a
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| GameError::Numeric("symmetric eigen-decomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Symmetric square root `V diag(sqrt(max(lambda, 0))) V^T` of a positive
/// semidefinite matrix.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = symmetric_eigen_desc(a)?;
    let roots = DVector::from_iterator(values.len(), values.iter().map(|&v| libm::sqrt(v.max(0.0))));
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| vectors[(i, j)] * roots[j]);
    Ok(&scaled * vectors.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_condition(a: &DMatrix<f64>) -> f64 {
        one_norm(a) * one_norm(&a.clone().try_inverse().unwrap())
    }

    #[test]
    fn condition_estimate_matches_exact_on_small_matrices() {
        let mats = [
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_row_slice(3, 3, &[4.0, -1.0, 0.5, 2.0, 3.0, 1.0, -1.0, 0.2, 5.0]),
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 0.0, 1e-3, 1.0, 0.0, 0.0, 1.0]),
        ];
        for a in &mats {
            let est = GuardedLu::new(a, 1e16).unwrap().condition();
            let exact = exact_condition(a);
            assert!(est <= exact * (1.0 + 1e-12), "{est} > {exact}");
            assert!(est >= exact / 3.0, "{est} << {exact}");
        }
    }

    #[test]
    fn singular_and_ill_conditioned_rejected() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(GuardedLu::new(&singular, 1e12), Err(GameError::IllConditioned { .. })));
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]);
        assert!(matches!(GuardedLu::new(&nearly, 1e12), Err(GameError::IllConditioned { .. })));
    }

    #[test]
    fn solves_accurately() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, -1.0, 0.5, 2.0, 3.0, 1.0, -1.0, 0.2, 5.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = solve_guarded(&a, &b, 1e12).unwrap();
        assert!((&a * &x - &b).norm() < 1e-13);
    }

    #[test]
    fn transpose_solve_is_consistent() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.5, 2.0]);
        let lu = GuardedLu::new(&a, 1e12).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let z = lu.solve_transpose(&b).unwrap();
        assert!((a.transpose() * z - b).norm() < 1e-13);
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, -1.0]);
        let (vals, vecs) = symmetric_eigen_desc(&a).unwrap();
        assert_eq!(vals, vec![5.0, 2.0, -1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = psd_sqrt(&a).unwrap();
        assert!((&r * &r - &a).norm() < 1e-13);
    }
}
