//! Small dense symmetric positive-definite solves with a condition diagnostic.

use nalgebra::{DMatrix, DVector};

/// Condition numbers above this are treated as numerically singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Eigendecomposition-backed solver for small SPD systems.
///
/// Keeps the condition number `lambda_max / lambda_min` around so callers can
/// gate on it; returns `None` when the matrix is not strictly positive
/// definite.
pub(crate) struct SpdSolver {
    eigenvectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    pub condition: f64,
}

impl SpdSolver {
    pub fn new(mat: &DMatrix<f64>) -> Option<Self> {
        let sym = symmetrize(mat);
        if sym.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let eig = sym.symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        if lambda_min <= 0.0 || !lambda_max.is_finite() {
            return None;
        }
        Some(Self {
            eigenvectors: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
            condition: lambda_max / lambda_min,
        })
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut y = self.eigenvectors.transpose() * rhs;
        for (i, v) in y.iter_mut().enumerate() {
            *v /= self.eigenvalues[i];
        }
        &self.eigenvectors * y
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.eigenvectors.transpose() * rhs;
        for i in 0..y.nrows() {
            let lambda = self.eigenvalues[i];
            for j in 0..y.ncols() {
                y[(i, j)] /= lambda;
            }
        }
        &self.eigenvectors * y
    }

    /// Explicit symmetrized inverse.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        symmetrize(&self.solve_mat(&DMatrix::identity(n, n)))
    }
}

pub(crate) fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (mat + mat.transpose())
}

/// Ratio of extreme singular values; `inf` for a rank-deficient matrix.
pub(crate) fn condition_2(mat: &DMatrix<f64>) -> f64 {
    let sv = mat.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let solver = SpdSolver::new(&m).unwrap();
        let rhs = DVector::from_row_slice(&[1.0, 2.0]);
        let x = solver.solve_vec(&rhs);
        let back = &m * &x;
        assert!((back - rhs).norm() < 1e-12);
        assert!(solver.condition < 10.0);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(SpdSolver::new(&m).is_none());
    }

    #[test]
    fn condition_of_singular_matrix_is_infinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_2(&m).is_infinite());
    }
}
