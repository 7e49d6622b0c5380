//! Small dense real linear-algebra helpers shared by the power-flow and HHL code.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Pivots with magnitude below this are treated as singular.
pub const PIVOT_EPS: f64 = 1e-12;

/// Symmetry tolerance used when a matrix must be real symmetric.
pub const SYMMETRY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("singular matrix (pivot {pivot:e} below {PIVOT_EPS:e})")]
    Singular { pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Largest |a_ij - a_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && asymmetry(m) <= SYMMETRY_EPS
}

pub fn ensure_symmetric(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_EPS {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigen-decomposition of a real symmetric matrix.
///
/// Eigenvalues are returned in ascending order; column `k` of the returned
/// matrix is the unit eigenvector belonging to eigenvalue `k`.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    ensure_symmetric(m)?;
    let n = m.nrows();
    // Symmetrize exactly so round-off asymmetry cannot leak into the solver.
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Solves `a x = rhs` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = a.nrows();
    if rhs.len() != n {
        return Err(LinalgError::Dimension { expected: n, got: rhs.len() });
    }
    let mut m = a.clone();
    let mut x = DVector::from_column_slice(rhs);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[(r, col)]))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap_or((col, 0.0));
        if pivot.abs() < PIVOT_EPS {
            return Err(LinalgError::Singular { pivot: pivot.abs() });
        }
        if pivot_row != col {
            m.swap_rows(pivot_row, col);
            x.swap_rows(pivot_row, col);
        }
        for r in (col + 1)..n {
            let factor = m[(r, col)] / m[(col, col)];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[(r, c)] -= factor * m[(col, c)];
            }
            x[r] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for c in (row + 1)..n {
            acc -= m[(row, c)] * x[c];
        }
        x[row] = acc / m[(row, row)];
    }
    Ok(x.iter().copied().collect())
}

pub fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).iter().copied().collect()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_matches_adjugate_on_2x2() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.5, 0.5, 0.5, -1.5]);
        let x = gauss_solve(&a, &[0.10, -0.15]).unwrap();
        // adj(a) / det(a), det = 2
        let det = -1.5 * -1.5 - 0.5 * 0.5;
        let expect = [(-1.5 * 0.10 - 0.5 * -0.15) / det, (-0.5 * 0.10 + -1.5 * -0.15) / det];
        assert!((x[0] - expect[0]).abs() < 1e-15);
        assert!((x[1] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_is_singular() {
        let a = DMatrix::zeros(3, 3);
        assert!(matches!(gauss_solve(&a, &[1.0, 2.0, 3.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn eigen_sorted_and_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let gram = vecs.transpose() * &vecs;
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(symmetric_eigen(&a), Err(LinalgError::NotSymmetric { .. })));
    }
}
