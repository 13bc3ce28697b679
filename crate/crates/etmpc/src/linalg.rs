//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// `(M + M^T) / 2`, absorbing round-off asymmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Minimum eigenvalue of a symmetric matrix. The input is symmetrized first
/// so small round-off asymmetry does not poison the decomposition.
pub fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Maximum eigenvalue of a symmetric matrix.
pub fn max_eig_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Whether a symmetric matrix is positive semidefinite down to `-tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eig_sym(m) >= -tol
}

/// Whether a symmetric matrix is positive definite (min eigenvalue > 0).
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && min_eig_sym(m) > 0.0
}

/// Weighted squared norm `v^T M v`.
pub fn weighted_norm_sq(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (m * v).dot(v)
}

/// 2-condition-number estimate of a general square matrix via SVD.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_eig_of_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        assert!((min_eig_sym(&m) + 1.0).abs() < 1e-12);
        assert!((max_eig_sym(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psd_tolerance() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-9]));
        assert!(is_psd(&m, 1e-8));
        assert!(!is_psd(&m, 1e-10));
    }

    #[test]
    fn condition_of_identity() {
        let m = DMatrix::<f64>::identity(4, 4);
        assert!((condition_number(&m) - 1.0).abs() < 1e-12);
    }
}
