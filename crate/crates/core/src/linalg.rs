//! Small dense helpers shared by the estimator and the analysis code.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a symmetric matrix is not positive definite.
pub const PD_RELATIVE_TOL: f64 = 1e-10;

/// Absolute symmetry tolerance for user-supplied weights.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn pd_threshold(lambda_max: f64) -> f64 {
    PD_RELATIVE_TOL * lambda_max.abs().max(1.0)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues `(λ_min, λ_max)` of the symmetric part of `m`.
pub fn eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Induced 2-norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Validates a weight matrix as symmetric positive definite of the given side.
pub fn check_spd(name: &str, m: &DMatrix<f64>, side: usize) -> Result<()> {
    if m.nrows() != side || m.ncols() != side {
        return Err(Error::dims(name, format!("{side}x{side}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    if max_asymmetry(m) > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let (lo, hi) = eig_bounds(m);
    if lo <= pd_threshold(hi) {
        return Err(Error::InvalidArgument(format!(
            "{name} is not positive definite (smallest eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

/// Inverse Cholesky factor `L⁻¹` with `W = L Lᵀ`, so `‖L⁻¹x‖² = xᵀW⁻¹x`.
pub fn inverse_cholesky_factor(name: &str, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(symmetrize(w))
        .ok_or_else(|| Error::IllConditioned(format!("{name} has no Cholesky factorization")))?;
    let l = chol.l();
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::IllConditioned(format!("{name} factor is singular")))
}
