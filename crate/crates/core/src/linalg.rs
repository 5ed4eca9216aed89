//! Covariance conditioning helpers shared by the filters and the harness.
//!
//! Every covariance written by the library goes through [`symmetrize`]. Factorizations
//! that fail on the first attempt are retried with diagonal jitter scaled by the mean
//! diagonal magnitude, escalating through [`JITTER_LADDER`] before giving up.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{FilterError, Result};

/// Relative jitter levels tried after a failed factorization, in order.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-9, 1e-6];

/// Returns `(P + P^T) / 2`.
pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

pub fn trace(p: &DMatrix<f64>) -> f64 {
    p.diagonal().sum()
}

/// Lower Cholesky factor of `p`, retrying with escalating diagonal jitter.
///
/// Returns `None` when every rung of the ladder fails, leaving the caller to pick
/// the error variant that fits its context.
pub fn cholesky_conditioned(p: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if !p.iter().all(|v| v.is_finite()) {
        return None;
    }
    let p = symmetrize(p);
    if let Some(chol) = Cholesky::new(p.clone()) {
        return Some(chol);
    }
    let n = p.nrows().max(1) as f64;
    let mut scale = trace(&p).abs() / n;
    if scale == 0.0 || !scale.is_finite() {
        scale = 1.0;
    }
    JITTER_LADDER.iter().find_map(|eps| {
        let mut jittered = p.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += eps * scale;
        }
        Cholesky::new(jittered)
    })
}

/// Lower-triangular factor `L` with `L L^T = P`, or [`FilterError::CholeskyFailure`].
pub fn lower_factor(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cholesky_conditioned(p)
        .map(|c| c.l())
        .ok_or(FilterError::CholeskyFailure)
}

/// Solves `K S = B` for `K` with `S` symmetric positive definite.
///
/// `S` is never inverted explicitly: the system is transposed to `S K^T = B^T`
/// and solved through the Cholesky factor.
pub fn solve_right_spd(b: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    crate::error::check_dims("solve_right_spd", (b.ncols(), b.ncols()), s.shape())?;
    let chol = cholesky_conditioned(s).ok_or(FilterError::SingularInnovation)?;
    Ok(chol.solve(&b.transpose()).transpose())
}

/// Symmetric square root `V diag(sqrt(max(l, 0))) V^T` of a PSD matrix.
///
/// Diagonal inputs take an exact elementwise path so that zero variances stay
/// exactly zero.
pub fn psd_sqrt(p: &DMatrix<f64>) -> DMatrix<f64> {
    if is_diagonal(p) {
        return DMatrix::from_diagonal(&p.diagonal().map(|v| v.max(0.0).sqrt()));
    }
    let eig = SymmetricEigen::new(symmetrize(p));
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

pub fn is_diagonal(p: &DMatrix<f64>) -> bool {
    p.is_square() && (0..p.nrows()).all(|i| (0..p.ncols()).all(|j| i == j || p[(i, j)] == 0.0))
}

pub fn min_eigenvalue(p: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(p)).eigenvalues.min()
}

/// Largest singular value.
pub fn spectral_norm(p: &DMatrix<f64>) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    p.clone().singular_values().max()
}

/// Outer product `a b^T`.
pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}
