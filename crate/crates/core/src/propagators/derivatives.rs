//! Analytic-or-numeric derivatives of a system's maps.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::systems::SystemSpec;

/// Central-difference step for first derivatives.
pub fn jacobian_step(xj: f64) -> f64 {
    (1e-6 * xj.abs()).max(1e-6)
}

/// Second differences of function values lose `eps / h^2`, so they use a wider step.
pub fn hessian_step(xj: f64) -> f64 {
    (1e-4 * xj.abs()).max(1e-4)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian_fd<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let h = jacobian_step(x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        cols.push((f(&xp) - f(&xm)) / (2.0 * h));
    }
    if cols.is_empty() {
        return DMatrix::zeros(f(x).len(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// Central-difference Hessians of every output component of `f`.
pub fn hessians_fd<F>(f: F, x: &DVector<f64>) -> Vec<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let f0 = f(x);
    let m = f0.len();
    let steps: Vec<f64> = x.iter().map(|&v| hessian_step(v)).collect();
    let eval = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut xx = x.clone();
        xx[di] += si * steps[di];
        xx[dj] += sj * steps[dj];
        f(&xx)
    };
    let mut out = vec![DMatrix::zeros(n, n); m];
    for i in 0..n {
        let (hi, plus, minus) = (steps[i], eval(i, 1.0, i, 0.0), eval(i, -1.0, i, 0.0));
        let diag = (plus - &f0 * 2.0 + minus) / (hi * hi);
        for (c, h) in out.iter_mut().enumerate() {
            h[(i, i)] = diag[c];
        }
        for j in (i + 1)..n {
            let hj = steps[j];
            let v = (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0)
                + eval(i, -1.0, j, -1.0))
                / (4.0 * hi * hj);
            for (c, h) in out.iter_mut().enumerate() {
                h[(i, j)] = v[c];
                h[(j, i)] = v[c];
            }
        }
    }
    out
}

fn finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn transition_jacobian(
    sys: &SystemSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    let jac = sys
        .model
        .transition_jacobian(x, u, k)
        .unwrap_or_else(|| jacobian_fd(|xx| sys.model.transition(xx, u, k), x));
    if finite(&jac) {
        Ok(jac)
    } else {
        Err(FilterError::JacobianUnavailable)
    }
}

pub fn measurement_jacobian(
    sys: &SystemSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    let jac = sys
        .model
        .measurement_jacobian(x, u, k)
        .unwrap_or_else(|| jacobian_fd(|xx| sys.model.measurement(xx, u, k), x));
    if finite(&jac) {
        Ok(jac)
    } else {
        Err(FilterError::JacobianUnavailable)
    }
}

pub fn transition_hessians(
    sys: &SystemSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let hs = sys
        .model
        .transition_hessians(x, u, k)
        .unwrap_or_else(|| hessians_fd(|xx| sys.model.transition(xx, u, k), x));
    if hs.iter().all(finite) {
        Ok(hs)
    } else {
        Err(FilterError::HessianUnavailable)
    }
}

pub fn measurement_hessians(
    sys: &SystemSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let hs = sys
        .model
        .measurement_hessians(x, u, k)
        .unwrap_or_else(|| hessians_fd(|xx| sys.model.measurement(xx, u, k), x));
    if hs.iter().all(finite) {
        Ok(hs)
    } else {
        Err(FilterError::HessianUnavailable)
    }
}
