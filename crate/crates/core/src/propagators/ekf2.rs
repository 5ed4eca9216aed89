use nalgebra::{DMatrix, DVector};

use super::derivatives::{
    measurement_hessians, measurement_jacobian, transition_hessians, transition_jacobian,
};
use super::{Carryover, MeasurementContext, MomentPropagator};
use crate::error::Result;
use crate::filter::{MeasurementMoments, StateBelief};
use crate::systems::SystemSpec;

/// Second-order linearization with Hessian trace corrections.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ekf2;

/// `[tr(A_i P)]_i` and `1/2 [tr(A_i P A_j P)]_ij`.
fn trace_corrections(hessians: &[DMatrix<f64>], p: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let hp: Vec<DMatrix<f64>> = hessians.iter().map(|a| a * p).collect();
    let mean = DVector::from_iterator(hp.len(), hp.iter().map(|m| 0.5 * m.trace()));
    let n = hp.len();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            // tr(A B) without forming the product.
            let t = hp[i].component_mul(&hp[j].transpose()).sum();
            cov[(i, j)] = 0.5 * t;
            cov[(j, i)] = 0.5 * t;
        }
    }
    (mean, cov)
}

pub fn ekf2_predict(
    sys: &SystemSpec,
    belief: &StateBelief,
    u_prev: &DVector<f64>,
    k: usize,
) -> Result<StateBelief> {
    let x = &belief.mean;
    let p = &belief.cov;
    let f = transition_jacobian(sys, x, u_prev, k)?;
    let hessians = transition_hessians(sys, x, u_prev, k)?;
    let (mean_corr, cov_corr) = trace_corrections(&hessians, p);
    let mean = sys.model.transition(x, u_prev, k) + mean_corr;
    let q = sys.process_cov(x, u_prev, k);
    Ok(StateBelief::new(
        mean,
        &f * p * f.transpose() + cov_corr + q,
    ))
}

pub fn ekf2_moments(
    sys: &SystemSpec,
    point: &DVector<f64>,
    p: &DMatrix<f64>,
    ctx: &MeasurementContext<'_>,
) -> Result<MeasurementMoments> {
    let h = measurement_jacobian(sys, point, ctx.u, ctx.k)?;
    let hessians = measurement_hessians(sys, point, ctx.u, ctx.k)?;
    let (mean_corr, cov_corr) = trace_corrections(&hessians, p);
    let y_hat = sys.model.measurement(point, ctx.u, ctx.k) + mean_corr;
    let p_xy = p * h.transpose();
    let p_y = &h * &p_xy + cov_corr;
    Ok(MeasurementMoments::new(y_hat, p_y, p_xy, ctx.r))
}

impl MomentPropagator for Ekf2 {
    fn name(&self) -> &'static str {
        "ekf2"
    }

    fn predict(
        &self,
        sys: &SystemSpec,
        belief: &StateBelief,
        u_prev: &DVector<f64>,
        k: usize,
    ) -> Result<StateBelief> {
        ekf2_predict(sys, belief, u_prev, k)
    }

    fn measurement_moments(
        &self,
        sys: &SystemSpec,
        point: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<(MeasurementMoments, Carryover)> {
        Ok((ekf2_moments(sys, point, p_pred, ctx)?, Carryover::Empty))
    }

    fn recalibrate_moments(
        &self,
        sys: &SystemSpec,
        x_upd: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        _carry: &Carryover,
        _gain: &DMatrix<f64>,
        _residual: &DVector<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<MeasurementMoments> {
        ekf2_moments(sys, x_upd, p_pred, ctx)
    }
}
