use nalgebra::{DMatrix, DVector};

use super::derivatives::{measurement_jacobian, transition_jacobian};
use super::{Carryover, MeasurementContext, MomentPropagator};
use crate::error::Result;
use crate::filter::{MeasurementMoments, StateBelief};
use crate::systems::SystemSpec;

/// First-order linearization.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ekf;

pub fn ekf_predict(
    sys: &SystemSpec,
    belief: &StateBelief,
    u_prev: &DVector<f64>,
    k: usize,
) -> Result<StateBelief> {
    let f = transition_jacobian(sys, &belief.mean, u_prev, k)?;
    let mean = sys.model.transition(&belief.mean, u_prev, k);
    let q = sys.process_cov(&belief.mean, u_prev, k);
    Ok(StateBelief::new(mean, &f * &belief.cov * f.transpose() + q))
}

pub fn ekf_moments(
    sys: &SystemSpec,
    point: &DVector<f64>,
    p: &DMatrix<f64>,
    ctx: &MeasurementContext<'_>,
) -> Result<MeasurementMoments> {
    let h = measurement_jacobian(sys, point, ctx.u, ctx.k)?;
    let y_hat = sys.model.measurement(point, ctx.u, ctx.k);
    let p_xy = p * h.transpose();
    let p_y = &h * &p_xy;
    Ok(MeasurementMoments::new(y_hat, p_y, p_xy, ctx.r))
}

impl MomentPropagator for Ekf {
    fn name(&self) -> &'static str {
        "ekf"
    }

    fn predict(
        &self,
        sys: &SystemSpec,
        belief: &StateBelief,
        u_prev: &DVector<f64>,
        k: usize,
    ) -> Result<StateBelief> {
        ekf_predict(sys, belief, u_prev, k)
    }

    fn measurement_moments(
        &self,
        sys: &SystemSpec,
        point: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<(MeasurementMoments, Carryover)> {
        Ok((ekf_moments(sys, point, p_pred, ctx)?, Carryover::Empty))
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
        ekf_moments(sys, x_upd, p_pred, ctx)
    }
}
