use nalgebra::{DMatrix, DVector};

use super::sigma::{moments_from_samples, transformed_moments, SigmaSet};
use super::{Carryover, MeasurementContext, MomentPropagator};
use crate::error::Result;
use crate::filter::{MeasurementMoments, StateBelief};
use crate::linalg::lower_factor;
use crate::systems::SystemSpec;

/// Third-degree spherical-radial cubature rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ckf;

fn cubature_set(center: &DVector<f64>, p: &DMatrix<f64>) -> Result<SigmaSet> {
    let n = center.len();
    let l = lower_factor(p)?;
    let w = vec![1.0 / (2 * n) as f64; 2 * n];
    Ok(SigmaSet::symmetric(
        center,
        &l,
        (n as f64).sqrt(),
        false,
        w.clone(),
        w,
    ))
}

fn measure(sys: &SystemSpec, set: &SigmaSet, ctx: &MeasurementContext<'_>) -> Vec<DVector<f64>> {
    set.points()
        .map(|x| sys.model.measurement(&x, ctx.u, ctx.k))
        .collect()
}

pub fn ckf_predict(
    sys: &SystemSpec,
    belief: &StateBelief,
    u_prev: &DVector<f64>,
    k: usize,
) -> Result<StateBelief> {
    let set = cubature_set(&belief.mean, &belief.cov)?;
    let ys: Vec<DVector<f64>> = set
        .points()
        .map(|x| sys.model.transition(&x, u_prev, k))
        .collect();
    let (mean, cov) = transformed_moments(&set, &ys);
    let q = sys.process_cov(&belief.mean, u_prev, k);
    Ok(StateBelief::new(mean, cov + q))
}

/// Moments and the cubature set used, whose offsets recalibration reuses.
pub fn ckf_moments(
    sys: &SystemSpec,
    point: &DVector<f64>,
    p: &DMatrix<f64>,
    ctx: &MeasurementContext<'_>,
) -> Result<(MeasurementMoments, Carryover)> {
    let set = cubature_set(point, p)?;
    let ys = measure(sys, &set, ctx);
    let moments = moments_from_samples(&set, &ys, ctx.r);
    let carry = Carryover::Sigma {
        set,
        y_hat: moments.y_hat.clone(),
    };
    Ok((moments, carry))
}

/// Cubature points about `x_upd` with the factor of `p_pred`.
pub fn ckf_recalibrate(
    sys: &SystemSpec,
    x_upd: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    carry: &Carryover,
    ctx: &MeasurementContext<'_>,
) -> Result<MeasurementMoments> {
    let set = match carry {
        Carryover::Sigma { set, .. } if set.w_mean.len() == 2 * x_upd.len() => {
            set.recentered(x_upd)
        }
        _ => cubature_set(x_upd, p_pred)?,
    };
    let ys = measure(sys, &set, ctx);
    Ok(moments_from_samples(&set, &ys, ctx.r))
}

impl MomentPropagator for Ckf {
    fn name(&self) -> &'static str {
        "ckf"
    }

    fn predict(
        &self,
        sys: &SystemSpec,
        belief: &StateBelief,
        u_prev: &DVector<f64>,
        k: usize,
    ) -> Result<StateBelief> {
        ckf_predict(sys, belief, u_prev, k)
    }

    fn measurement_moments(
        &self,
        sys: &SystemSpec,
        point: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<(MeasurementMoments, Carryover)> {
        ckf_moments(sys, point, p_pred, ctx)
    }

    fn recalibrate_moments(
        &self,
        sys: &SystemSpec,
        x_upd: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        carry: &Carryover,
        _gain: &DMatrix<f64>,
        _residual: &DVector<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<MeasurementMoments> {
        ckf_recalibrate(sys, x_upd, p_pred, carry, ctx)
    }
}
