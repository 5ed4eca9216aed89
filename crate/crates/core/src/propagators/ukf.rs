use nalgebra::{DMatrix, DVector};

use super::sigma::{moments_from_samples, transformed_moments, SigmaSet};
use super::{Carryover, MeasurementContext, MomentPropagator};
use crate::error::{FilterError, Result};
use crate::filter::{MeasurementMoments, StateBelief};
use crate::linalg::lower_factor;
use crate::systems::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkfWeights {
    pub lambda: f64,
    /// `n_x + lambda`, the squared spread of the sigma points.
    pub spread: f64,
    pub w_mean: Vec<f64>,
    pub w_cov: Vec<f64>,
}

/// Scaled unscented weights for an `n_x`-dimensional state.
///
/// The central mean weight is `1 - 2 n_x W_i` rather than `lambda / (n_x + lambda)`;
/// the two agree analytically and the former makes the weights sum to one in floating
/// point.
pub fn ukf_weights(n_x: usize, params: &UkfParams) -> Result<UkfWeights> {
    if n_x == 0 {
        return Err(FilterError::InvalidConfig(
            "ukf_weights: n_x must be positive".into(),
        ));
    }
    let n = n_x as f64;
    let spread = params.alpha * params.alpha * (n + params.kappa);
    if !(spread.is_finite() && spread > 0.0) {
        return Err(FilterError::DegenerateScaling(spread));
    }
    let wi = 1.0 / (2.0 * spread);
    let w0m = 1.0 - 2.0 * n * wi;
    let w0c = w0m + 1.0 - params.alpha * params.alpha + params.beta;
    let mut w_mean = vec![wi; 2 * n_x + 1];
    let mut w_cov = w_mean.clone();
    w_mean[0] = w0m;
    w_cov[0] = w0c;
    Ok(UkfWeights {
        lambda: spread - n,
        spread,
        w_mean,
        w_cov,
    })
}

fn sigma_set(center: &DVector<f64>, p: &DMatrix<f64>, params: &UkfParams) -> Result<SigmaSet> {
    let w = ukf_weights(center.len(), params)?;
    let l = lower_factor(p)?;
    Ok(SigmaSet::symmetric(
        center,
        &l,
        w.spread.sqrt(),
        true,
        w.w_mean,
        w.w_cov,
    ))
}

fn measure(sys: &SystemSpec, set: &SigmaSet, ctx: &MeasurementContext<'_>) -> Vec<DVector<f64>> {
    set.points()
        .map(|x| sys.model.measurement(&x, ctx.u, ctx.k))
        .collect()
}

pub fn ukf_predict(
    sys: &SystemSpec,
    belief: &StateBelief,
    u_prev: &DVector<f64>,
    k: usize,
    params: &UkfParams,
) -> Result<StateBelief> {
    let set = sigma_set(&belief.mean, &belief.cov, params)?;
    let ys: Vec<DVector<f64>> = set
        .points()
        .map(|x| sys.model.transition(&x, u_prev, k))
        .collect();
    let (mean, cov) = transformed_moments(&set, &ys);
    let q = sys.process_cov(&belief.mean, u_prev, k);
    Ok(StateBelief::new(mean, cov + q))
}

pub fn ukf_moments(
    sys: &SystemSpec,
    point: &DVector<f64>,
    p: &DMatrix<f64>,
    ctx: &MeasurementContext<'_>,
    params: &UkfParams,
) -> Result<(MeasurementMoments, Carryover)> {
    let set = sigma_set(point, p, params)?;
    let ys = measure(sys, &set, ctx);
    let moments = moments_from_samples(&set, &ys, ctx.r);
    let carry = Carryover::Sigma {
        set,
        y_hat: moments.y_hat.clone(),
    };
    Ok((moments, carry))
}

/// Recalibration: the update-step sigma set translated by `K * residual`.
///
/// Without a carryover the set is rebuilt about `x_upd` from `p_pred`, which is the
/// same set up to rounding.
#[allow(clippy::too_many_arguments)]
pub fn ukf_recalibrate(
    sys: &SystemSpec,
    carry: &Carryover,
    gain: &DMatrix<f64>,
    residual: &DVector<f64>,
    x_upd: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    ctx: &MeasurementContext<'_>,
    params: &UkfParams,
) -> Result<MeasurementMoments> {
    let set = match carry {
        Carryover::Sigma { set, .. } if set.w_mean.len() == 2 * x_upd.len() + 1 => {
            set.recentered(&(&set.center + gain * residual))
        }
        _ => sigma_set(x_upd, p_pred, params)?,
    };
    let ys = measure(sys, &set, ctx);
    Ok(moments_from_samples(&set, &ys, ctx.r))
}

/// Scaled unscented transform.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ukf {
    pub params: UkfParams,
}

impl Ukf {
    pub fn new(params: UkfParams) -> Self {
        Self { params }
    }
}

impl MomentPropagator for Ukf {
    fn name(&self) -> &'static str {
        "ukf"
    }

    fn predict(
        &self,
        sys: &SystemSpec,
        belief: &StateBelief,
        u_prev: &DVector<f64>,
        k: usize,
    ) -> Result<StateBelief> {
        ukf_predict(sys, belief, u_prev, k, &self.params)
    }

    fn measurement_moments(
        &self,
        sys: &SystemSpec,
        point: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<(MeasurementMoments, Carryover)> {
        ukf_moments(sys, point, p_pred, ctx, &self.params)
    }

    fn recalibrate_moments(
        &self,
        sys: &SystemSpec,
        x_upd: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        carry: &Carryover,
        gain: &DMatrix<f64>,
        residual: &DVector<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<MeasurementMoments> {
        ukf_recalibrate(sys, carry, gain, residual, x_upd, p_pred, ctx, &self.params)
    }
}
