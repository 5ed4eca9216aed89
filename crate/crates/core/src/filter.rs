//! Framework-level filter step: gain, state update, the two covariance updates and
//! the back-out rule.
//!
//! The conventional framework closes each step with `P - K S K^T`, which is only the
//! true posterior covariance when `K` is optimal for the actual moments. The
//! recalibrated framework keeps the same gain and state update, re-approximates the
//! measurement moments at the updated mean, evaluates the gain-agnostic covariance
//! `P + K S K^T - P_xy K^T - K P_xy^T` with those moments and withdraws the update if
//! it increased the covariance trace.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, FilterError, Result};
use crate::linalg::{solve_right_spd, symmetrize, trace};
use crate::propagators::{MeasurementContext, MomentPropagator};
use crate::systems::SystemSpec;

/// Gaussian belief over the state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl StateBelief {
    /// Builds a belief, symmetrizing the covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov: symmetrize(&cov),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        trace(&self.cov)
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.cov.iter())
            .all(|v| v.is_finite())
    }
}

/// Approximated measurement moments at one linearization point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMoments {
    pub y_hat: DVector<f64>,
    pub p_y: DMatrix<f64>,
    pub p_xy: DMatrix<f64>,
    /// Always `p_y + R`.
    pub s: DMatrix<f64>,
}

impl MeasurementMoments {
    pub fn new(
        y_hat: DVector<f64>,
        p_y: DMatrix<f64>,
        p_xy: DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> Self {
        let p_y = symmetrize(&p_y);
        let s = symmetrize(&(&p_y + r));
        Self {
            y_hat,
            p_y,
            p_xy,
            s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub prior: StateBelief,
    pub posterior: StateBelief,
    pub gain: DMatrix<f64>,
    pub residual: DVector<f64>,
    pub moments_pred: MeasurementMoments,
    pub moments_recal: Option<MeasurementMoments>,
    pub backed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameworkMode {
    Conventional,
    Recalibrated,
}

impl FrameworkMode {
    /// Short names used on the command line and in CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            FrameworkMode::Conventional => "old",
            FrameworkMode::Recalibrated => "new",
        }
    }
}

impl fmt::Display for FrameworkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameworkMode {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "old" | "conventional" => Ok(FrameworkMode::Conventional),
            "new" | "recalibrated" => Ok(FrameworkMode::Recalibrated),
            _ => Err(FilterError::InvalidConfig(format!(
                "unknown framework '{s}'; expected old or new"
            ))),
        }
    }
}

/// `K = P_xy S^-1`, solved through a Cholesky factor of `S`.
pub fn kalman_gain(p_xy: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims("kalman_gain: S", (p_xy.ncols(), p_xy.ncols()), s.shape())?;
    solve_right_spd(p_xy, s)
}

pub fn update_state(
    x_pred: &DVector<f64>,
    gain: &DMatrix<f64>,
    residual: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(
        "update_state: K",
        (x_pred.len(), residual.len()),
        gain.shape(),
    )?;
    Ok(x_pred + gain * residual)
}

/// `P - K S K^T`.
pub fn conventional_cov_update(
    p_pred: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    s_pred: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(
        "conventional_cov_update: K",
        (p_pred.nrows(), s_pred.nrows()),
        gain.shape(),
    )?;
    check_dims(
        "conventional_cov_update: P",
        (p_pred.nrows(), p_pred.nrows()),
        p_pred.shape(),
    )?;
    Ok(symmetrize(&(p_pred - gain * s_pred * gain.transpose())))
}

/// `P + K S K^T - P_xy K^T - K P_xy^T`, valid for any gain.
pub fn general_cov_update(
    p_pred: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    s_eval: &DMatrix<f64>,
    p_xy_eval: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(
        "general_cov_update: K",
        (p_pred.nrows(), s_eval.nrows()),
        gain.shape(),
    )?;
    check_dims("general_cov_update: P_xy", gain.shape(), p_xy_eval.shape())?;
    let cross = p_xy_eval * gain.transpose();
    Ok(symmetrize(
        &(p_pred + gain * s_eval * gain.transpose() - &cross - cross.transpose()),
    ))
}

/// Keeps `candidate` unless its covariance trace strictly exceeds the prior's.
pub fn backout_if_worse(
    prior: &StateBelief,
    candidate: StateBelief,
) -> Result<(StateBelief, bool)> {
    check_dims("backout_if_worse", prior.cov.shape(), candidate.cov.shape())?;
    if candidate.trace() > prior.trace() {
        Ok((prior.clone(), true))
    } else {
        Ok((candidate, false))
    }
}

/// Inputs of one filter step at time `k`.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub k: usize,
    /// `u_{k-1}`, driving the prediction.
    pub u_prev: &'a DVector<f64>,
    /// `u_k`, seen by the measurement map.
    pub u: &'a DVector<f64>,
    pub z: &'a DVector<f64>,
    pub r: &'a DMatrix<f64>,
}

/// Predict, update and (per `mode`) recalibrate/back out one step.
pub fn run_step(
    system: &SystemSpec,
    prop: &dyn MomentPropagator,
    mode: FrameworkMode,
    belief: &StateBelief,
    inputs: StepInputs<'_>,
) -> Result<StepRecord> {
    let prior = prop.predict(system, belief, inputs.u_prev, inputs.k)?;
    update_from_prior(system, prop, mode, prior, inputs)
}

/// Update half of [`run_step`], starting from an already predicted belief.
pub fn update_from_prior(
    system: &SystemSpec,
    prop: &dyn MomentPropagator,
    mode: FrameworkMode,
    prior: StateBelief,
    inputs: StepInputs<'_>,
) -> Result<StepRecord> {
    let ctx = MeasurementContext {
        u: inputs.u,
        k: inputs.k,
        r: inputs.r,
    };
    check_dims("run_step: z", (system.n_m, 1), (inputs.z.len(), 1))?;
    let (moments_pred, carry) = prop.measurement_moments(system, &prior.mean, &prior.cov, &ctx)?;
    let gain = kalman_gain(&moments_pred.p_xy, &moments_pred.s)?;
    let residual = inputs.z - &moments_pred.y_hat;
    let x_upd = update_state(&prior.mean, &gain, &residual)?;

    match mode {
        FrameworkMode::Conventional => {
            let cov = conventional_cov_update(&prior.cov, &gain, &moments_pred.s)?;
            Ok(StepRecord {
                posterior: StateBelief::new(x_upd, cov),
                prior,
                gain,
                residual,
                moments_pred,
                moments_recal: None,
                backed_out: false,
            })
        }
        FrameworkMode::Recalibrated => {
            let recal = prop
                .recalibrate_moments(system, &x_upd, &prior.cov, &carry, &gain, &residual, &ctx)?;
            let cov = general_cov_update(&prior.cov, &gain, &recal.s, &recal.p_xy)?;
            let (posterior, backed_out) = backout_if_worse(&prior, StateBelief::new(x_upd, cov))?;
            Ok(StepRecord {
                prior,
                posterior,
                gain,
                residual,
                moments_pred,
                moments_recal: Some(recal),
                backed_out,
            })
        }
    }
}
