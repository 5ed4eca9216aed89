//! Moment propagators: EKF, second-order EKF, UKF and CKF, plus the iterated EKF
//! baseline.
//!
//! Each propagator predicts the state belief through the dynamics and approximates
//! the measurement moments `(y_hat, P_y, P_xy, S)` at an arbitrary linearization
//! point. `recalibrate_moments` re-approximates the moments after the state update;
//! for EKF, EKF2 and CKF this is a fresh approximation about the updated mean, while
//! the UKF shifts its update-step sigma set by `K * residual`.

mod ckf;
pub mod derivatives;
mod ekf;
mod ekf2;
mod iekf;
mod sigma;
mod ukf;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::filter::{MeasurementMoments, StateBelief};
use crate::systems::SystemSpec;

pub use ckf::{ckf_moments, ckf_predict, ckf_recalibrate, Ckf};
pub use ekf::{ekf_moments, ekf_predict, Ekf};
pub use ekf2::{ekf2_moments, ekf2_predict, Ekf2};
pub use iekf::{iekf_update, iekf_update_report, IekfReport, IEKF_MAX_ITERATIONS, IEKF_REL_TOL};
pub use sigma::SigmaSet;
pub use ukf::{ukf_moments, ukf_predict, ukf_recalibrate, ukf_weights, Ukf, UkfParams, UkfWeights};

/// Measurement-side context of one step.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementContext<'a> {
    pub u: &'a DVector<f64>,
    pub k: usize,
    pub r: &'a DMatrix<f64>,
}

/// Step-local data handed from the update-step approximation to recalibration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Carryover {
    #[default]
    Empty,
    /// Update-step sample set and its predicted measurement.
    Sigma { set: SigmaSet, y_hat: DVector<f64> },
}

pub trait MomentPropagator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Belief at `k | k-1` from the belief at `k-1 | k-1`, with `Q_k` added once.
    fn predict(
        &self,
        sys: &SystemSpec,
        belief: &StateBelief,
        u_prev: &DVector<f64>,
        k: usize,
    ) -> Result<StateBelief>;

    fn measurement_moments(
        &self,
        sys: &SystemSpec,
        point: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<(MeasurementMoments, Carryover)>;

    /// Moments re-approximated at the updated mean `x_upd`, using `P_{k|k-1}`.
    #[allow(clippy::too_many_arguments)]
    fn recalibrate_moments(
        &self,
        sys: &SystemSpec,
        x_upd: &DVector<f64>,
        p_pred: &DMatrix<f64>,
        carry: &Carryover,
        gain: &DMatrix<f64>,
        residual: &DVector<f64>,
        ctx: &MeasurementContext<'_>,
    ) -> Result<MeasurementMoments>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropagatorKind {
    Ekf,
    Ekf2,
    Ukf,
    Ckf,
}

impl PropagatorKind {
    pub const ALL: [PropagatorKind; 4] = [
        PropagatorKind::Ekf,
        PropagatorKind::Ekf2,
        PropagatorKind::Ukf,
        PropagatorKind::Ckf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropagatorKind::Ekf => "ekf",
            PropagatorKind::Ekf2 => "ekf2",
            PropagatorKind::Ukf => "ukf",
            PropagatorKind::Ckf => "ckf",
        }
    }

    pub fn build(self, ukf: UkfParams) -> Box<dyn MomentPropagator> {
        match self {
            PropagatorKind::Ekf => Box::new(Ekf),
            PropagatorKind::Ekf2 => Box::new(Ekf2),
            PropagatorKind::Ukf => Box::new(Ukf::new(ukf)),
            PropagatorKind::Ckf => Box::new(Ckf),
        }
    }
}

impl fmt::Display for PropagatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropagatorKind {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self> {
        PropagatorKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                FilterError::InvalidConfig(format!(
                    "unknown filter '{s}'; expected one of ekf, ekf2, ukf, ckf, iekf"
                ))
            })
    }
}

#[cfg(test)]
mod tests;
