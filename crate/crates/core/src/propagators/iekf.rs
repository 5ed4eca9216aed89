use nalgebra::{DMatrix, DVector};

use super::derivatives::measurement_jacobian;
use crate::error::Result;
use crate::filter::{
    conventional_cov_update, kalman_gain, update_state, MeasurementMoments, StateBelief,
    StepInputs, StepRecord,
};
use crate::systems::SystemSpec;

pub const IEKF_MAX_ITERATIONS: usize = 1000;
pub const IEKF_REL_TOL: f64 = 1e-3;
/// Coordinates below this magnitude use absolute change in the convergence test.
const REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IekfReport {
    /// Accepted iterates, not counting the prior mean.
    pub iterations: usize,
    pub converged: bool,
    /// The last iterate moved further than the one before it and was withdrawn.
    pub diverged: bool,
}

fn max_relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    new.iter()
        .zip(old.iter())
        .map(|(&a, &b)| {
            if b.abs() < REL_FLOOR {
                (a - b).abs()
            } else {
                (1.0 - a / b).abs()
            }
        })
        .fold(0.0, f64::max)
}

struct Iterate {
    x: DVector<f64>,
    moments: MeasurementMoments,
    gain: DMatrix<f64>,
    residual: DVector<f64>,
}

fn relinearize(
    sys: &SystemSpec,
    prior: &StateBelief,
    at: &DVector<f64>,
    inputs: &StepInputs<'_>,
) -> Result<Iterate> {
    let h = measurement_jacobian(sys, at, inputs.u, inputs.k)?;
    let y_hat = sys.model.measurement(at, inputs.u, inputs.k) + &h * (&prior.mean - at);
    let p_xy = &prior.cov * h.transpose();
    let p_y = &h * &p_xy;
    let moments = MeasurementMoments::new(y_hat, p_y, p_xy, inputs.r);
    let gain = kalman_gain(&moments.p_xy, &moments.s)?;
    let residual = inputs.z - &moments.y_hat;
    let x = update_state(&prior.mean, &gain, &residual)?;
    Ok(Iterate {
        x,
        moments,
        gain,
        residual,
    })
}

/// Iterated EKF measurement update from the predicted belief.
pub fn iekf_update(
    sys: &SystemSpec,
    prior: StateBelief,
    inputs: StepInputs<'_>,
) -> Result<StepRecord> {
    iekf_update_report(sys, prior, inputs).map(|(rec, _)| rec)
}

pub fn iekf_update_report(
    sys: &SystemSpec,
    prior: StateBelief,
    inputs: StepInputs<'_>,
) -> Result<(StepRecord, IekfReport)> {
    let mut prev_x = prior.mean.clone();
    let mut current = relinearize(sys, &prior, &prior.mean, &inputs)?;
    let mut report = IekfReport {
        iterations: 1,
        converged: false,
        diverged: false,
    };
    if max_relative_change(&current.x, &prev_x) < IEKF_REL_TOL {
        report.converged = true;
    }
    while !report.converged && report.iterations < IEKF_MAX_ITERATIONS {
        let step = (&current.x - &prev_x).norm();
        let next = relinearize(sys, &prior, &current.x, &inputs)?;
        if (&next.x - &current.x).norm() > step {
            report.diverged = true;
            break;
        }
        prev_x = std::mem::replace(&mut current, next).x;
        report.iterations += 1;
        if max_relative_change(&current.x, &prev_x) < IEKF_REL_TOL {
            report.converged = true;
        }
    }
    let cov = conventional_cov_update(&prior.cov, &current.gain, &current.moments.s)?;
    let record = StepRecord {
        posterior: StateBelief::new(current.x, cov),
        prior,
        gain: current.gain,
        residual: current.residual,
        moments_pred: current.moments,
        moments_recal: None,
        backed_out: false,
    };
    Ok((record, report))
}
