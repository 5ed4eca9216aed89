use super::sweep::{FilterConfig, SweepResult};
use crate::error::{FilterError, Result};
use crate::filter::FrameworkMode;
use crate::propagators::PropagatorKind;

/// Completed runs required before a consistency ratio is reported.
pub const MIN_CONSISTENCY_RUNS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub config: FilterConfig,
    pub sigma: f64,
    /// Per state `estimated_rmse / rmse_final`; below one means overconfident.
    pub ratio: Vec<f64>,
}

pub fn consistency_stats(result: &SweepResult) -> Result<Vec<ConsistencyRow>> {
    result
        .entries
        .iter()
        .map(|e| {
            let found = e.completed_runs();
            if found < MIN_CONSISTENCY_RUNS {
                return Err(FilterError::InsufficientSamples {
                    required: MIN_CONSISTENCY_RUNS,
                    found,
                });
            }
            Ok(ConsistencyRow {
                config: e.config,
                sigma: e.sigma,
                ratio: e
                    .estimated_rmse
                    .iter()
                    .zip(&e.rmse_final)
                    .map(|(est, act)| est / act)
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub config: FilterConfig,
    pub sigma: f64,
    /// Mean step time relative to the conventional EKF at the same sigma.
    pub normalized: f64,
}

pub fn timing_profile(result: &SweepResult) -> Result<Vec<TimingRow>> {
    let baseline = FilterConfig::Moment {
        kind: PropagatorKind::Ekf,
        mode: FrameworkMode::Conventional,
    };
    result
        .entries
        .iter()
        .map(|e| {
            let base = result.get(&baseline, e.sigma).ok_or_else(|| {
                FilterError::InvalidConfig(
                    "timing profile needs the conventional EKF in the sweep".into(),
                )
            })?;
            Ok(TimingRow {
                config: e.config,
                sigma: e.sigma,
                normalized: e.mean_step_time_ns / base.mean_step_time_ns,
            })
        })
        .collect()
}
