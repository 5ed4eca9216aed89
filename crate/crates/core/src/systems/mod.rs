//! Benchmark systems and ground-truth simulation.
//!
//! Time indexing follows the discrete model used throughout the crate:
//! `x_k = f(x_{k-1}, u_{k-1}) + w_{k-1}` and `z_k = h(x_k, u_k) + v_k` for
//! `k = 1..=steps`, with `u_k` the nominal input produced by [`SystemModel::input`].

mod battery;
mod cubic;
mod generator;
mod linear;
mod pendulum;
mod terrain;
mod tracking3d;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::harness::NoiseBank;
use crate::linalg::psd_sqrt;

pub use battery::{build_battery, ocv, ocv_checked, ocv_partials, BatteryModel, A100, A80};
pub use cubic::{build_cubic_demo, cubic_true_state, CubicModel};
pub use generator::{build_generator, GeneratorModel};
pub use linear::{build_constant_velocity, ConstantVelocityModel};
pub use pendulum::{build_pendulum, PendulumModel};
pub use terrain::{build_terrain, TerrainModel};
pub use tracking3d::{build_tracking3d, sensor_position, Tracking3dModel};

/// State transition and measurement maps of a discrete-time system.
///
/// Derivative suppliers are optional; callers fall back to finite differences
/// (see [`crate::propagators::derivatives`]).
pub trait SystemModel: Send + Sync {
    /// `f(x_{k-1}, u_{k-1})`, producing the state at step `k`.
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DVector<f64>;

    /// `h(x_k, u_k)` for step `k`.
    fn measurement(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DVector<f64>;

    /// Nominal input `u_k`.
    fn input(&self, k: usize) -> DVector<f64>;

    fn transition_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        None
    }

    /// One `n_x x n_x` Hessian per output component.
    fn transition_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn measurement_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        None
    }

    fn measurement_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// `df/du`, used to map input noise into process noise.
    fn input_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemId {
    Tracking3d,
    Terrain,
    Generator,
    Pendulum,
    Battery,
}

impl SystemId {
    pub const ALL: [SystemId; 5] = [
        SystemId::Tracking3d,
        SystemId::Terrain,
        SystemId::Generator,
        SystemId::Pendulum,
        SystemId::Battery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::Tracking3d => "tracking3d",
            SystemId::Terrain => "terrain",
            SystemId::Generator => "generator",
            SystemId::Pendulum => "pendulum",
            SystemId::Battery => "battery",
        }
    }

    pub fn build(self) -> SystemSpec {
        match self {
            SystemId::Tracking3d => build_tracking3d(),
            SystemId::Terrain => build_terrain(),
            SystemId::Generator => build_generator(),
            SystemId::Pendulum => build_pendulum(),
            SystemId::Battery => build_battery(),
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                FilterError::InvalidConfig(format!(
                    "unknown system '{s}'; valid ids: {}",
                    valid_system_ids().join(", ")
                ))
            })
    }
}

pub fn valid_system_ids() -> Vec<&'static str> {
    SystemId::ALL.iter().map(|id| id.as_str()).collect()
}

/// How the filter's initial estimate is obtained from the truth.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimate {
    /// `x0_true + chol(P0) * xi` with `xi` drawn from the noise bank.
    SampledFromP0,
    Fixed(DVector<f64>),
}

/// Where the process noise enters the truth model.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessNoise {
    /// `w_k ~ N(0, Q)` added after the transition.
    Additive(DMatrix<f64>),
    /// Noise on the input signal, fed through both `f` and `h`. The filter sees
    /// `Q_k = G diag(std^2) G^T` with `G = df/du`.
    InputDriven { input_std: DVector<f64> },
}

/// A benchmark system plus the noise and initialization settings of its experiment.
#[derive(Clone)]
pub struct SystemSpec {
    /// Stable id; also keys the noise-bank streams.
    pub name: String,
    pub n_x: usize,
    pub n_m: usize,
    pub n_u: usize,
    pub model: Arc<dyn SystemModel>,
    pub process_noise: ProcessNoise,
    /// Measurement covariance seen by the filter on top of `sigma^2 I`.
    pub measurement_extra: DMatrix<f64>,
    pub x0_true: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub initial_estimate: InitialEstimate,
    pub steps: usize,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_m", &self.n_m)
            .field("n_u", &self.n_u)
            .field("steps", &self.steps)
            .finish()
    }
}

impl SystemSpec {
    pub fn input(&self, k: usize) -> DVector<f64> {
        self.model.input(k)
    }

    /// Filter-side measurement covariance `R(sigma)`.
    pub fn measurement_cov(&self, sigma: f64) -> DMatrix<f64> {
        DMatrix::identity(self.n_m, self.n_m) * (sigma * sigma) + &self.measurement_extra
    }

    /// Filter-side process covariance for the transition into step `k`.
    pub fn process_cov(&self, x: &DVector<f64>, u_prev: &DVector<f64>, k: usize) -> DMatrix<f64> {
        match &self.process_noise {
            ProcessNoise::Additive(q) => q.clone(),
            ProcessNoise::InputDriven { input_std } => {
                let g = self.model.input_jacobian(x, u_prev, k).unwrap_or_else(|| {
                    crate::propagators::derivatives::jacobian_fd(
                        |uu| self.model.transition(x, uu, k),
                        u_prev,
                    )
                });
                let var = DMatrix::from_diagonal(&input_std.map(|s| s * s));
                crate::linalg::symmetrize(&(&g * var * g.transpose()))
            }
        }
    }

    /// Initial filter belief for one run.
    pub fn initial_belief(&self, bank: &NoiseBank) -> crate::filter::StateBelief {
        let mean = match &self.initial_estimate {
            InitialEstimate::Fixed(x) => x.clone(),
            InitialEstimate::SampledFromP0 => {
                &self.x0_true + psd_sqrt_lower(&self.p0) * &bank.initial_state_draw
            }
        };
        crate::filter::StateBelief::new(mean, self.p0.clone())
    }
}

/// Noise-shaping factor: exact for diagonal covariances, so zero variances inject
/// exactly zero noise, and Cholesky otherwise.
fn psd_sqrt_lower(p: &DMatrix<f64>) -> DMatrix<f64> {
    if crate::linalg::is_diagonal(p) {
        return psd_sqrt(p);
    }
    crate::linalg::lower_factor(p).unwrap_or_else(|_| psd_sqrt(p))
}

/// Realized states, measurements and nominal inputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrajectory {
    pub x0: DVector<f64>,
    /// `states[k-1]` is `x_k`.
    pub states: Vec<DVector<f64>>,
    /// `measurements[k-1]` is `z_k`.
    pub measurements: Vec<DVector<f64>>,
    /// Nominal inputs `u_0 ..= u_steps`, as known to the filter.
    pub inputs: Vec<DVector<f64>>,
}

/// Simulates the truth model with the bank's noise; measurement noise is `sigma` times
/// the bank's unit-variance stream.
pub fn simulate_truth(spec: &SystemSpec, bank: &NoiseBank, sigma: f64) -> Result<TruthTrajectory> {
    bank.check_shape(spec)?;
    let inputs: Vec<DVector<f64>> = (0..=spec.steps).map(|k| spec.input(k)).collect();
    let actual_input = |k: usize| -> DVector<f64> {
        match &spec.process_noise {
            ProcessNoise::InputDriven { input_std } => {
                &inputs[k] + input_std.component_mul(&bank.input_noise[k])
            }
            ProcessNoise::Additive(_) => inputs[k].clone(),
        }
    };
    let process_factor = match &spec.process_noise {
        ProcessNoise::Additive(q) => Some(psd_sqrt_lower(q)),
        ProcessNoise::InputDriven { .. } => None,
    };

    let mut x = spec.x0_true.clone();
    let mut states = Vec::with_capacity(spec.steps);
    let mut measurements = Vec::with_capacity(spec.steps);
    for k in 1..=spec.steps {
        let mut next = spec.model.transition(&x, &actual_input(k - 1), k);
        if let Some(w) = &process_factor {
            next += w * &bank.process_noise[k - 1];
        }
        let z = spec.model.measurement(&next, &actual_input(k), k)
            + &bank.measurement_noise_unit[k - 1] * sigma;
        if !next.iter().chain(z.iter()).all(|v| v.is_finite()) {
            return Err(FilterError::NonFiniteState { step: k });
        }
        states.push(next.clone());
        measurements.push(z);
        x = next;
    }
    Ok(TruthTrajectory {
        x0: spec.x0_true.clone(),
        states,
        measurements,
        inputs,
    })
}
