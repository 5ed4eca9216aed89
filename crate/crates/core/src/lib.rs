//! Nonlinear Kalman filtering with conventional and recalibrated covariance updates.
//!
//! The conventional framework updates the covariance with `P - K S K^T`, using the
//! measurement moments approximated at the predicted mean. The recalibrated framework
//! re-approximates the moments at the updated mean, evaluates the gain-agnostic
//! update `P + K S K^T - P_xy K^T - K P_xy^T`, and backs out of the update when the
//! resulting covariance trace exceeds the prior's.
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use nlkf::filter::{run_step, FrameworkMode, StateBelief, StepInputs};
//! use nlkf::propagators::Ekf;
//! use nlkf::systems::build_terrain;
//!
//! let sys = build_terrain();
//! let belief = StateBelief::new(DVector::from_vec(vec![10.0, 10.0]), DMatrix::identity(2, 2));
//! let r = sys.measurement_cov(0.01);
//! let u = sys.input(0);
//! let z = DVector::from_element(1, 0.35);
//! let step = run_step(
//!     &sys,
//!     &Ekf,
//!     FrameworkMode::Recalibrated,
//!     &belief,
//!     StepInputs { k: 1, u_prev: &u, u: &u, z: &z, r: &r },
//! )
//! .unwrap();
//! assert!(step.posterior.trace() <= step.prior.trace());
//! ```

pub mod error;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod propagators;
pub mod systems;

pub use error::{FilterError, Result};
pub use filter::{FrameworkMode, MeasurementMoments, StateBelief, StepRecord};
pub use propagators::{MomentPropagator, PropagatorKind};
pub use systems::{SystemId, SystemSpec};
