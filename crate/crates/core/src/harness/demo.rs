use nalgebra::{DMatrix, DVector};

use super::sweep::FilterConfig;
use crate::error::Result;
use crate::filter::{update_from_prior, FrameworkMode, StateBelief, StepInputs};
use crate::propagators::{iekf_update, PropagatorKind, UkfParams};
use crate::systems::{build_cubic_demo, CubicModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicDemoRow {
    pub config: FilterConfig,
    pub true_state: f64,
    pub prior_mean: f64,
    pub prior_sigma: f64,
    pub posterior_mean: f64,
    pub posterior_sigma: f64,
    pub backed_out: bool,
}

impl CubicDemoRow {
    pub fn actual_error(&self) -> f64 {
        (self.posterior_mean - self.true_state).abs()
    }
}

/// One noiseless measurement update of the cubic scenario for every propagator under
/// both frameworks, followed by the iterated EKF.
pub fn cubic_demo(sigma_y: f64, ukf: UkfParams) -> Result<Vec<CubicDemoRow>> {
    let sys = build_cubic_demo();
    let truth = sys.x0_true[0];
    let prior = StateBelief::new(DVector::zeros(1), sys.p0.clone());
    let z = DVector::from_element(1, CubicModel::h(truth));
    let r = DMatrix::from_element(1, 1, sigma_y * sigma_y);
    let u = DVector::zeros(0);
    let inputs = StepInputs {
        k: 1,
        u_prev: &u,
        u: &u,
        z: &z,
        r: &r,
    };
    let row = |config: FilterConfig, posterior: &StateBelief, backed_out: bool| CubicDemoRow {
        config,
        true_state: truth,
        prior_mean: prior.mean[0],
        prior_sigma: prior.cov[(0, 0)].sqrt(),
        posterior_mean: posterior.mean[0],
        posterior_sigma: posterior.cov[(0, 0)].max(0.0).sqrt(),
        backed_out,
    };
    let mut rows = Vec::new();
    for kind in PropagatorKind::ALL {
        let prop = kind.build(ukf);
        for mode in [FrameworkMode::Conventional, FrameworkMode::Recalibrated] {
            let rec = update_from_prior(&sys, prop.as_ref(), mode, prior.clone(), inputs)?;
            rows.push(row(
                FilterConfig::Moment { kind, mode },
                &rec.posterior,
                rec.backed_out,
            ));
        }
    }
    let rec = iekf_update(&sys, prior.clone(), inputs)?;
    rows.push(row(FilterConfig::Iekf, &rec.posterior, false));
    Ok(rows)
}
