use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use super::{InitialEstimate, ProcessNoise, SystemId, SystemModel, SystemSpec};

/// Target moving at constant velocity, ranged by a fixed sensor at the origin and a
/// second sensor circling in the ground plane. State `(x1, x2, x3, v1, v2, v3)`,
/// `dt = 1 s`.
#[derive(Debug, Clone, Default)]
pub struct Tracking3dModel;

/// Position of the moving sensor at step `k` (1-based).
pub fn sensor_position(k: usize) -> Vector3<f64> {
    let phase = (k as f64 - 1.0) * PI / 15.0;
    Vector3::new(20.0 + 20.0 * phase.cos(), 20.0 + 20.0 * phase.sin(), 0.0)
}

fn position(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

/// Gradient and Hessian of `|d|` with respect to the position block.
fn range_derivatives(d: &Vector3<f64>) -> (Vector3<f64>, nalgebra::Matrix3<f64>) {
    let r = d.norm();
    if r == 0.0 {
        return (Vector3::zeros(), nalgebra::Matrix3::zeros());
    }
    let unit = d / r;
    let hess = (nalgebra::Matrix3::identity() - unit * unit.transpose()) / r;
    (unit, hess)
}

impl SystemModel for Tracking3dModel {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_vec(vec![
            x[0] + x[3],
            x[1] + x[4],
            x[2] + x[5],
            x[3],
            x[4],
            x[5],
        ])
    }

    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, k: usize) -> DVector<f64> {
        let p = position(x);
        DVector::from_vec(vec![p.norm(), (p - sensor_position(k)).norm()])
    }

    fn input(&self, _k: usize) -> DVector<f64> {
        DVector::zeros(3)
    }

    fn transition_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let mut f = DMatrix::identity(6, 6);
        for i in 0..3 {
            f[(i, i + 3)] = 1.0;
        }
        Some(f)
    }

    fn transition_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(6, 6); 6])
    }

    fn measurement_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        k: usize,
    ) -> Option<DMatrix<f64>> {
        let p = position(x);
        let mut h = DMatrix::zeros(2, 6);
        for (row, d) in [p, p - sensor_position(k)].iter().enumerate() {
            let (grad, _) = range_derivatives(d);
            for j in 0..3 {
                h[(row, j)] = grad[j];
            }
        }
        Some(h)
    }

    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let p = position(x);
        let hessians = [p, p - sensor_position(k)]
            .iter()
            .map(|d| {
                let (_, block) = range_derivatives(d);
                let mut h = DMatrix::zeros(6, 6);
                h.view_mut((0, 0), (3, 3)).copy_from(&block);
                h
            })
            .collect();
        Some(hessians)
    }

    fn input_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(6, 3))
    }
}

pub fn build_tracking3d() -> SystemSpec {
    SystemSpec {
        name: SystemId::Tracking3d.as_str().into(),
        n_x: 6,
        n_m: 2,
        n_u: 3,
        model: Arc::new(Tracking3dModel),
        process_noise: ProcessNoise::Additive(DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.0, 0.0, 0.0, 1e-6, 1e-6, 1e-6,
        ]))),
        measurement_extra: DMatrix::zeros(2, 2),
        x0_true: DVector::from_vec(vec![10.0, -10.0, 50.0, 1.0, 2.0, 0.0]),
        p0: DMatrix::from_diagonal(&DVector::from_vec(vec![
            100.0, 100.0, 100.0, 0.01, 0.01, 0.01,
        ])),
        initial_estimate: InitialEstimate::SampledFromP0,
        steps: 30,
    }
}
