use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InitialEstimate, ProcessNoise, SystemModel, SystemSpec};

/// 1-D constant-velocity target with a direct position measurement. State
/// `(position, velocity)`, `dt = 1`. Fully linear, so every propagator reduces to the
/// textbook Kalman filter on it.
#[derive(Debug, Clone, Default)]
pub struct ConstantVelocityModel;

impl ConstantVelocityModel {
    pub fn f_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])
    }

    pub fn h_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
    }
}

impl SystemModel for ConstantVelocityModel {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_vec(vec![x[0] + x[1], x[1]])
    }

    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn input(&self, _k: usize) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn transition_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(Self::f_matrix())
    }

    fn transition_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(2, 2); 2])
    }

    fn measurement_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(Self::h_matrix())
    }

    fn measurement_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(2, 2)])
    }
}

pub fn build_constant_velocity() -> SystemSpec {
    SystemSpec {
        name: "constant-velocity".into(),
        n_x: 2,
        n_m: 1,
        n_u: 0,
        model: Arc::new(ConstantVelocityModel),
        process_noise: ProcessNoise::Additive(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1e-3, 1e-2,
        ]))),
        measurement_extra: DMatrix::zeros(1, 1),
        x0_true: DVector::from_vec(vec![0.0, 1.0]),
        p0: DMatrix::identity(2, 2),
        initial_estimate: InitialEstimate::SampledFromP0,
        steps: 100,
    }
}
