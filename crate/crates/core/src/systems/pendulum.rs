use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InitialEstimate, ProcessNoise, SystemId, SystemModel, SystemSpec};

/// Simple pendulum, state `(omega, theta)`, measuring the horizontal rope tension.
#[derive(Debug, Clone)]
pub struct PendulumModel {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for PendulumModel {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.8,
            dt: 0.01,
        }
    }
}

impl SystemModel for PendulumModel {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        let (w, th) = (x[0], x[1]);
        DVector::from_vec(vec![
            w - self.gravity / self.length * th.sin() * self.dt,
            th + w * self.dt,
        ])
    }

    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        let (w, th) = (x[0], x[1]);
        let (m, l, g) = (self.mass, self.length, self.gravity);
        DVector::from_element(1, m * g * th.cos() * th.sin() + m * l * w * w * th.sin())
    }

    fn input(&self, _k: usize) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn transition_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let th = x[1];
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0,
                -self.gravity / self.length * th.cos() * self.dt,
                self.dt,
                1.0,
            ],
        ))
    }

    fn transition_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let th = x[1];
        let mut h_omega = DMatrix::zeros(2, 2);
        h_omega[(1, 1)] = self.gravity / self.length * th.sin() * self.dt;
        Some(vec![h_omega, DMatrix::zeros(2, 2)])
    }

    fn measurement_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let (w, th) = (x[0], x[1]);
        let (m, l, g) = (self.mass, self.length, self.gravity);
        Some(DMatrix::from_row_slice(
            1,
            2,
            &[
                2.0 * m * l * w * th.sin(),
                m * g * (2.0 * th).cos() + m * l * w * w * th.cos(),
            ],
        ))
    }

    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let (w, th) = (x[0], x[1]);
        let (m, l, g) = (self.mass, self.length, self.gravity);
        let cross = 2.0 * m * l * w * th.cos();
        Some(vec![DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 * m * l * th.sin(),
                cross,
                cross,
                -2.0 * m * g * (2.0 * th).sin() - m * l * w * w * th.sin(),
            ],
        )])
    }

    fn input_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(2, 1))
    }
}

pub fn build_pendulum() -> SystemSpec {
    let var = (PI / 18.0).powi(2);
    SystemSpec {
        name: SystemId::Pendulum.as_str().into(),
        n_x: 2,
        n_m: 1,
        n_u: 1,
        model: Arc::new(PendulumModel::default()),
        process_noise: ProcessNoise::Additive(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1e-10, 0.0,
        ]))),
        measurement_extra: DMatrix::zeros(1, 1),
        x0_true: DVector::from_vec(vec![0.0, PI / 4.0]),
        p0: DMatrix::from_diagonal(&DVector::from_vec(vec![var, var])),
        initial_estimate: InitialEstimate::SampledFromP0,
        steps: 100,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tension_values() {
        let m = PendulumModel::default();
        let u = m.input(0);
        assert_eq!(m.measurement(&DVector::zeros(2), &u, 1)[0], 0.0);
        let y = m.measurement(&DVector::from_vec(vec![0.0, PI / 4.0]), &u, 1)[0];
        assert_relative_eq!(y, 4.9, epsilon = 1e-12);
    }

    #[test]
    fn first_step_swing() {
        let m = PendulumModel::default();
        let x = m.transition(&DVector::from_vec(vec![0.0, PI / 4.0]), &m.input(0), 1);
        assert_relative_eq!(x[0], -9.8 * (PI / 4.0).sin() * 0.01, epsilon = 1e-15);
        assert_relative_eq!(x[0], -0.069_296, epsilon = 1e-6);
        assert_eq!(x[1], PI / 4.0);
    }
}
