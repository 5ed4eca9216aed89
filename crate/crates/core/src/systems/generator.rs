use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InitialEstimate, ProcessNoise, SystemId, SystemModel, SystemSpec};

const DT: f64 = 1e-4;
const OMEGA_BASE: f64 = 377.0;
const INERTIA: f64 = 13.0;
const XD_PRIME: f64 = 0.375;
const TDO: f64 = 0.131;
const TQO: f64 = 0.0131;
const RELUCTANCE: f64 = 0.9215;
const DAMPING: f64 = 0.05;
const XD_GAIN: f64 = 4.4933;
const XQ_GAIN: f64 = 0.6911;

/// Single-machine synchronous generator. States `(delta, d_omega, e_q', e_d')`,
/// inputs `(T_m, E_fd, V_t)`, measurement is electrical output power.
#[derive(Debug, Clone, Default)]
pub struct GeneratorModel;

impl SystemModel for GeneratorModel {
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> DVector<f64> {
        let (d, w, eq, ed) = (x[0], x[1], x[2], x[3]);
        let (tm, efd, vt) = (u[0], u[1], u[2]);
        DVector::from_vec(vec![
            d + OMEGA_BASE * w * DT,
            w + DT / INERTIA * (tm - vt * eq * d.sin() / XD_PRIME)
                + DT / INERTIA * (RELUCTANCE * vt * vt * (2.0 * d).sin() - DAMPING * w),
            eq + DT / TDO * (efd - eq) - XD_GAIN * DT / TDO * (eq - vt * d.cos()),
            ed - ed * DT / TQO + XQ_GAIN * vt * d.sin() * DT / TQO,
        ])
    }

    fn measurement(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> DVector<f64> {
        let vt = u[2];
        DVector::from_element(
            1,
            vt * x[2] * x[0].sin() / XD_PRIME + RELUCTANCE * vt * vt * (2.0 * x[0]).sin(),
        )
    }

    fn input(&self, k: usize) -> DVector<f64> {
        DVector::from_vec(vec![0.8, 2.11 + 0.0002 * k as f64, 1.002])
    }

    fn transition_jacobian(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let (d, eq) = (x[0], x[2]);
        let vt = u[2];
        let a = DT / INERTIA;
        let mut f = DMatrix::identity(4, 4);
        f[(0, 1)] = OMEGA_BASE * DT;
        f[(1, 0)] =
            a * (-vt * eq * d.cos() / XD_PRIME + 2.0 * RELUCTANCE * vt * vt * (2.0 * d).cos());
        f[(1, 1)] = 1.0 - a * DAMPING;
        f[(1, 2)] = -a * vt * d.sin() / XD_PRIME;
        f[(2, 0)] = -XD_GAIN * DT / TDO * vt * d.sin();
        f[(2, 2)] = 1.0 - DT / TDO - XD_GAIN * DT / TDO;
        f[(3, 0)] = XQ_GAIN * vt * d.cos() * DT / TQO;
        f[(3, 3)] = 1.0 - DT / TQO;
        Some(f)
    }

    fn transition_hessians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let (d, eq) = (x[0], x[2]);
        let vt = u[2];
        let a = DT / INERTIA;
        let mut h1 = DMatrix::zeros(4, 4);
        h1[(0, 0)] =
            a * (vt * eq * d.sin() / XD_PRIME - 4.0 * RELUCTANCE * vt * vt * (2.0 * d).sin());
        h1[(0, 2)] = -a * vt * d.cos() / XD_PRIME;
        h1[(2, 0)] = h1[(0, 2)];
        let mut h2 = DMatrix::zeros(4, 4);
        h2[(0, 0)] = -XD_GAIN * DT / TDO * vt * d.cos();
        let mut h3 = DMatrix::zeros(4, 4);
        h3[(0, 0)] = -XQ_GAIN * vt * d.sin() * DT / TQO;
        Some(vec![DMatrix::zeros(4, 4), h1, h2, h3])
    }

    fn measurement_jacobian(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let (d, eq) = (x[0], x[2]);
        let vt = u[2];
        Some(DMatrix::from_row_slice(
            1,
            4,
            &[
                vt * eq * d.cos() / XD_PRIME + 2.0 * RELUCTANCE * vt * vt * (2.0 * d).cos(),
                0.0,
                vt * d.sin() / XD_PRIME,
                0.0,
            ],
        ))
    }

    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let (d, eq) = (x[0], x[2]);
        let vt = u[2];
        let mut h = DMatrix::zeros(4, 4);
        h[(0, 0)] = -vt * eq * d.sin() / XD_PRIME - 4.0 * RELUCTANCE * vt * vt * (2.0 * d).sin();
        h[(0, 2)] = vt * d.cos() / XD_PRIME;
        h[(2, 0)] = h[(0, 2)];
        Some(vec![h])
    }
}

pub fn build_generator() -> SystemSpec {
    SystemSpec {
        name: SystemId::Generator.as_str().into(),
        n_x: 4,
        n_m: 1,
        n_u: 3,
        model: Arc::new(GeneratorModel),
        process_noise: ProcessNoise::Additive(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1e-10, 1e-16, 1e-10, 1e-10,
        ]))),
        measurement_extra: DMatrix::zeros(1, 1),
        x0_true: DVector::from_vec(vec![0.4, 0.0, 0.0, 0.0]),
        p0: DMatrix::from_diagonal(&DVector::from_vec(vec![1e-4, 1e-10, 1e-4, 1e-4])),
        initial_estimate: InitialEstimate::SampledFromP0,
        steps: 100,
    }
}
