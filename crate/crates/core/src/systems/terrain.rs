use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InitialEstimate, ProcessNoise, SystemId, SystemModel, SystemSpec};

const MAP_SCALE_KM: f64 = 40.0;

/// Aircraft flying at constant ground speed over an analytic terrain;
/// the altimeter measures `sin(|x| / 40)`. Positions in km, `dt = 1 s`.
#[derive(Debug, Clone, Default)]
pub struct TerrainModel;

impl TerrainModel {
    fn radius(x: &DVector<f64>) -> f64 {
        ((x[0] / MAP_SCALE_KM).powi(2) + (x[1] / MAP_SCALE_KM).powi(2)).sqrt()
    }
}

impl SystemModel for TerrainModel {
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_vec(vec![x[0] + u[0], x[1] + u[1]])
    }

    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, Self::radius(x).sin())
    }

    fn input(&self, _k: usize) -> DVector<f64> {
        DVector::from_vec(vec![0.5, 0.0])
    }

    fn transition_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
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
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let r = Self::radius(x);
        // The cone apex has no derivative; report a flat tangent there.
        if r == 0.0 {
            return Some(DMatrix::zeros(1, 2));
        }
        let s = MAP_SCALE_KM * MAP_SCALE_KM;
        let c = r.cos();
        Some(DMatrix::from_row_slice(
            1,
            2,
            &[c * x[0] / (s * r), c * x[1] / (s * r)],
        ))
    }

    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let r = Self::radius(x);
        if r == 0.0 {
            return Some(vec![DMatrix::zeros(2, 2)]);
        }
        let s = MAP_SCALE_KM * MAP_SCALE_KM;
        let (sin, cos) = r.sin_cos();
        let g = [x[0] / (s * r), x[1] / (s * r)];
        let h = DMatrix::from_fn(2, 2, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            -sin * g[i] * g[j] + cos * (delta / (s * r) - x[i] * x[j] / (s * s * r.powi(3)))
        });
        Some(vec![h])
    }

    fn input_jacobian(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }
}

/// Process noise is 0.25 m^2 per axis, expressed in km^2 to keep the state in km.
pub fn build_terrain() -> SystemSpec {
    SystemSpec {
        name: SystemId::Terrain.as_str().into(),
        n_x: 2,
        n_m: 1,
        n_u: 2,
        model: Arc::new(TerrainModel),
        process_noise: ProcessNoise::Additive(DMatrix::from_diagonal(&DVector::from_vec(vec![
            2.5e-7, 2.5e-7,
        ]))),
        measurement_extra: DMatrix::zeros(1, 1),
        x0_true: DVector::from_vec(vec![10.0, 10.0]),
        p0: DMatrix::identity(2, 2),
        initial_estimate: InitialEstimate::SampledFromP0,
        steps: 100,
    }
}
