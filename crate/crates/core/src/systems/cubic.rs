use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InitialEstimate, ProcessNoise, SystemModel, SystemSpec};

/// Static scalar state observed through `y = x^3/3 - x^2/8 - x + 1.5383`.
#[derive(Debug, Clone, Default)]
pub struct CubicModel;

impl CubicModel {
    pub fn h(x: f64) -> f64 {
        x.powi(3) / 3.0 - x * x / 8.0 - x + 1.5383
    }

    pub fn dh(x: f64) -> f64 {
        x * x - x / 4.0 - 1.0
    }

    pub fn d2h(x: f64) -> f64 {
        2.0 * x - 0.25
    }
}

impl SystemModel for CubicModel {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        x.clone()
    }

    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, Self::h(x[0]))
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
        Some(DMatrix::identity(1, 1))
    }

    fn transition_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(1, 1)])
    }

    fn measurement_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, Self::dh(x[0])))
    }

    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::from_element(1, 1, Self::d2h(x[0]))])
    }
}

/// The real root of `h(x) = 0`, found by bisection.
///
/// The cubic has a single real root; `h` is negative far left and positive at the
/// local maximum, so `[-10, -0.5]` brackets it.
pub fn cubic_true_state() -> f64 {
    let (mut lo, mut hi) = (-10.0, -0.5);
    debug_assert!(CubicModel::h(lo) < 0.0 && CubicModel::h(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if CubicModel::h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * lo.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// One-step cubic scenario: prior `N(0, 1.5^2)`, truth at the root of `h`.
pub fn build_cubic_demo() -> SystemSpec {
    SystemSpec {
        name: "cubic".into(),
        n_x: 1,
        n_m: 1,
        n_u: 0,
        model: Arc::new(CubicModel),
        process_noise: ProcessNoise::Additive(DMatrix::zeros(1, 1)),
        measurement_extra: DMatrix::zeros(1, 1),
        x0_true: DVector::from_element(1, cubic_true_state()),
        p0: DMatrix::from_element(1, 1, 1.5 * 1.5),
        initial_estimate: InitialEstimate::Fixed(DVector::zeros(1)),
        steps: 1,
    }
}
