use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::derivatives::jacobian_fd;
use super::*;
use crate::filter::{run_step, update_from_prior, FrameworkMode, StepInputs};
use crate::systems::{
    build_cubic_demo, build_pendulum, build_terrain, build_tracking3d, cubic_true_state,
    CubicModel, InitialEstimate, ProcessNoise, SystemModel, SystemSpec,
};

type ScalarFn = fn(f64) -> f64;

/// Scalar system from plain functions; derivatives fall back to finite differences
/// when absent.
struct Scalar {
    f: ScalarFn,
    h: ScalarFn,
    dh: Option<ScalarFn>,
    d2h: Option<ScalarFn>,
}

/// Linear dynamics `f(x) = x` with exact derivatives, so second-order corrections
/// vanish instead of picking up finite-difference noise.
struct Still(Scalar);

impl SystemModel for Still {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        x.clone()
    }
    fn measurement(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DVector<f64> {
        self.0.measurement(x, u, k)
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
        u: &DVector<f64>,
        k: usize,
    ) -> Option<DMatrix<f64>> {
        self.0.measurement_jacobian(x, u, k)
    }
    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        self.0.measurement_hessians(x, u, k)
    }
}

impl SystemModel for Scalar {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, (self.f)(x[0]))
    }
    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, (self.h)(x[0]))
    }
    fn input(&self, _k: usize) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn measurement_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        self.dh.map(|d| DMatrix::from_element(1, 1, d(x[0])))
    }
    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        self.d2h.map(|d| vec![DMatrix::from_element(1, 1, d(x[0]))])
    }
}

fn scalar_spec(model: impl SystemModel + 'static, q: f64) -> SystemSpec {
    SystemSpec {
        name: "scalar".into(),
        n_x: 1,
        n_m: 1,
        n_u: 0,
        model: Arc::new(model),
        process_noise: ProcessNoise::Additive(DMatrix::from_element(1, 1, q)),
        measurement_extra: DMatrix::zeros(1, 1),
        x0_true: DVector::zeros(1),
        p0: DMatrix::identity(1, 1),
        initial_estimate: InitialEstimate::Fixed(DVector::zeros(1)),
        steps: 1,
    }
}

fn square() -> SystemSpec {
    scalar_spec(
        Scalar {
            f: |x| x,
            h: |x| x * x,
            dh: Some(|x| 2.0 * x),
            d2h: Some(|_| 2.0),
        },
        0.0,
    )
}

fn identity() -> SystemSpec {
    scalar_spec(
        Still(Scalar {
            f: |x| x,
            h: |x| x,
            dh: Some(|_| 1.0),
            d2h: Some(|_| 0.0),
        }),
        0.0,
    )
}

/// 2-D affine dynamics and measurement with exact derivatives.
struct Affine2;

impl Affine2 {
    fn a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 1.0])
    }
    fn c() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.0, 0.5])
    }
}

impl SystemModel for Affine2 {
    fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_vec(vec![0.9 * x[0] + 0.2 * x[1] + 1.0, -0.1 * x[0] + x[1]])
    }
    fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_vec(vec![2.0 * x[0] - x[1] + 3.0, 0.5 * x[1] - 1.0])
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
        Some(Self::a())
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
        Some(Self::c())
    }
    fn measurement_hessians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(2, 2); 2])
    }
}

fn affine2() -> SystemSpec {
    SystemSpec {
        name: "affine2".into(),
        n_x: 2,
        n_m: 2,
        n_u: 0,
        model: Arc::new(Affine2),
        process_noise: ProcessNoise::Additive(DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.01, 0.02,
        ]))),
        measurement_extra: DMatrix::zeros(2, 2),
        x0_true: DVector::zeros(2),
        p0: DMatrix::identity(2, 2),
        initial_estimate: InitialEstimate::Fixed(DVector::zeros(2)),
        steps: 1,
    }
}

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn v1(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn ctx<'a>(u: &'a DVector<f64>, r: &'a DMatrix<f64>) -> MeasurementContext<'a> {
    MeasurementContext { u, k: 1, r }
}

fn alpha_one() -> UkfParams {
    UkfParams {
        alpha: 1.0,
        beta: 2.0,
        kappa: 0.0,
    }
}

fn all_props() -> Vec<Box<dyn MomentPropagator>> {
    PropagatorKind::ALL
        .iter()
        .map(|k| k.build(UkfParams::default()))
        .collect()
}

fn assert_moments_close(a: &MeasurementMoments, b: &MeasurementMoments, tol: f64) {
    assert_relative_eq!(a.y_hat, b.y_hat, epsilon = tol, max_relative = tol);
    assert_relative_eq!(a.p_y, b.p_y, epsilon = tol, max_relative = tol);
    assert_relative_eq!(a.p_xy, b.p_xy, epsilon = tol, max_relative = tol);
    assert_relative_eq!(a.s, b.s, epsilon = tol, max_relative = tol);
}

#[test]
fn ekf_moment_examples() {
    let u = DVector::zeros(0);
    let r = m1(0.0);
    let m = ekf_moments(&identity(), &v1(0.3), &m1(2.0), &ctx(&u, &r)).unwrap();
    assert_relative_eq!(m.p_y[(0, 0)], 2.0, epsilon = 1e-9);
    assert_relative_eq!(m.p_xy[(0, 0)], 2.0, epsilon = 1e-9);

    let m = ekf_moments(&square(), &v1(1.0), &m1(0.25), &ctx(&u, &r)).unwrap();
    assert_eq!(m.y_hat[0], 1.0);
    assert_eq!(m.p_y[(0, 0)], 1.0);
    assert_eq!(m.p_xy[(0, 0)], 0.5);
}

#[test]
fn terrain_jacobian_matches_finite_difference() {
    let sys = build_terrain();
    let x = DVector::from_vec(vec![10.0, 10.0]);
    let u = sys.input(1);
    let h = derivatives::measurement_jacobian(&sys, &x, &u, 1).unwrap();
    let fd = jacobian_fd(|xx| sys.model.measurement(xx, &u, 1), &x);
    assert_relative_eq!(h, fd, max_relative = 1e-6);
}

#[test]
fn ekf2_moment_examples() {
    let u = DVector::zeros(0);
    let r = m1(0.0);
    let m = ekf2_moments(&square(), &v1(0.0), &m1(1.0), &ctx(&u, &r)).unwrap();
    assert_eq!((m.y_hat[0], m.p_y[(0, 0)], m.p_xy[(0, 0)]), (1.0, 2.0, 0.0));

    let m = ekf2_moments(&square(), &v1(1.0), &m1(0.25), &ctx(&u, &r)).unwrap();
    assert_relative_eq!(m.y_hat[0], 1.25, epsilon = 1e-15);
    assert_relative_eq!(m.p_y[(0, 0)], 1.125, epsilon = 1e-15);
    assert_relative_eq!(m.p_xy[(0, 0)], 0.5, epsilon = 1e-15);

    // Without analytic Hessians the fallback differences values of h.
    let fd_square = scalar_spec(
        Scalar {
            f: |x| x,
            h: |x| x * x,
            dh: None,
            d2h: None,
        },
        0.0,
    );
    let m = ekf2_moments(&fd_square, &v1(1.0), &m1(0.25), &ctx(&u, &r)).unwrap();
    assert_relative_eq!(m.y_hat[0], 1.25, epsilon = 1e-6);
    assert_relative_eq!(m.p_y[(0, 0)], 1.125, epsilon = 1e-6);
}

#[test]
fn ekf2_reduces_to_ekf_for_affine_maps() {
    let sys = affine2();
    let u = DVector::zeros(0);
    let r = DMatrix::identity(2, 2) * 0.1;
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let x = DVector::from_vec(vec![0.4, -1.2]);
    let a = ekf_moments(&sys, &x, &p, &ctx(&u, &r)).unwrap();
    let b = ekf2_moments(&sys, &x, &p, &ctx(&u, &r)).unwrap();
    assert_moments_close(&a, &b, 1e-6);
}

#[test]
fn ekf2_predict_examples() {
    let sq = scalar_spec(
        Scalar {
            f: |x| x * x,
            h: |x| x,
            dh: None,
            d2h: None,
        },
        0.1,
    );
    let belief = StateBelief::new(v1(0.0), m1(1.0));
    let u = DVector::zeros(0);
    let pred = ekf2_predict(&sq, &belief, &u, 1).unwrap();
    assert_relative_eq!(pred.mean[0], 1.0, epsilon = 1e-6);
    assert_relative_eq!(pred.cov[(0, 0)], 2.1, epsilon = 1e-6);

    let pend = build_pendulum();
    let p = DMatrix::from_diagonal(&DVector::from_vec(vec![
        (std::f64::consts::PI / 18.0)
            .powi(2);
        2
    ]));
    let x = DVector::from_vec(vec![0.0, std::f64::consts::FRAC_PI_4]);
    let belief = StateBelief::new(x.clone(), p.clone());
    let u = pend.input(0);
    let first = ekf_predict(&pend, &belief, &u, 1).unwrap();
    let second = ekf2_predict(&pend, &belief, &u, 1).unwrap();
    let (g, l, dt) = (9.8, 1.0, 0.01);
    let expected = -(g / l) * dt * 0.5 * (-x[1].sin()) * p[(1, 1)];
    assert_relative_eq!(
        second.mean[0] - first.mean[0],
        expected,
        max_relative = 1e-9
    );
}

#[test]
fn ukf_weight_examples() {
    let w = ukf_weights(2, &UkfParams::default()).unwrap();
    assert_relative_eq!(w.lambda, 2e-6 - 2.0, max_relative = 1e-12);
    assert_relative_eq!(w.w_mean[0], -999_999.0, max_relative = 1e-9);
    assert_relative_eq!(w.w_mean[1], 250_000.0, max_relative = 1e-9);
    assert_eq!(w.w_mean.len(), 5);
    assert!(w.w_mean[1..].iter().zip(&w.w_cov[1..]).all(|(a, b)| a == b));

    let w = ukf_weights(3, &alpha_one()).unwrap();
    assert_eq!(w.lambda, 0.0);
    assert_eq!(w.w_mean[0], 0.0);
    assert_eq!(w.w_mean[1], 1.0 / 6.0);

    assert!(matches!(
        ukf_weights(
            2,
            &UkfParams {
                alpha: 0.0,
                ..UkfParams::default()
            }
        ),
        Err(FilterError::DegenerateScaling(_))
    ));
    assert!(matches!(
        ukf_weights(
            1,
            &UkfParams {
                alpha: 1.0,
                beta: 2.0,
                kappa: -1.0
            }
        ),
        Err(FilterError::DegenerateScaling(_))
    ));
}

#[test]
fn ukf_square_with_unit_alpha() {
    // n_x = 1, lambda = 0: points {0, +-1} with W_0 = 0 and W_i = 1/2.
    let u = DVector::zeros(0);
    let r = m1(0.0);
    let (m, carry) =
        ukf_moments(&square(), &v1(0.0), &m1(1.0), &ctx(&u, &r), &alpha_one()).unwrap();
    assert_eq!(m.y_hat[0], 1.0);
    assert_eq!(m.p_xy[(0, 0)], 0.0);
    match carry {
        Carryover::Sigma { set, .. } => {
            let pts: Vec<f64> = set.points().map(|p| p[0]).collect();
            assert_eq!(pts, vec![0.0, 1.0, -1.0]);
        }
        Carryover::Empty => panic!("ukf must carry its sigma set"),
    }
}

#[test]
fn ukf_tracks_ekf2_on_terrain() {
    let sys = build_terrain();
    let u = sys.input(1);
    let r = sys.measurement_cov(0.01);
    let x = DVector::from_vec(vec![10.0, 10.0]);
    let p = DMatrix::identity(2, 2);
    let (a, _) = ukf_moments(&sys, &x, &p, &ctx(&u, &r), &UkfParams::default()).unwrap();
    let b = ekf2_moments(&sys, &x, &p, &ctx(&u, &r)).unwrap();
    assert_relative_eq!(a.p_y[(0, 0)], b.p_y[(0, 0)], max_relative = 0.1);
}

#[test]
fn ckf_examples() {
    let sys = affine2();
    let u = DVector::zeros(0);
    let r = DMatrix::identity(2, 2);
    let x = DVector::from_vec(vec![1.0, 2.0]);
    let (_, carry) = ckf_moments(&sys, &x, &DMatrix::identity(2, 2), &ctx(&u, &r)).unwrap();
    let Carryover::Sigma { set, .. } = carry else {
        panic!("ckf keeps its cubature set")
    };
    let s2 = 2f64.sqrt();
    let expected = [
        DVector::from_vec(vec![1.0 + s2, 2.0]),
        DVector::from_vec(vec![1.0, 2.0 + s2]),
        DVector::from_vec(vec![1.0 - s2, 2.0]),
        DVector::from_vec(vec![1.0, 2.0 - s2]),
    ];
    for (p, e) in set.points().zip(expected.iter()) {
        assert_relative_eq!(p, *e, epsilon = 1e-15);
    }
    assert_eq!(set.w_mean, vec![0.25; 4]);

    let r1 = m1(0.0);
    let (m, _) = ckf_moments(&square(), &v1(0.0), &m1(1.0), &ctx(&u, &r1)).unwrap();
    assert_eq!((m.y_hat[0], m.p_y[(0, 0)], m.p_xy[(0, 0)]), (1.0, 0.0, 0.0));
}

#[test]
fn affine_collapse_across_propagators() {
    let sys = affine2();
    let u = DVector::zeros(0);
    let r = DMatrix::identity(2, 2) * 0.05;
    let p = DMatrix::from_row_slice(2, 2, &[2.0, -0.4, -0.4, 0.7]);
    let x = DVector::from_vec(vec![-0.3, 0.8]);
    let belief = StateBelief::new(x.clone(), p.clone());
    let reference = ekf_moments(&sys, &x, &p, &ctx(&u, &r)).unwrap();
    let ref_pred = ekf_predict(&sys, &belief, &u, 1).unwrap();
    for prop in all_props() {
        let (m, _) = prop
            .measurement_moments(&sys, &x, &p, &ctx(&u, &r))
            .unwrap();
        assert_moments_close(&m, &reference, 1e-8);
        let pred = prop.predict(&sys, &belief, &u, 1).unwrap();
        assert_relative_eq!(pred.mean, ref_pred.mean, epsilon = 1e-8);
        assert_relative_eq!(pred.cov, ref_pred.cov, epsilon = 1e-8);
    }
}

#[test]
fn tracking_prediction_agrees_across_propagators() {
    let sys = build_tracking3d();
    let belief = StateBelief::new(sys.x0_true.clone(), sys.p0.clone());
    let u = sys.input(0);
    let reference = ekf_predict(&sys, &belief, &u, 1).unwrap();
    for prop in all_props() {
        let pred = prop.predict(&sys, &belief, &u, 1).unwrap();
        assert_relative_eq!(
            pred.mean,
            reference.mean,
            epsilon = 1e-10,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            pred.cov,
            reference.cov,
            epsilon = 1e-10,
            max_relative = 1e-10
        );
    }
}

#[test]
fn identity_dynamics_without_noise_keep_belief() {
    let sys = identity();
    let belief = StateBelief::new(v1(0.7), m1(0.2));
    let u = DVector::zeros(0);
    for prop in all_props() {
        let pred = prop.predict(&sys, &belief, &u, 1).unwrap();
        assert_relative_eq!(pred.mean, belief.mean, epsilon = 1e-14);
        assert_relative_eq!(pred.cov, belief.cov, epsilon = 1e-12);
    }
}

#[test]
fn pendulum_sigma_point_predictions_agree() {
    let sys = build_pendulum();
    let belief = StateBelief::new(sys.x0_true.clone(), DMatrix::identity(2, 2) * 1e-6);
    let u = sys.input(0);
    let a = ukf_predict(&sys, &belief, &u, 1, &UkfParams::default()).unwrap();
    let b = ckf_predict(&sys, &belief, &u, 1).unwrap();
    assert_relative_eq!(a.mean, b.mean, epsilon = 1e-6);
}

#[test]
fn ukf_recalibration_examples() {
    let u = DVector::zeros(0);
    let r = m1(0.01);
    let sys = square();
    let x = v1(0.6);
    let p = m1(0.3);
    let c = ctx(&u, &r);
    let params = UkfParams::default();
    let (m, carry) = ukf_moments(&sys, &x, &p, &c, &params).unwrap();
    let k = m1(0.5);
    let same = ukf_recalibrate(&sys, &carry, &k, &v1(0.0), &x, &p, &c, &params).unwrap();
    assert_eq!(same, m);

    let aff = affine2();
    let r2 = DMatrix::identity(2, 2) * 0.1;
    let c2 = ctx(&u, &r2);
    let x2 = DVector::from_vec(vec![0.2, 0.1]);
    let p2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.4]);
    let (m2, carry2) = ukf_moments(&aff, &x2, &p2, &c2, &params).unwrap();
    let k2 = DMatrix::from_row_slice(2, 2, &[0.3, -0.1, 0.05, 0.2]);
    let resid = DVector::from_vec(vec![1.5, -0.7]);
    let moved = &x2 + &k2 * &resid;
    let recal = ukf_recalibrate(&aff, &carry2, &k2, &resid, &moved, &p2, &c2, &params).unwrap();
    assert_relative_eq!(recal.p_y, m2.p_y, epsilon = 1e-8);
    assert_relative_eq!(recal.p_xy, m2.p_xy, epsilon = 1e-8);
}

#[test]
fn cubic_recalibration_inflates_innovation() {
    let sys = build_cubic_demo();
    let prior = StateBelief::new(v1(0.0), sys.p0.clone());
    let z = v1(CubicModel::h(cubic_true_state()));
    let r = m1(1e-4);
    let u = DVector::zeros(0);
    let inputs = StepInputs {
        k: 1,
        u_prev: &u,
        u: &u,
        z: &z,
        r: &r,
    };
    for prop in all_props() {
        let rec = update_from_prior(
            &sys,
            prop.as_ref(),
            FrameworkMode::Recalibrated,
            prior.clone(),
            inputs,
        )
        .unwrap();
        let recal = rec.moments_recal.as_ref().unwrap();
        if prop.name() == "ukf" {
            assert!(recal.s[(0, 0)] > rec.moments_pred.s[(0, 0)], "ukf S");
        }
        assert!(rec.backed_out, "{} should back out", prop.name());
        assert_eq!(rec.posterior, prior);
    }
}

#[test]
fn iekf_linear_measurement_matches_ekf() {
    let sys = affine2();
    let prior = StateBelief::new(DVector::from_vec(vec![0.5, -0.5]), DMatrix::identity(2, 2));
    let z = DVector::from_vec(vec![4.0, -1.0]);
    let r = DMatrix::identity(2, 2) * 0.2;
    let u = DVector::zeros(0);
    let inputs = StepInputs {
        k: 1,
        u_prev: &u,
        u: &u,
        z: &z,
        r: &r,
    };
    let (rec, report) = iekf_update_report(&sys, prior.clone(), inputs).unwrap();
    let ekf = update_from_prior(&sys, &Ekf, FrameworkMode::Conventional, prior, inputs).unwrap();
    assert_eq!(report.iterations, 2);
    assert!(report.converged && !report.diverged);
    assert_relative_eq!(rec.posterior.mean, ekf.posterior.mean, epsilon = 1e-8);
    assert_relative_eq!(rec.posterior.cov, ekf.posterior.cov, epsilon = 1e-8);
}

/// `h(x) = x^2` observed nearly noise-free: the iterates approach the root of
/// `h(x) = z` and stop once the relative step falls below the threshold.
#[test]
fn iekf_iterates_to_measurement_root() {
    let sys = square();
    let prior = StateBelief::new(v1(1.0), m1(0.01));
    let r = m1(1e-6);
    let z = v1(1.21);
    let u = DVector::zeros(0);
    let inputs = StepInputs {
        k: 1,
        u_prev: &u,
        u: &u,
        z: &z,
        r: &r,
    };
    let (rec, report) = iekf_update_report(&sys, prior, inputs).unwrap();
    assert!(report.converged);
    assert!(
        report.iterations >= 2 && report.iterations < 10,
        "{report:?}"
    );
    assert_relative_eq!(rec.posterior.mean[0], 1.1, max_relative = 1e-3);
}

#[test]
fn iekf_is_overconfident_on_cubic() {
    let sys = build_cubic_demo();
    let truth = cubic_true_state();
    let prior = StateBelief::new(v1(0.0), sys.p0.clone());
    let z = v1(CubicModel::h(truth));
    let r = m1(1e-4);
    let u = DVector::zeros(0);
    let inputs = StepInputs {
        k: 1,
        u_prev: &u,
        u: &u,
        z: &z,
        r: &r,
    };
    let rec = iekf_update(&sys, prior, inputs).unwrap();
    let err = (rec.posterior.mean[0] - truth).abs();
    assert!(
        rec.posterior.cov[(0, 0)] < err * err,
        "P {} err {}",
        rec.posterior.cov[(0, 0)],
        err
    );
}

#[test]
fn recalibrated_equals_conventional_for_linear_measurement() {
    let sys = affine2();
    let belief = StateBelief::new(
        DVector::from_vec(vec![0.1, 0.2]),
        DMatrix::identity(2, 2) * 0.8,
    );
    let z = DVector::from_vec(vec![2.0, 0.0]);
    let r = DMatrix::identity(2, 2) * 0.3;
    let u = DVector::zeros(0);
    let inputs = StepInputs {
        k: 1,
        u_prev: &u,
        u: &u,
        z: &z,
        r: &r,
    };
    for prop in all_props() {
        let a = run_step(
            &sys,
            prop.as_ref(),
            FrameworkMode::Conventional,
            &belief,
            inputs,
        )
        .unwrap();
        let b = run_step(
            &sys,
            prop.as_ref(),
            FrameworkMode::Recalibrated,
            &belief,
            inputs,
        )
        .unwrap();
        assert!(!b.backed_out);
        assert_relative_eq!(a.posterior.mean, b.posterior.mean, epsilon = 1e-10);
        assert_relative_eq!(a.posterior.cov, b.posterior.cov, epsilon = 1e-10);
    }
}

/// Sample moments of `(x, x^2)` under `x ~ N(mu, var)`, with the standard error of
/// each statistic.
fn monte_carlo_square(mu: f64, var: f64, n: usize) -> [(f64, f64); 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sd = var.sqrt();
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            mu + sd * g
        })
        .collect();
    let nf = n as f64;
    let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let my = ys.iter().sum::<f64>() / nf;
    let mx = xs.iter().sum::<f64>() / nf;
    let dy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let dx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let vy = dy.iter().map(|d| d * d).sum::<f64>() / nf;
    let cxy = dx.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>() / nf;
    let se = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / nf;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf / nf).sqrt()
    };
    [
        (my, (vy / nf).sqrt()),
        (vy, se(dy.iter().map(|d| d * d).collect())),
        (cxy, se(dx.iter().zip(&dy).map(|(a, b)| a * b).collect())),
    ]
}

#[test]
fn quadratic_moments_match_monte_carlo_oracle() {
    let (mu, var) = (0.7, 0.5);
    let oracle = monte_carlo_square(mu, var, 1_000_000);
    let u = DVector::zeros(0);
    let r = m1(0.0);
    let c = ctx(&u, &r);
    let sys = square();
    let x = v1(mu);
    let p = m1(var);
    let within = |name: &str, got: [f64; 3]| {
        for (i, ((o, se), g)) in oracle.iter().zip(got).enumerate() {
            assert!(
                (o - g).abs() <= 4.0 * se,
                "{name} stat {i}: oracle {o} +- {se}, got {g}"
            );
        }
    };
    let stats = |m: &MeasurementMoments| [m.y_hat[0], m.p_y[(0, 0)], m.p_xy[(0, 0)]];
    within("ekf2", stats(&ekf2_moments(&sys, &x, &p, &c).unwrap()));
    within(
        "ukf",
        stats(
            &ukf_moments(&sys, &x, &p, &c, &UkfParams::default())
                .unwrap()
                .0,
        ),
    );

    // The cubature rule integrates the mean and cross term exactly but misses the
    // fourth-moment part of Var[x^2] = 4 mu^2 var + 2 var^2.
    let (ckf, _) = ckf_moments(&sys, &x, &p, &c).unwrap();
    within(
        "ckf",
        [
            ckf.y_hat[0],
            ckf.p_y[(0, 0)] + 2.0 * var * var,
            ckf.p_xy[(0, 0)],
        ],
    );
    assert_relative_eq!(ckf.p_y[(0, 0)], 4.0 * mu * mu * var, max_relative = 1e-12);
}

#[test]
fn sigma_sets_are_symmetric() {
    let center = DVector::from_vec(vec![3.0, -1.0, 0.25]);
    let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
    let u = DVector::zeros(0);
    let r = DMatrix::identity(2, 2);
    struct Lin3;
    impl SystemModel for Lin3 {
        fn transition(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
            x.clone()
        }
        fn measurement(&self, x: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> DVector<f64> {
            DVector::from_vec(vec![x[0] + x[1], x[2]])
        }
        fn input(&self, _k: usize) -> DVector<f64> {
            DVector::zeros(0)
        }
    }
    let sys = SystemSpec {
        name: "lin3".into(),
        n_x: 3,
        n_m: 2,
        n_u: 0,
        model: Arc::new(Lin3),
        process_noise: ProcessNoise::Additive(DMatrix::zeros(3, 3)),
        measurement_extra: DMatrix::zeros(2, 2),
        x0_true: center.clone(),
        p0: p.clone(),
        initial_estimate: InitialEstimate::SampledFromP0,
        steps: 1,
    };
    let sets = [
        ukf_moments(&sys, &center, &p, &ctx(&u, &r), &UkfParams::default())
            .unwrap()
            .1,
        ukf_moments(&sys, &center, &p, &ctx(&u, &r), &alpha_one())
            .unwrap()
            .1,
        ckf_moments(&sys, &center, &p, &ctx(&u, &r)).unwrap().1,
    ];
    for carry in sets {
        let Carryover::Sigma { set, .. } = carry else {
            panic!("sigma carryover")
        };
        assert!(set.offset_mean().amax() <= 1e-12);
        let pts: Vec<DVector<f64>> = set.points().collect();
        let mean = sigma::weighted_mean_about(&pts, &set.center, &set.w_mean);
        // Rounding of the points themselves is amplified by the largest weight.
        let tol = 1e-15 * set.w_mean.iter().fold(1.0f64, |m, w| m.max(w.abs())) * center.amax();
        assert_relative_eq!(mean, center, epsilon = tol.max(1e-12));
        let wmax = set.w_mean.iter().fold(1.0f64, |m, w| m.max(w.abs()));
        assert_relative_eq!(set.w_mean.iter().sum::<f64>(), 1.0, epsilon = 1e-12 * wmax);
        let n = set.offsets.len();
        let first = usize::from(n % 2 == 1);
        let half = (n - first) / 2;
        for i in 0..half {
            assert_eq!(set.offsets[first + i], -&set.offsets[first + half + i]);
        }
    }
}

#[test]
fn kind_round_trip() {
    for kind in PropagatorKind::ALL {
        assert_eq!(kind.as_str().parse::<PropagatorKind>().unwrap(), kind);
        assert_eq!(kind.build(UkfParams::default()).name(), kind.as_str());
    }
    assert!("kf".parse::<PropagatorKind>().is_err());
}

proptest! {
    #[test]
    fn ukf_weights_sum_to_one(n in 1usize..12, alpha in 1e-4f64..2.0, beta in 0.0f64..3.0, kappa in 0.0f64..3.0) {
        let w = ukf_weights(n, &UkfParams { alpha, beta, kappa }).unwrap();
        let sum: f64 = w.w_mean.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12 * w.w_mean[1].abs().max(1.0));
        prop_assert_eq!(w.w_mean.len(), 2 * n + 1);
        prop_assert!((w.w_mean[1] - 1.0 / (2.0 * w.spread)).abs() <= 1e-12 * w.w_mean[1]);
        prop_assert!((w.spread - (n as f64 + w.lambda)).abs() <= 1e-12 * n as f64);
    }

    #[test]
    fn ckf_weights_sum_to_one(n in 1usize..9) {
        let w = vec![1.0 / (2 * n) as f64; 2 * n];
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 2.0 * n as f64 * f64::EPSILON);
    }

    #[test]
    fn backout_bounds_trace_for_every_propagator(mu in -3.0f64..3.0, var in 0.01f64..4.0, z in -5.0f64..5.0, r in 1e-4f64..1.0) {
        let sys = square();
        let prior = StateBelief::new(v1(mu), m1(var));
        let zv = v1(z);
        let rm = m1(r);
        let u = DVector::zeros(0);
        let inputs = StepInputs { k: 1, u_prev: &u, u: &u, z: &zv, r: &rm };
        for prop in all_props() {
            if let Ok(rec) = update_from_prior(&sys, prop.as_ref(), FrameworkMode::Recalibrated, prior.clone(), inputs) {
                prop_assert!(rec.posterior.trace() <= prior.trace());
                if rec.backed_out {
                    prop_assert_eq!(&rec.posterior, &prior);
                }
            }
        }
    }
}
