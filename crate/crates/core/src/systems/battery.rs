use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InitialEstimate, ProcessNoise, SystemId, SystemModel, SystemSpec};
use crate::error::{FilterError, Result};

/// OCV polynomial coefficients at 100 % state of health, highest SOC power first.
pub const A100: [f64; 10] = [
    1390.38, -6961.31, 14760.31, -17230.92, 12055.71, -5162.75, 1330.60, -196.37, 15.60, 2.96,
];
/// OCV polynomial coefficients at 80 % state of health, highest SOC power first.
pub const A80: [f64; 10] = [
    813.94, -4229.96, 9345.49, -11415.38, 8396.15, -3801.07, 1043.09, -165.29, 14.28, 2.96,
];

const R1: f64 = 0.01;
const R2: f64 = 0.05;
const INV_TAU: f64 = 0.008;
const CAPACITY_AH: f64 = 1.0;
const DT: f64 = 1.0;
const CURRENT_STD: f64 = 1e-3;

fn blend(soh: f64) -> [f64; 10] {
    let w80 = (1.0 - soh) / 0.2;
    let w100 = 1.0 - w80;
    std::array::from_fn(|i| w100 * A100[i] + w80 * A80[i])
}

/// Value, dSOC, dSOH, d2SOC, dSOC dSOH of a degree-9 polynomial whose coefficients
/// are linear in SOH (so the SOH curvature is zero).
pub fn ocv_partials(soc: f64, soh: f64) -> [f64; 5] {
    let c = blend(soh);
    let dc: [f64; 10] = std::array::from_fn(|i| (A100[i] - A80[i]) / 0.2);
    let (mut v, mut ds, mut dh, mut dss, mut dsh) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..10 {
        let p = (9 - i) as i32;
        let pf = p as f64;
        v += c[i] * soc.powi(p);
        dh += dc[i] * soc.powi(p);
        if p >= 1 {
            ds += c[i] * pf * soc.powi(p - 1);
            dsh += dc[i] * pf * soc.powi(p - 1);
        }
        if p >= 2 {
            dss += c[i] * pf * (pf - 1.0) * soc.powi(p - 2);
        }
    }
    [v, ds, dh, dss, dsh]
}

/// Open-circuit voltage, blending the two coefficient sets by state of health.
pub fn ocv(soc: f64, soh: f64) -> f64 {
    blend(soh).iter().fold(0.0, |acc, c| acc * soc + c)
}

/// [`ocv`] that reports blends outside `[0.8, 1.0]` (the value is still computed).
pub fn ocv_checked(soc: f64, soh: f64) -> Result<f64> {
    let volts = ocv(soc, soh);
    if (0.8..=1.0).contains(&soh) {
        Ok(volts)
    } else {
        Err(FilterError::OutOfBlendRange { soh, volts })
    }
}

/// First-order RC equivalent circuit with states `(SOC, U_c, SOH)` and the current
/// as the single input (positive = charging).
#[derive(Debug, Clone, Default)]
pub struct BatteryModel;

impl BatteryModel {
    /// Three-level square wave current profile in amperes.
    pub fn current(k: usize) -> f64 {
        match k {
            16..=75 => -2.0,
            106..=165 => 2.0,
            _ => 0.0,
        }
    }

    fn decay() -> f64 {
        (-DT * INV_TAU).exp()
    }
}

impl SystemModel for BatteryModel {
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> DVector<f64> {
        let (soc, uc, soh) = (x[0], x[1], x[2]);
        let i = u[0];
        let e = Self::decay();
        DVector::from_vec(vec![
            soc + DT * i / (3600.0 * CAPACITY_AH * soh),
            uc * e + (1.0 - e) * R2 * i,
            soh,
        ])
    }

    fn measurement(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, ocv(x[0], x[2]) + x[1] + R1 * u[0])
    }

    fn input(&self, k: usize) -> DVector<f64> {
        DVector::from_element(1, Self::current(k))
    }

    fn transition_jacobian(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let soh = x[2];
        let i = u[0];
        let mut f = DMatrix::identity(3, 3);
        f[(0, 2)] = -DT * i / (3600.0 * CAPACITY_AH * soh * soh);
        f[(1, 1)] = Self::decay();
        Some(f)
    }

    fn transition_hessians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let soh = x[2];
        let mut h_soc = DMatrix::zeros(3, 3);
        h_soc[(2, 2)] = 2.0 * DT * u[0] / (3600.0 * CAPACITY_AH * soh.powi(3));
        Some(vec![h_soc, DMatrix::zeros(3, 3), DMatrix::zeros(3, 3)])
    }

    fn measurement_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        let [_, ds, dh, _, _] = ocv_partials(x[0], x[2]);
        Some(DMatrix::from_row_slice(1, 3, &[ds, 1.0, dh]))
    }

    fn measurement_hessians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<Vec<DMatrix<f64>>> {
        let [_, _, _, dss, dsh] = ocv_partials(x[0], x[2]);
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 0)] = dss;
        h[(0, 2)] = dsh;
        h[(2, 0)] = dsh;
        Some(vec![h])
    }

    fn input_jacobian(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _k: usize,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_column_slice(
            3,
            1,
            &[
                DT / (3600.0 * CAPACITY_AH * x[2]),
                (1.0 - Self::decay()) * R2,
                0.0,
            ],
        ))
    }
}

/// Current noise is the only process noise; it also reaches the terminal voltage
/// through `R1 I`, which the filter accounts for in `R`.
pub fn build_battery() -> SystemSpec {
    SystemSpec {
        name: SystemId::Battery.as_str().into(),
        n_x: 3,
        n_m: 1,
        n_u: 1,
        model: Arc::new(BatteryModel),
        process_noise: ProcessNoise::InputDriven {
            input_std: DVector::from_element(1, CURRENT_STD),
        },
        measurement_extra: DMatrix::from_element(1, 1, (R1 * CURRENT_STD).powi(2)),
        x0_true: DVector::from_vec(vec![0.60, 0.0, 0.90]),
        p0: DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 1e-10, 0.01])),
        initial_estimate: InitialEstimate::Fixed(DVector::from_vec(vec![0.80, 0.0, 1.00])),
        steps: 180,
    }
}
