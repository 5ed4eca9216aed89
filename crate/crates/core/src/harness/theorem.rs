//! Monte Carlo checks of the two covariance results.
//!
//! Both draw noisy moment estimates `(S~, P~_xy)` around the true `(S, P_xy)`: `S~` is
//! Wishart with `E[S~] = S` and `P~_xy = P_xy + noise_scale * G` with `G` iid standard
//! normal. The gain is always formed from the noisy estimates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{check_dims, FilterError, Result};
use crate::filter::kalman_gain;
use crate::linalg::{lower_factor, min_eigenvalue, spectral_norm, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingControls {
    pub noise_scale: f64,
    /// Wishart degrees of freedom; `None` leaves `S~ = S` exactly.
    pub dof: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplingControls {
    fn default() -> Self {
        Self {
            noise_scale: 0.3,
            dof: Some(8.0),
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    /// Sample mean of `P_ac - P_est`.
    pub mean_gap: DMatrix<f64>,
    pub min_eig: f64,
    /// Delete-one jackknife standard error of `min_eig`.
    pub stderr: f64,
    /// Absolute slack for rounding when the gap is identically zero.
    pub rounding_floor: f64,
}

impl Theorem1Report {
    /// Mean gap positive semidefinite at three standard errors.
    pub fn holds(&self) -> bool {
        self.min_eig >= -3.0 * self.stderr - self.rounding_floor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Report {
    /// Sample mean of `P_new - P_ac`.
    pub mean_bias: DMatrix<f64>,
    pub norm: f64,
    /// Delete-one jackknife standard error of `norm`.
    pub stderr: f64,
    pub rounding_floor: f64,
}

impl Theorem2Report {
    /// Mean bias indistinguishable from zero at three standard errors.
    pub fn holds(&self) -> bool {
        self.norm <= 3.0 * self.stderr + self.rounding_floor
    }
}

/// Wishart draw with `dof` degrees of freedom and mean `s`, via the Bartlett
/// decomposition `L A A^T L^T` with `L L^T = s / dof`.
pub fn sample_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    s: &DMatrix<f64>,
    dof: f64,
) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    if dof.is_nan() || dof <= p as f64 - 1.0 {
        return Err(FilterError::InvalidConfig(format!(
            "Wishart dof {dof} must exceed dimension - 1 = {}",
            p as f64 - 1.0
        )));
    }
    let l = lower_factor(&(s / dof))?;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(dof - i as f64)
            .map_err(|e| FilterError::InvalidConfig(format!("chi-square: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = l * a;
    Ok(symmetrize(&(&la * la.transpose())))
}

struct Draw {
    s: DMatrix<f64>,
    p_xy: DMatrix<f64>,
}

fn draw<R: Rng + ?Sized>(
    rng: &mut R,
    p_xy: &DMatrix<f64>,
    s: &DMatrix<f64>,
    c: &SamplingControls,
) -> Result<Draw> {
    let s_tilde = match c.dof {
        Some(dof) if dof.is_finite() => sample_wishart(rng, s, dof)?,
        _ => s.clone(),
    };
    let noise = DMatrix::from_fn(p_xy.nrows(), p_xy.ncols(), |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        g
    });
    Ok(Draw {
        s: s_tilde,
        p_xy: p_xy + noise * c.noise_scale,
    })
}

fn validate(p_xy: &DMatrix<f64>, s: &DMatrix<f64>, c: &SamplingControls) -> Result<()> {
    check_dims("theorem: S", (p_xy.ncols(), p_xy.ncols()), s.shape())?;
    if c.samples < 2 {
        return Err(FilterError::InsufficientSamples {
            required: 2,
            found: c.samples,
        });
    }
    if !(c.noise_scale >= 0.0 && c.noise_scale.is_finite()) {
        return Err(FilterError::InvalidConfig(
            "noise scale must be finite and nonnegative".into(),
        ));
    }
    if let Some(dof) = c.dof {
        if dof.is_nan() || dof <= s.nrows() as f64 - 1.0 {
            return Err(FilterError::InvalidConfig(format!(
                "dof {dof} must exceed n_m - 1 = {}",
                s.nrows() as f64 - 1.0
            )));
        }
    }
    if lower_factor(s).is_err() || min_eigenvalue(s) <= 0.0 {
        return Err(FilterError::InvalidConfig(
            "S must be symmetric positive definite".into(),
        ));
    }
    Ok(())
}

/// Delete-one jackknife of `stat(mean of samples)`.
fn jackknife<F>(samples: &[DMatrix<f64>], mean: &DMatrix<f64>, stat: F) -> f64
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let n = samples.len() as f64;
    let total = mean * n;
    let loo: Vec<f64> = samples
        .iter()
        .map(|g| stat(&((&total - g) / (n - 1.0))))
        .collect();
    let avg = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt()
}

fn mean_of(samples: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(samples[0].nrows(), samples[0].ncols());
    for g in samples {
        acc += g;
    }
    acc / samples.len() as f64
}

fn rounding_floor(p_xy: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let k = kalman_gain(p_xy, s)?;
    Ok(1e-12 * spectral_norm(&(&k * s * k.transpose())).max(1.0))
}

/// Mean of `P_ac - P_est = K~ S K~^T - P_xy K~^T - K~ P_xy^T + K~ S~ K~^T` with
/// `K~ = P~_xy S~^-1`.
pub fn theorem1_check(
    p_xy: &DMatrix<f64>,
    s: &DMatrix<f64>,
    controls: &SamplingControls,
) -> Result<Theorem1Report> {
    validate(p_xy, s, controls)?;
    let mut rng = ChaCha20Rng::seed_from_u64(controls.seed);
    let mut gaps = Vec::with_capacity(controls.samples);
    for _ in 0..controls.samples {
        let d = draw(&mut rng, p_xy, s, controls)?;
        let k = kalman_gain(&d.p_xy, &d.s)?;
        let kt = k.transpose();
        let cross = p_xy * &kt;
        gaps.push(symmetrize(
            &(&k * s * &kt - &cross - cross.transpose() + &k * &d.s * &kt),
        ));
    }
    let mean_gap = mean_of(&gaps);
    Ok(Theorem1Report {
        min_eig: min_eigenvalue(&mean_gap),
        stderr: jackknife(&gaps, &mean_gap, min_eigenvalue),
        mean_gap,
        rounding_floor: rounding_floor(p_xy, s)?,
    })
}

/// Mean of `P_new - P_ac`, where `P_new` evaluates the general update with a second
/// draw `(S~2, P~xy2)`. With `correlated` the second draw is the first one reused,
/// which breaks the independence the result relies on.
pub fn theorem2_check(
    p_xy: &DMatrix<f64>,
    s: &DMatrix<f64>,
    controls: &SamplingControls,
    correlated: bool,
) -> Result<Theorem2Report> {
    validate(p_xy, s, controls)?;
    let mut update_rng = ChaCha20Rng::seed_from_u64(controls.seed);
    let mut recal_rng = ChaCha20Rng::seed_from_u64(controls.seed);
    recal_rng.set_stream(1);
    let mut biases = Vec::with_capacity(controls.samples);
    for _ in 0..controls.samples {
        let d1 = draw(&mut update_rng, p_xy, s, controls)?;
        let d2 = if correlated {
            Draw {
                s: d1.s.clone(),
                p_xy: d1.p_xy.clone(),
            }
        } else {
            draw(&mut recal_rng, p_xy, s, controls)?
        };
        let k = kalman_gain(&d1.p_xy, &d1.s)?;
        let kt = k.transpose();
        let cross = (&d2.p_xy - p_xy) * &kt;
        biases.push(symmetrize(
            &(&k * (&d2.s - s) * &kt - &cross - cross.transpose()),
        ));
    }
    let mean_bias = mean_of(&biases);
    Ok(Theorem2Report {
        norm: spectral_norm(&mean_bias),
        stderr: jackknife(&biases, &mean_bias, spectral_norm),
        mean_bias,
        rounding_floor: rounding_floor(p_xy, s)?,
    })
}

/// Random `(P_xy, S)` with `S` well-conditioned positive definite.
pub fn random_moments(n_x: usize, n_m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let a = DMatrix::from_fn(n_m, n_m, |_, _| normal());
    let s = symmetrize(&(&a * a.transpose() + DMatrix::identity(n_m, n_m) * n_m as f64));
    let p_xy = DMatrix::from_fn(n_x, n_m, |_, _| normal());
    (p_xy, s)
}
