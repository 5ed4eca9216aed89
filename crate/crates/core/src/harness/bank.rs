use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{check_dims, Result};
use crate::systems::{ProcessNoise, SystemSpec};

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    InitialState = 0,
    Process = 1,
    Measurement = 2,
    Input = 3,
}

/// 64-bit FNV-1a, used to key streams by system id.
pub fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// ChaCha20 keyed by `(master_seed, fnv1a64(system_id), run_index, tag)`, each
/// written little-endian into the 32-byte seed.
pub fn stream_rng(master_seed: u64, system_id: &str, run_index: u64, tag: u64) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&fnv1a64(system_id).to_le_bytes());
    seed[16..24].copy_from_slice(&run_index.to_le_bytes());
    seed[24..32].copy_from_slice(&tag.to_le_bytes());
    ChaCha20Rng::from_seed(seed)
}

/// Standard normal variates by Box-Muller over the raw 64-bit stream.
///
/// Each uniform is `(next_u64 >> 11) * 2^-53`; a pair `(u1, u2)` yields
/// `r cos(2 pi u2)` then `r sin(2 pi u2)` with `r = sqrt(-2 ln(1 - u1))`.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(rng: ChaCha20Rng) -> Self {
        Self { rng, spare: None }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.next_normal())
    }

    pub fn vectors(&mut self, count: usize, n: usize) -> Vec<DVector<f64>> {
        (0..count).map(|_| self.vector(n)).collect()
    }
}

/// Pregenerated standard-normal noise of one Monte Carlo run.
///
/// Every filter in a sweep consumes the same bank for a given run, and the bank does
/// not depend on the measurement noise level: measurement noise is stored with unit
/// variance and scaled at use.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    pub run_index: u64,
    /// Initial-estimate offset, shaped by a factor of `P0`.
    pub initial_state_draw: DVector<f64>,
    /// `process_noise[k-1]` drives the transition into step `k`.
    pub process_noise: Vec<DVector<f64>>,
    /// `measurement_noise_unit[k-1]` perturbs `z_k`.
    pub measurement_noise_unit: Vec<DVector<f64>>,
    /// `input_noise[k]` perturbs `u_k`, for `k = 0..=steps`; empty unless the
    /// system's process noise enters through its input.
    pub input_noise: Vec<DVector<f64>>,
}

impl NoiseBank {
    pub fn check_shape(&self, spec: &SystemSpec) -> Result<()> {
        check_dims(
            "noise bank: initial draw",
            (spec.n_x, 1),
            (self.initial_state_draw.len(), 1),
        )?;
        check_dims(
            "noise bank: process steps",
            (spec.steps, 1),
            (self.process_noise.len(), 1),
        )?;
        check_dims(
            "noise bank: measurement steps",
            (spec.steps, 1),
            (self.measurement_noise_unit.len(), 1),
        )?;
        for v in &self.process_noise {
            check_dims("noise bank: process sample", (spec.n_x, 1), (v.len(), 1))?;
        }
        for v in &self.measurement_noise_unit {
            check_dims(
                "noise bank: measurement sample",
                (spec.n_m, 1),
                (v.len(), 1),
            )?;
        }
        if let ProcessNoise::InputDriven { .. } = spec.process_noise {
            check_dims(
                "noise bank: input steps",
                (spec.steps + 1, 1),
                (self.input_noise.len(), 1),
            )?;
            for v in &self.input_noise {
                check_dims("noise bank: input sample", (spec.n_u, 1), (v.len(), 1))?;
            }
        }
        Ok(())
    }
}

pub fn make_noise_bank(master_seed: u64, spec: &SystemSpec, run_index: u64) -> NoiseBank {
    let id = spec.name.as_str();
    let stream =
        |tag: StreamTag| GaussianStream::new(stream_rng(master_seed, id, run_index, tag as u64));
    let input_noise = match spec.process_noise {
        ProcessNoise::InputDriven { .. } => {
            stream(StreamTag::Input).vectors(spec.steps + 1, spec.n_u)
        }
        ProcessNoise::Additive(_) => Vec::new(),
    };
    NoiseBank {
        run_index,
        initial_state_draw: stream(StreamTag::InitialState).vector(spec.n_x),
        process_noise: stream(StreamTag::Process).vectors(spec.steps, spec.n_x),
        measurement_noise_unit: stream(StreamTag::Measurement).vectors(spec.steps, spec.n_m),
        input_noise,
    }
}
