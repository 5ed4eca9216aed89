//! Monte Carlo experiments and statistical checks of the covariance-gap results.

mod bank;
mod demo;
mod stats;
mod sweep;
mod theorem;

pub use bank::{fnv1a64, make_noise_bank, stream_rng, GaussianStream, NoiseBank, StreamTag};
pub use demo::{cubic_demo, CubicDemoRow};
pub use stats::{
    consistency_stats, timing_profile, ConsistencyRow, TimingRow, MIN_CONSISTENCY_RUNS,
};
pub use sweep::{
    run_filter_once, run_sweep, ConfigResult, ExperimentSpec, FilterConfig, RunOutcome, RunRecord,
    SweepResult,
};
pub use theorem::{
    random_moments, sample_wishart, theorem1_check, theorem2_check, SamplingControls,
    Theorem1Report, Theorem2Report,
};
