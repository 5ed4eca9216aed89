use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::bank::{make_noise_bank, NoiseBank};
use crate::error::{FilterError, Result};
use crate::filter::{run_step, FrameworkMode, StateBelief, StepInputs};
use crate::propagators::{ekf_predict, iekf_update, MomentPropagator, PropagatorKind, UkfParams};
use crate::systems::{simulate_truth, SystemSpec, TruthTrajectory};

/// One filter variant of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterConfig {
    Moment {
        kind: PropagatorKind,
        mode: FrameworkMode,
    },
    /// Iterated EKF, conventional covariance update only.
    Iekf,
}

impl FilterConfig {
    pub fn filter_name(&self) -> &'static str {
        match self {
            FilterConfig::Moment { kind, .. } => kind.as_str(),
            FilterConfig::Iekf => "iekf",
        }
    }

    pub fn mode(&self) -> FrameworkMode {
        match self {
            FilterConfig::Moment { mode, .. } => *mode,
            FilterConfig::Iekf => FrameworkMode::Conventional,
        }
    }

    pub fn framework_name(&self) -> &'static str {
        self.mode().as_str()
    }

    /// Cartesian product of filter names and frameworks; `iekf` appears once, under
    /// the conventional framework.
    pub fn grid(filters: &[&str], frameworks: &[FrameworkMode]) -> Result<Vec<FilterConfig>> {
        let mut out = Vec::new();
        for name in filters {
            if *name == "iekf" {
                out.push(FilterConfig::Iekf);
                continue;
            }
            let kind: PropagatorKind = name.parse()?;
            for mode in frameworks {
                out.push(FilterConfig::Moment { kind, mode: *mode });
            }
        }
        if out.is_empty() {
            return Err(FilterError::InvalidConfig(
                "no filter configurations selected".into(),
            ));
        }
        Ok(out)
    }
}

impl std::fmt::Display for FilterConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.filter_name(), self.framework_name())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub system: SystemSpec,
    pub filters: Vec<FilterConfig>,
    pub sigmas: Vec<f64>,
    pub runs: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub parallel_workers: usize,
    pub ukf: UkfParams,
}

impl ExperimentSpec {
    pub fn new(
        system: SystemSpec,
        filters: Vec<FilterConfig>,
        sigmas: Vec<f64>,
        runs: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            system,
            filters,
            sigmas,
            runs,
            master_seed,
            parallel_workers: 0,
            ukf: UkfParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(FilterError::InvalidConfig("runs must be at least 1".into()));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(FilterError::InvalidConfig(
                "sigmas must be nonempty, finite and positive".into(),
            ));
        }
        if self.filters.is_empty() {
            return Err(FilterError::InvalidConfig(
                "no filter configurations selected".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    Diverged { step: usize, error: FilterError },
}

/// Trace of one filter over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub outcome: RunOutcome,
    /// `errors[k-1] = x_hat_{k|k} - x_k`, for the steps completed.
    pub errors: Vec<DVector<f64>>,
    pub final_cov_diag: DVector<f64>,
    pub backouts: usize,
    /// Wall-clock time summed over completed steps.
    pub step_time_ns: u128,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        !matches!(self.outcome, RunOutcome::Completed)
    }

    pub fn final_error(&self) -> Option<&DVector<f64>> {
        self.errors.last()
    }
}

fn build_propagator(config: &FilterConfig, ukf: UkfParams) -> Option<Box<dyn MomentPropagator>> {
    match config {
        FilterConfig::Moment { kind, .. } => Some(kind.build(ukf)),
        FilterConfig::Iekf => None,
    }
}

fn filter_trajectory(
    spec: &SystemSpec,
    config: &FilterConfig,
    prop: Option<&dyn MomentPropagator>,
    truth: &TruthTrajectory,
    initial: StateBelief,
    sigma: f64,
) -> RunRecord {
    let r = spec.measurement_cov(sigma);
    let mut belief = initial;
    let mut errors = Vec::with_capacity(spec.steps);
    let mut backouts = 0;
    let mut step_time_ns = 0u128;
    for k in 1..=spec.steps {
        let inputs = StepInputs {
            k,
            u_prev: &truth.inputs[k - 1],
            u: &truth.inputs[k],
            z: &truth.measurements[k - 1],
            r: &r,
        };
        let started = Instant::now();
        let step = match prop {
            Some(p) => run_step(spec, p, config.mode(), &belief, inputs),
            None => ekf_predict(spec, &belief, inputs.u_prev, k)
                .and_then(|prior| iekf_update(spec, prior, inputs)),
        };
        step_time_ns += started.elapsed().as_nanos();
        let record = match step {
            Ok(rec) if rec.posterior.is_finite() => rec,
            Ok(_) => {
                return diverged(
                    errors,
                    &belief,
                    backouts,
                    step_time_ns,
                    k,
                    FilterError::NonFiniteEstimate { step: k },
                )
            }
            Err(e) => return diverged(errors, &belief, backouts, step_time_ns, k, e),
        };
        backouts += usize::from(record.backed_out);
        belief = record.posterior;
        errors.push(&belief.mean - &truth.states[k - 1]);
    }
    RunRecord {
        outcome: RunOutcome::Completed,
        errors,
        final_cov_diag: belief.cov.diagonal(),
        backouts,
        step_time_ns,
    }
}

fn diverged(
    errors: Vec<DVector<f64>>,
    belief: &StateBelief,
    backouts: usize,
    step_time_ns: u128,
    step: usize,
    error: FilterError,
) -> RunRecord {
    RunRecord {
        outcome: RunOutcome::Diverged { step, error },
        errors,
        final_cov_diag: belief.cov.diagonal(),
        backouts,
        step_time_ns,
    }
}

/// Simulates the truth of `bank`'s run and filters it with `config`.
pub fn run_filter_once(
    spec: &SystemSpec,
    config: &FilterConfig,
    ukf: UkfParams,
    bank: &NoiseBank,
    sigma: f64,
) -> Result<RunRecord> {
    let truth = simulate_truth(spec, bank, sigma)?;
    let prop = build_propagator(config, ukf);
    Ok(filter_trajectory(
        spec,
        config,
        prop.as_deref(),
        &truth,
        spec.initial_belief(bank),
        sigma,
    ))
}

/// Aggregate statistics of one `(filter, sigma)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigResult {
    pub config: FilterConfig,
    pub sigma: f64,
    /// Per-state RMSE of the final-step error over non-diverged runs.
    pub rmse_final: Vec<f64>,
    /// Per-state `sqrt(mean P_jj)` of the final posterior.
    pub estimated_rmse: Vec<f64>,
    /// `rmse_by_iteration[k-1][j]`: RMSE of state `j` after step `k`.
    pub rmse_by_iteration: Vec<Vec<f64>>,
    pub mean_step_time_ns: f64,
    /// Back-outs per completed step.
    pub backout_rate: f64,
    pub divergence_count: usize,
    pub runs: usize,
}

impl ConfigResult {
    pub fn completed_runs(&self) -> usize {
        self.runs - self.divergence_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub system: String,
    pub runs: usize,
    pub seed: u64,
    /// Sigma-major, then in the order of the spec's filters.
    pub entries: Vec<ConfigResult>,
}

impl SweepResult {
    pub fn get(&self, config: &FilterConfig, sigma: f64) -> Option<&ConfigResult> {
        self.entries
            .iter()
            .find(|e| e.config == *config && e.sigma == sigma)
    }
}

fn rms(sum_sq: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (sum_sq / n as f64).sqrt()
    }
}

fn aggregate(
    spec: &SystemSpec,
    config: FilterConfig,
    sigma: f64,
    records: &[&RunRecord],
) -> ConfigResult {
    let n_x = spec.n_x;
    let ok: Vec<&RunRecord> = records.iter().copied().filter(|r| !r.diverged()).collect();
    let mut final_sq = vec![0.0; n_x];
    let mut cov_sum = vec![0.0; n_x];
    let mut by_iter = vec![vec![0.0; n_x]; spec.steps];
    let mut total_ns = 0u128;
    let mut backouts = 0usize;
    for r in &ok {
        for (k, e) in r.errors.iter().enumerate() {
            for j in 0..n_x {
                by_iter[k][j] += e[j] * e[j];
            }
        }
        let last = r.errors.last().expect("completed run has steps");
        for j in 0..n_x {
            final_sq[j] += last[j] * last[j];
            cov_sum[j] += r.final_cov_diag[j];
        }
        total_ns += r.step_time_ns;
        backouts += r.backouts;
    }
    let n = ok.len();
    let step_count = (n * spec.steps) as f64;
    ConfigResult {
        config,
        sigma,
        rmse_final: final_sq.iter().map(|s| rms(*s, n)).collect(),
        estimated_rmse: cov_sum.iter().map(|s| rms(*s, n)).collect(),
        rmse_by_iteration: by_iter
            .iter()
            .map(|row| row.iter().map(|s| rms(*s, n)).collect())
            .collect(),
        mean_step_time_ns: if n == 0 {
            f64::NAN
        } else {
            total_ns as f64 / step_count
        },
        backout_rate: if n == 0 {
            f64::NAN
        } else {
            backouts as f64 / step_count
        },
        divergence_count: records.len() - n,
        runs: records.len(),
    }
}

fn sweep_sigma(
    spec: &ExperimentSpec,
    props: &[Option<Box<dyn MomentPropagator>>],
    sigma: f64,
) -> Vec<Vec<RunRecord>> {
    let system = &spec.system;
    (0..spec.runs)
        .into_par_iter()
        .map(|run| {
            let bank = make_noise_bank(spec.master_seed, system, run as u64);
            match simulate_truth(system, &bank, sigma) {
                Ok(truth) => spec
                    .filters
                    .iter()
                    .zip(props)
                    .map(|(config, prop)| {
                        filter_trajectory(
                            system,
                            config,
                            prop.as_deref(),
                            &truth,
                            system.initial_belief(&bank),
                            sigma,
                        )
                    })
                    .collect(),
                Err(e) => {
                    let failed = diverged(Vec::new(), &system.initial_belief(&bank), 0, 0, 0, e);
                    vec![failed; spec.filters.len()]
                }
            }
        })
        .collect()
}

/// Every filter on every run at every sigma, all filters of a run sharing one
/// truth trajectory. Aggregation is in run order, so results do not depend on the
/// worker count (timings aside).
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let props: Vec<Option<Box<dyn MomentPropagator>>> = spec
        .filters
        .iter()
        .map(|c| build_propagator(c, spec.ukf))
        .collect();
    let body = || {
        let mut entries = Vec::with_capacity(spec.sigmas.len() * spec.filters.len());
        for &sigma in &spec.sigmas {
            let per_run = sweep_sigma(spec, &props, sigma);
            for (i, config) in spec.filters.iter().enumerate() {
                let records: Vec<&RunRecord> = per_run.iter().map(|r| &r[i]).collect();
                entries.push(aggregate(&spec.system, *config, sigma, &records));
            }
        }
        entries
    };
    let entries = if spec.parallel_workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.parallel_workers)
            .build()
            .map_err(|e| FilterError::InvalidConfig(format!("worker pool: {e}")))?
            .install(body)
    } else {
        body()
    };
    Ok(SweepResult {
        system: spec.system.name.clone(),
        runs: spec.runs,
        seed: spec.master_seed,
        entries,
    })
}
