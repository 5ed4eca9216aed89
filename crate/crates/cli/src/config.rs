use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nlkf::harness::{ExperimentSpec, FilterConfig, SamplingControls};
use nlkf::propagators::UkfParams;
use nlkf::{FrameworkMode, SystemId};
use serde::Deserialize;

pub const DEFAULT_SIGMAS: &str = "1e-4..1e1:log:11";

#[derive(Debug, Parser)]
#[command(name = "nlkf", version, about = "Nonlinear Kalman filter experiments")]
pub struct Cli {
    /// TOML file whose `[sweep]`, `[theorem]` and `[demo-cubic]` tables mirror the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo RMSE sweep over measurement noise levels, written as CSV.
    Sweep(SweepArgs),
    /// Monte Carlo check of the covariance-gap results.
    Theorem(TheoremArgs),
    /// Single update of the cubic measurement example.
    DemoCubic(DemoArgs),
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepArgs {
    #[arg(long)]
    pub system: Option<String>,
    /// Comma-separated: ekf, ekf2, ukf, ckf, iekf.
    #[arg(long)]
    pub filters: Option<String>,
    /// Comma-separated: old, new.
    #[arg(long)]
    pub frameworks: Option<String>,
    /// `lo..hi:log:n`, `lo..hi:lin:n` or a comma-separated list.
    #[arg(long)]
    pub sigmas: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "NLKF_WORKERS")]
    pub workers: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a log-log SVG plot of `rmse_actual` against sigma.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// State index drawn in the plot.
    #[arg(long)]
    pub plot_state: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TheoremArgs {
    /// 1: the conventional update is overconfident; 2: the recalibrated one is unbiased.
    #[arg(long)]
    pub which: Option<u8>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Wishart degrees of freedom, or `inf` for `S~ = S`.
    #[arg(long)]
    pub dof: Option<String>,
    #[arg(long)]
    pub n_x: Option<usize>,
    #[arg(long)]
    pub n_m: Option<usize>,
    /// Reuse the update-step draw for recalibration (theorem 2 only).
    #[arg(long)]
    #[serde(default)]
    pub correlated: bool,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DemoArgs {
    #[arg(long)]
    pub sigma_y: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    #[serde(default)]
    sweep: SweepArgs,
    #[serde(default)]
    theorem: TheoremArgs,
    #[serde(default)]
    demo_cubic: DemoArgs,
}

/// Failure before any computation; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn usage<E: std::fmt::Display>(e: E) -> UsageError {
    UsageError(e.to_string())
}

pub struct Defaults {
    sweep: SweepArgs,
    theorem: TheoremArgs,
    demo: DemoArgs,
}

pub fn load_defaults(path: Option<&Path>) -> Result<Defaults, UsageError> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
            toml::from_str::<ConfigFile>(&text)
                .map_err(|e| UsageError(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    Ok(Defaults {
        sweep: file.sweep,
        theorem: file.theorem,
        demo: file.demo_cubic,
    })
}

/// Parses `lo..hi:log:n`, `lo..hi:lin:n` or `a,b,c`.
pub fn parse_sigma_grid(text: &str) -> Result<Vec<f64>, UsageError> {
    let bad = || {
        UsageError(format!(
            "invalid sigma grid '{text}'; expected lo..hi:log:n or a comma list"
        ))
    };
    let sigmas = if let Some((range, rest)) = text.split_once(':') {
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let (scale, n) = rest.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        let at = |t: f64| match scale {
            "log" => Ok((lo.ln() + t * (hi.ln() - lo.ln())).exp()),
            "lin" => Ok(lo + t * (hi - lo)),
            _ => Err(bad()),
        };
        if n == 1 {
            vec![at(0.0)?]
        } else {
            (0..n)
                .map(|i| match i {
                    0 => at(0.0).map(|_| lo),
                    i if i == n - 1 => at(1.0).map(|_| hi),
                    i => at(i as f64 / (n - 1) as f64),
                })
                .collect::<Result<_, _>>()?
        }
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if sigmas.is_empty() || sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(UsageError(format!(
            "sigma grid '{text}' must contain finite positive values"
        )));
    }
    Ok(sigmas)
}

fn split_list(text: &str) -> Vec<&str> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

pub struct SweepPlan {
    pub spec: ExperimentSpec,
    pub output: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub plot_state: usize,
}

pub fn resolve_sweep(args: SweepArgs, defaults: Defaults) -> Result<SweepPlan, UsageError> {
    let d = defaults.sweep;
    let system_name = args.system.or(d.system).ok_or_else(|| {
        UsageError(format!(
            "--system is required; valid ids: {}",
            nlkf::systems::valid_system_ids().join(", ")
        ))
    })?;
    let system: SystemId = system_name.parse().map_err(usage)?;
    let filters = args
        .filters
        .or(d.filters)
        .unwrap_or_else(|| "ekf,ekf2,ukf,ckf,iekf".into());
    let frameworks = args
        .frameworks
        .or(d.frameworks)
        .unwrap_or_else(|| "old,new".into());
    let modes: Vec<FrameworkMode> = split_list(&frameworks)
        .into_iter()
        .map(|s| s.parse().map_err(usage))
        .collect::<Result<_, _>>()?;
    let configs = FilterConfig::grid(&split_list(&filters), &modes).map_err(usage)?;
    let sigmas = parse_sigma_grid(
        &args
            .sigmas
            .or(d.sigmas)
            .unwrap_or_else(|| DEFAULT_SIGMAS.into()),
    )?;
    let runs = args.runs.or(d.runs).unwrap_or(500);
    let seed = args.seed.or(d.seed).unwrap_or(0);
    let mut ukf = UkfParams::default();
    ukf.alpha = args.alpha.or(d.alpha).unwrap_or(ukf.alpha);
    ukf.beta = args.beta.or(d.beta).unwrap_or(ukf.beta);
    ukf.kappa = args.kappa.or(d.kappa).unwrap_or(ukf.kappa);
    let spec_system = system.build();
    let plot_state = args.plot_state.or(d.plot_state).unwrap_or(0);
    if plot_state >= spec_system.n_x {
        return Err(UsageError(format!(
            "--plot-state {plot_state} out of range for {system} ({} states)",
            spec_system.n_x
        )));
    }
    let mut spec = ExperimentSpec::new(spec_system, configs, sigmas, runs, seed);
    spec.parallel_workers = args.workers.or(d.workers).unwrap_or(0);
    spec.ukf = ukf;
    spec.validate().map_err(usage)?;
    Ok(SweepPlan {
        spec,
        output: args.output.or(d.output),
        plot: args.plot.or(d.plot),
        plot_state,
    })
}

pub struct TheoremPlan {
    pub which: u8,
    pub n_x: usize,
    pub n_m: usize,
    pub controls: SamplingControls,
    pub correlated: bool,
}

fn parse_dof(text: &str) -> Result<Option<f64>, UsageError> {
    match text.trim() {
        "inf" | "infinity" | "none" => Ok(None),
        s => s
            .parse::<f64>()
            .map(|v| if v.is_infinite() { None } else { Some(v) })
            .map_err(|_| UsageError(format!("invalid --dof '{text}'; expected a number or inf"))),
    }
}

pub fn resolve_theorem(args: TheoremArgs, defaults: Defaults) -> Result<TheoremPlan, UsageError> {
    let d = defaults.theorem;
    let which = args.which.or(d.which).unwrap_or(1);
    if !matches!(which, 1 | 2) {
        return Err(UsageError(format!("--which must be 1 or 2, got {which}")));
    }
    let base = SamplingControls::default();
    let dof = match args.dof.or(d.dof) {
        Some(t) => parse_dof(&t)?,
        None => base.dof,
    };
    let controls = SamplingControls {
        noise_scale: args
            .noise_scale
            .or(d.noise_scale)
            .unwrap_or(base.noise_scale),
        dof,
        samples: args.samples.or(d.samples).unwrap_or(base.samples),
        seed: args.seed.or(d.seed).unwrap_or(base.seed),
    };
    let n_x = args.n_x.or(d.n_x).unwrap_or(1);
    let n_m = args.n_m.or(d.n_m).unwrap_or(1);
    if n_x == 0 || n_m == 0 {
        return Err(UsageError("--n-x and --n-m must be positive".into()));
    }
    let correlated = args.correlated || d.correlated;
    if correlated && which != 2 {
        return Err(UsageError("--correlated applies to --which 2 only".into()));
    }
    Ok(TheoremPlan {
        which,
        n_x,
        n_m,
        controls,
        correlated,
    })
}

pub fn resolve_demo(args: DemoArgs, defaults: Defaults) -> Result<f64, UsageError> {
    let sigma = args.sigma_y.or(defaults.demo.sigma_y).unwrap_or(0.01);
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(UsageError(format!(
            "--sigma-y must be finite and positive, got {sigma}"
        )));
    }
    Ok(sigma)
}
