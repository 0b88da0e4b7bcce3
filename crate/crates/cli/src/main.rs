//! `msde` — simulate fast-slow SDE systems, estimate drift parameters, and
//! run Monte Carlo experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msde::averaging::{solve_limit_ode, InvariantAvgOptions};
use msde::estimate::{
    confidence_interval, fisher_information, mle, quasi_mle, theoretical_sd, OptimizerOptions,
};
use msde::model::{validate_model, CheckStatus, EpsilonPair, ProbeConfig};
use msde::registry;
use msde::simulate::{euler_maruyama, io as traj_io, SimWarning, TimeGrid};

use msde_cli::config::{EstimatorKind, ExperimentConfig};
use msde_cli::mc::{emit_report, run_monte_carlo, ExecOptions};
use msde_cli::HarnessError;

#[derive(Parser)]
#[command(name = "msde", version, about = "Fast-slow SDE simulation and drift estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write the binary container.
    Simulate(SimulateArgs),
    /// Estimate drift parameters from a trajectory file.
    Estimate(EstimateArgs),
    /// Run a replicated Monte Carlo experiment and emit report files.
    Mc(McArgs),
    /// Compute Fisher information and theoretical SDs at a parameter point.
    Fisher(FisherArgs),
    /// Run the sampling-based structural checks on a model.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in model name.
    #[arg(long)]
    model: String,
    /// Drift parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Horizon T.
    #[arg(long, default_value_t = 1.0, name = "T")]
    t_end: f64,
    /// Number of Euler steps.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record the Brownian increments in the container.
    #[arg(long)]
    record_noise: bool,
    /// Output path for the binary trajectory container.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV export path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: String,
    /// Trajectory container produced by `simulate`.
    #[arg(long)]
    traj: PathBuf,
    /// Which estimator(s) to run: mle, quasi, or both.
    #[arg(long, default_value = "mle")]
    estimator: String,
    /// Confidence levels for the reported intervals.
    #[arg(long, value_delimiter = ',', default_values_t = [0.68, 0.95])]
    ci_levels: Vec<f64>,
    /// Grid steps for the limit path behind the Fisher information.
    #[arg(long, default_value_t = 100)]
    fisher_grid: usize,
    /// Skip Fisher information / confidence intervals.
    #[arg(long)]
    no_fisher: bool,
    /// Output path for the result JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Experiment configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the model name.
    #[arg(long)]
    model: Option<String>,
    /// Override theta0 (comma separated).
    #[arg(long, value_delimiter = ',')]
    theta0: Option<Vec<f64>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Estimators to run: mle, quasi, or both.
    #[arg(long)]
    estimators: Option<String>,
    /// Worker threads (default: MSDE_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Skip replicates already present in the output directory.
    #[arg(long)]
    resume: bool,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FisherArgs {
    #[arg(long)]
    model: String,
    /// Parameter point, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1.0, name = "T")]
    t_end: f64,
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn lookup_model(name: &str) -> Result<msde::Model64, HarnessError> {
    registry::builtin::<f64>(name).ok_or_else(|| {
        HarnessError::Config(format!(
            "unknown model '{name}'; available: {}",
            registry::names().join(", ")
        ))
    })
}

fn describe_warning(w: &SimWarning) -> String {
    match w {
        SimWarning::Discretization { dt_over_delta } => format!(
            "DiscretizationWarning: dt/delta = {dt_over_delta:.3e} > 0.1, Euler error O(dt/delta) is not small"
        ),
        SimWarning::ScaleOrdering { eps, delta } => {
            format!("ScaleWarning: delta = {delta} exceeds eps = {eps}")
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), HarnessError> {
    let model = lookup_model(&args.model)?;
    let eps = EpsilonPair::new(args.eps, args.delta)?;
    let grid = TimeGrid::new(args.t_end, args.n)?;
    let traj = euler_maruyama(&model, &args.theta, &eps, &grid, args.seed, args.record_noise)?;
    traj_io::write_trajectory(&traj, &args.out)?;
    if let Some(csv) = &args.csv {
        traj_io::export_trajectory_csv(&traj, csv)?;
    }
    for w in traj.warnings() {
        eprintln!("{}", describe_warning(w));
    }
    println!(
        "wrote {} ({} steps, dt/delta = {:.3e}); final x = {:?}, y = {:?}",
        args.out.display(),
        traj.n_steps(),
        grid.dt() / args.delta,
        traj.final_x(),
        traj.final_y()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct EstimateOutput {
    model: String,
    eps: f64,
    delta: f64,
    results: Vec<msde::EstimatorResult64>,
    estimators: Vec<String>,
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), HarnessError> {
    let model = lookup_model(&args.model)?;
    let traj: msde::Trajectory64 = traj_io::read_trajectory(&args.traj)?;
    let kinds: Vec<EstimatorKind> = match args.estimator.as_str() {
        "both" => vec![EstimatorKind::Mle, EstimatorKind::QuasiMle],
        other => vec![EstimatorKind::parse(other).ok_or_else(|| {
            HarnessError::Config(format!("unknown estimator '{other}' (expected mle, quasi, or both)"))
        })?],
    };
    for &level in &args.ci_levels {
        if !(0.0 < level && level < 1.0) {
            return Err(HarnessError::Config(format!("ci level {level} outside (0,1)")));
        }
    }

    let opts = OptimizerOptions::default();
    let mut results = Vec::new();
    for kind in &kinds {
        let mut fit = match kind {
            EstimatorKind::Mle => mle(&model, &traj, &opts)?,
            EstimatorKind::QuasiMle => quasi_mle(&model, &traj, &opts)?,
        };
        if !args.no_fisher {
            // data-driven intervals: Fisher information evaluated at the
            // point estimate
            let grid = TimeGrid::new(traj.grid().t_end(), args.fisher_grid)?;
            let avg = InvariantAvgOptions::default();
            let lim = solve_limit_ode(&model, &fit.theta_hat, &grid, &avg)?;
            let fisher = fisher_information(&model, &fit.theta_hat, &lim, &avg)?;
            let mut ci = Vec::new();
            for &level in &args.ci_levels {
                let bounds = confidence_interval(&fit, &fisher, traj.eps().eps, level)?;
                ci.push(msde::estimate::ConfidenceInterval { level, bounds });
            }
            fit.fisher = Some(fisher);
            fit.ci = Some(ci);
        }
        println!(
            "{}: theta_hat = {:?} (objective {:.6}, {:?}, boundary: {})",
            kind, fit.theta_hat, fit.objective, fit.method, fit.on_boundary
        );
        results.push(fit);
    }

    let output = EstimateOutput {
        model: args.model.clone(),
        eps: traj.eps().eps,
        delta: traj.eps().delta,
        estimators: kinds.iter().map(|k| k.label().to_string()).collect(),
        results,
    };
    let json = serde_json::to_string_pretty(&output)?;
    match &args.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn thread_count(cli_threads: Option<usize>) -> usize {
    cli_threads
        .or_else(|| std::env::var("MSDE_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

fn cmd_mc(args: McArgs) -> Result<(), HarnessError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(model) = args.model {
        config.model = model;
    }
    if let Some(theta0) = args.theta0 {
        config.theta0 = theta0;
    }
    if let Some(eps) = args.eps {
        config.eps = eps;
    }
    if let Some(delta) = args.delta {
        config.delta = delta;
    }
    if let Some(replicates) = args.replicates {
        config.n_replicates = replicates;
    }
    if let Some(n) = args.n {
        config.n_steps = n;
    }
    if let Some(est) = &args.estimators {
        config.estimators = match est.as_str() {
            "both" => vec![EstimatorKind::Mle, EstimatorKind::QuasiMle],
            other => vec![EstimatorKind::parse(other).ok_or_else(|| {
                HarnessError::Config(format!("unknown estimator '{other}'"))
            })?],
        };
    }
    config.validate()?;

    let out_dir = args.out.clone().or_else(|| config.output_dir.clone());
    let exec = ExecOptions { threads: thread_count(args.threads), resume: args.resume };
    let report = run_monte_carlo(&config, &exec, out_dir.as_deref())?;
    if let Some(dir) = &out_dir {
        emit_report(&report, dir)?;
        println!("report written to {}", dir.display());
    }
    for est in &report.estimators {
        println!(
            "{}: mean = {:.4}, emp_sd = {}, theo_sd = {}",
            est.estimator,
            est.mean[0],
            est.emp_sd.as_ref().map(|s| format!("{:.4}", s[0])).unwrap_or_else(|| "n/a".into()),
            est.theo_sd.as_ref().map(|s| format!("{:.4}", s[0])).unwrap_or_else(|| "-".into()),
        );
    }
    println!(
        "{} replicates in {:.1}s ({} failed)",
        report.n_replicates_completed,
        report.runtime_seconds,
        report.failures.len()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct FisherOutput {
    model: String,
    theta: Vec<f64>,
    eps: f64,
    matrix: Vec<f64>,
    min_eigenvalue: f64,
    theoretical_sd: Vec<f64>,
}

fn cmd_fisher(args: FisherArgs) -> Result<(), HarnessError> {
    let model = lookup_model(&args.model)?;
    let grid = TimeGrid::new(args.t_end, args.grid)?;
    let avg = InvariantAvgOptions::default();
    let lim = solve_limit_ode(&model, &args.theta, &grid, &avg)?;
    let fisher = fisher_information(&model, &args.theta, &lim, &avg)?;
    let sds = theoretical_sd(&fisher, args.eps)?;
    println!(
        "I(theta) = {:?} (min eigenvalue {:.3e}); sqrt(eps * I^-1) diag = {:?}",
        fisher.matrix.as_slice(),
        fisher.min_eigenvalue,
        sds
    );
    let output = FisherOutput {
        model: args.model.clone(),
        theta: args.theta.clone(),
        eps: args.eps,
        matrix: fisher.matrix.as_slice().to_vec(),
        min_eigenvalue: fisher.min_eigenvalue,
        theoretical_sd: sds,
    };
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&output)?)?;
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), HarnessError> {
    let model = lookup_model(&args.model)?;
    let probe = ProbeConfig { seed: args.seed, ..ProbeConfig::default() };
    let report = validate_model(&model, &probe);
    for check in &report.checks {
        let tag = match check.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Warn => "WARN",
            CheckStatus::Fail => "FAIL",
        };
        println!("{tag:4} {:<18} {}", check.name, check.detail);
    }
    println!("overall: {}", if report.passed() { "pass" } else { "fail" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Fisher(args) => cmd_fisher(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
