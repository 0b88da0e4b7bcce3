//! Replicated Monte Carlo experiments: simulate, estimate, aggregate, emit.
//!
//! Replicate `i` draws from the stream derived from `(master_seed, i)`, so
//! results are independent of execution order and thread count; aggregation
//! walks replicates in index order. Completed replicates are appended to a
//! `progress.csv` in the output directory, which `--resume` consults to
//! skip work already done. Summary columns (and the histogram) refer to the
//! first parameter coordinate; all coordinates appear in `report.json`.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use msde::averaging::solve_limit_ode;
use msde::estimate::{
    fisher_information, linear_suff_stats, mle, quasi_mle, solve_normal_equations, theoretical_sd,
    OptimizerOptions,
};
use msde::model::MultiscaleModel;
use msde::registry;
use msde::rng::replicate_seed;
use msde::simulate::{euler_maruyama, TimeGrid};
use msde::stats;
use msde::EpsilonPair64;

use crate::config::{EstimatorKind, ExperimentConfig};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateEstimate {
    pub replicate: u64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateFailure {
    pub replicate: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CiRow {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub bin_lo: Vec<f64>,
    pub bin_hi: Vec<f64>,
    pub count: Vec<u64>,
    /// N(θ₀, ϵ·I⁻¹(θ₀)) density at each bin midpoint (first coordinate).
    pub theo_density_mid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorReport {
    pub estimator: EstimatorKind,
    pub estimates: Vec<ReplicateEstimate>,
    pub mean: Vec<f64>,
    /// `None` with a single replicate (emitted as null / empty fields).
    pub emp_sd: Option<Vec<f64>>,
    /// Normal-based intervals around the mean using the empirical SD.
    pub ci: Vec<CiRow>,
    /// √(ϵ (I⁻¹)_ii) at θ₀; populated for the MLE only.
    pub theo_sd: Option<Vec<f64>>,
    pub histogram: Option<Histogram>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub estimators: Vec<EstimatorReport>,
    pub n_replicates_completed: usize,
    pub failures: Vec<ReplicateFailure>,
    /// Fisher information matrix at θ₀ (row-major).
    pub fisher_at_theta0: Vec<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Copy)]
#[derive(Default)]
pub struct ExecOptions {
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
    /// Reuse completed replicates found in the output directory.
    pub resume: bool,
}


type ReplicateValues = Vec<(EstimatorKind, Vec<f64>)>;

fn run_replicate(
    model: &MultiscaleModel<f64>,
    config: &ExperimentConfig,
    grid: &TimeGrid<f64>,
    eps: &EpsilonPair64,
    index: u64,
) -> std::result::Result<ReplicateValues, String> {
    let seed = replicate_seed(config.master_seed, index);
    let traj = euler_maruyama(model, &config.theta0, eps, grid, seed, false)
        .map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(config.estimators.len());
    if model.is_linear_in_theta() {
        // one pass over the path serves both estimators
        let stats = linear_suff_stats(model, &traj).map_err(|e| e.to_string())?;
        for kind in &config.estimators {
            let with_corr = matches!(kind, EstimatorKind::Mle);
            let (theta, _) =
                solve_normal_equations(&stats, model.param_domain(), with_corr).map_err(|e| e.to_string())?;
            out.push((*kind, theta));
        }
    } else {
        let opts = OptimizerOptions::default();
        for kind in &config.estimators {
            let fit = match kind {
                EstimatorKind::Mle => mle(model, &traj, &opts),
                EstimatorKind::QuasiMle => quasi_mle(model, &traj, &opts),
            }
            .map_err(|e| e.to_string())?;
            out.push((*kind, fit.theta_hat));
        }
    }
    Ok(out)
}

fn progress_path(dir: &Path) -> PathBuf {
    dir.join("progress.csv")
}

struct ProgressLog {
    values: HashMap<u64, HashMap<&'static str, Vec<f64>>>,
    failures: HashMap<u64, String>,
}

fn parse_progress(path: &Path) -> Result<ProgressLog> {
    let mut log = ProgressLog { values: HashMap::new(), failures: HashMap::new() };
    if !path.exists() {
        return Ok(log);
    }
    let text = std::fs::read_to_string(path)?;
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (Some(rep), Some(kind), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            continue; // torn tail line from an interrupted run
        };
        let Ok(rep) = rep.parse::<u64>() else { continue };
        if kind == "!failed" {
            log.failures.insert(rep, value.to_string());
            continue;
        }
        let Some(kind) = EstimatorKind::parse(kind) else { continue };
        let values: Option<Vec<f64>> = value.split(';').map(|v| v.parse::<f64>().ok()).collect();
        let Some(values) = values else { continue };
        log.values.entry(rep).or_default().insert(kind.label(), values);
    }
    Ok(log)
}

fn format_values(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

/// Run the full experiment: replicate simulations and estimates, Fisher
/// information at θ₀, and aggregation into an [`McReport`].
pub fn run_monte_carlo(
    config: &ExperimentConfig,
    exec: &ExecOptions,
    out_dir: Option<&Path>,
) -> Result<McReport> {
    config.validate()?;
    let started = Instant::now();
    let model = registry::builtin::<f64>(&config.model)
        .ok_or_else(|| HarnessError::Config(format!("unknown model '{}'", config.model)))?;
    let grid = TimeGrid::new(config.t_end, config.n_steps).map_err(HarnessError::from)?;
    let eps = EpsilonPair64::new(config.eps, config.delta).map_err(HarnessError::from)?;

    // Fisher information at theta0 once, for theoretical SDs and densities
    let fisher_grid = TimeGrid::new(config.t_end, config.fisher_grid_steps).map_err(HarnessError::from)?;
    let avg_opts = config.averaging.to_options();
    let lim = solve_limit_ode(&model, &config.theta0, &fisher_grid, &avg_opts).map_err(HarnessError::from)?;
    let fisher = fisher_information(&model, &config.theta0, &lim, &avg_opts).map_err(HarnessError::from)?;
    let theo_sd_vec = theoretical_sd(&fisher, config.eps).map_err(HarnessError::from)?;

    // previously completed replicates
    let resumed = match (exec.resume, out_dir) {
        (true, Some(dir)) => parse_progress(&progress_path(dir))?,
        _ => ProgressLog { values: HashMap::new(), failures: HashMap::new() },
    };
    let wanted: Vec<&'static str> = config.estimators.iter().map(|k| k.label()).collect();
    let is_complete = |rep: &u64| -> bool {
        resumed.failures.contains_key(rep)
            || resumed
                .values
                .get(rep)
                .map(|m| wanted.iter().all(|k| m.contains_key(k)))
                .unwrap_or(false)
    };
    let todo: Vec<u64> = (0..config.n_replicates as u64).filter(|rep| !is_complete(rep)).collect();

    let progress_writer: Option<Mutex<BufWriter<std::fs::File>>> = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = progress_path(dir);
            let fresh = !(exec.resume && path.exists());
            let file = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
            let mut w = BufWriter::new(file);
            if fresh {
                // truncate any stale progress from a non-resumed run
                drop(w);
                let file = std::fs::File::create(&path)?;
                w = BufWriter::new(file);
                writeln!(w, "replicate,estimator,value")?;
                w.flush()?;
            }
            Some(Mutex::new(w))
        }
        None => None,
    };

    let compute = |rep: &u64| -> (u64, std::result::Result<ReplicateValues, String>) {
        let outcome = run_replicate(&model, config, &grid, &eps, *rep);
        if let Some(writer) = &progress_writer {
            let mut w = writer.lock().expect("progress writer poisoned");
            match &outcome {
                Ok(values) => {
                    for (kind, theta) in values {
                        let _ = writeln!(w, "{rep},{},{}", kind.label(), format_values(theta));
                    }
                }
                Err(msg) => {
                    let _ = writeln!(w, "{rep},!failed,{}", msg.replace(',', ";"));
                }
            }
            let _ = w.flush();
        }
        (*rep, outcome)
    };

    let fresh_results: Vec<(u64, std::result::Result<ReplicateValues, String>)> = if exec.threads == 1 {
        todo.iter().map(compute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(exec.threads)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| todo.par_iter().map(compute).collect())
    };

    // merge resumed + fresh, indexed by replicate
    let mut per_estimator: HashMap<&'static str, Vec<ReplicateEstimate>> =
        wanted.iter().map(|k| (*k, Vec::new())).collect();
    let mut failures: Vec<ReplicateFailure> = Vec::new();
    let fresh: HashMap<u64, std::result::Result<ReplicateValues, String>> =
        fresh_results.into_iter().collect();
    for rep in 0..config.n_replicates as u64 {
        if let Some(outcome) = fresh.get(&rep) {
            match outcome {
                Ok(values) => {
                    for (kind, theta) in values {
                        per_estimator.get_mut(kind.label()).expect("known estimator").push(
                            ReplicateEstimate { replicate: rep, value: theta.clone() },
                        );
                    }
                }
                Err(msg) => failures.push(ReplicateFailure { replicate: rep, message: msg.clone() }),
            }
        } else if let Some(msg) = resumed.failures.get(&rep) {
            failures.push(ReplicateFailure { replicate: rep, message: msg.clone() });
        } else if let Some(values) = resumed.values.get(&rep) {
            for k in &wanted {
                per_estimator.get_mut(k).expect("known estimator").push(ReplicateEstimate {
                    replicate: rep,
                    value: values[k].clone(),
                });
            }
        }
    }

    let n_failed = failures.len();
    if n_failed * 100 > config.n_replicates {
        let first = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(HarnessError::TooManyFailures { failed: n_failed, total: config.n_replicates, first });
    }
    let n_completed = config.n_replicates - n_failed;

    let dim = config.theta0.len();
    let mut estimator_reports = Vec::new();
    for kind in &config.estimators {
        let estimates = per_estimator.remove(kind.label()).expect("known estimator");
        let n = estimates.len();
        let mut mean = vec![0.0f64; dim];
        for e in &estimates {
            for (m, v) in mean.iter_mut().zip(&e.value) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let emp_sd = if n >= 2 {
            Some(
                (0..dim)
                    .map(|j| {
                        let col: Vec<f64> = estimates.iter().map(|e| e.value[j]).collect();
                        stats::sample_sd(&col).expect("n >= 2")
                    })
                    .collect::<Vec<f64>>(),
            )
        } else {
            None
        };

        // normal-based intervals around the mean from the empirical SD,
        // always including the 68%/95% pair the summary table reports
        let mut levels = config.ci_levels.clone();
        for required in [0.68, 0.95] {
            if !levels.iter().any(|&l| (l - required).abs() < 1e-12) {
                levels.push(required);
            }
        }
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ci = match &emp_sd {
            Some(sd) => levels
                .iter()
                .map(|&level| {
                    let z = stats::standard_normal_quantile((1.0 + level) / 2.0);
                    CiRow {
                        level,
                        lower: mean.iter().zip(sd).map(|(m, s)| m - z * s).collect(),
                        upper: mean.iter().zip(sd).map(|(m, s)| m + z * s).collect(),
                    }
                })
                .collect(),
            None => Vec::new(),
        };

        let theo_sd = match kind {
            EstimatorKind::Mle => Some(theo_sd_vec.clone()),
            // no asymptotic variance is reported for the quasi estimator
            EstimatorKind::QuasiMle => None,
        };

        let histogram = emp_sd.as_ref().map(|sd| {
            let m0 = mean[0];
            let s0 = sd[0].max(f64::MIN_POSITIVE);
            let lo = m0 - 4.0 * s0;
            let hi = m0 + 4.0 * s0;
            let bins = config.histogram_bins;
            let width = (hi - lo) / bins as f64;
            let mut count = vec![0u64; bins];
            for e in &estimates {
                let v = e.value[0];
                let idx = (((v - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
                count[idx] += 1;
            }
            let density_sd = (config.eps
                * msde::linalg::inverse(&fisher.matrix).expect("fisher checked positive definite")[(0, 0)])
            .sqrt();
            let mut bin_lo = Vec::with_capacity(bins);
            let mut bin_hi = Vec::with_capacity(bins);
            let mut theo_density_mid = Vec::with_capacity(bins);
            for b in 0..bins {
                let l = lo + b as f64 * width;
                let h = lo + (b + 1) as f64 * width;
                bin_lo.push(l);
                bin_hi.push(h);
                theo_density_mid.push(stats::normal_pdf(0.5 * (l + h), config.theta0[0], density_sd));
            }
            Histogram { bin_lo, bin_hi, count, theo_density_mid }
        });

        estimator_reports.push(EstimatorReport {
            estimator: *kind,
            estimates,
            mean,
            emp_sd,
            ci,
            theo_sd,
            histogram,
        });
    }

    Ok(McReport {
        config: config.clone(),
        estimators: estimator_reports,
        n_replicates_completed: n_completed,
        failures,
        fisher_at_theta0: fisher.matrix.as_slice().to_vec(),
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

fn ci_bounds(report: &EstimatorReport, level: f64) -> (String, String) {
    match report.ci.iter().find(|row| (row.level - level).abs() < 1e-12) {
        Some(row) => (format!("{}", row.lower[0]), format!("{}", row.upper[0])),
        None => (String::new(), String::new()),
    }
}

/// Write `summary.csv`, `estimates.csv`, `hist.csv` (plus per-estimator
/// histograms when several estimators ran), and `report.json`.
pub fn emit_report(report: &McReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut summary = BufWriter::new(std::fs::File::create(dir.join("summary.csv"))?);
    writeln!(
        summary,
        "estimator,theta0,eps,delta,mean,emp_sd,ci68_lo,ci68_hi,ci95_lo,ci95_hi,theo_sd"
    )?;
    for est in &report.estimators {
        let emp_sd = est.emp_sd.as_ref().map(|s| format!("{}", s[0])).unwrap_or_default();
        let theo_sd = est.theo_sd.as_ref().map(|s| format!("{}", s[0])).unwrap_or_default();
        let (ci68_lo, ci68_hi) = ci_bounds(est, 0.68);
        let (ci95_lo, ci95_hi) = ci_bounds(est, 0.95);
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{}",
            est.estimator,
            report.config.theta0[0],
            report.config.eps,
            report.config.delta,
            est.mean[0],
            emp_sd,
            ci68_lo,
            ci68_hi,
            ci95_lo,
            ci95_hi,
            theo_sd
        )?;
    }
    summary.flush()?;

    let mut estimates = BufWriter::new(std::fs::File::create(dir.join("estimates.csv"))?);
    writeln!(estimates, "replicate,estimator,value")?;
    for est in &report.estimators {
        for e in &est.estimates {
            writeln!(estimates, "{},{},{}", e.replicate, est.estimator, format_values(&e.value))?;
        }
    }
    estimates.flush()?;

    for (i, est) in report.estimators.iter().enumerate() {
        let Some(hist) = &est.histogram else { continue };
        let name = if i == 0 { "hist.csv".to_string() } else { format!("hist_{}.csv", est.estimator) };
        let mut w = BufWriter::new(std::fs::File::create(dir.join(name))?);
        writeln!(w, "bin_lo,bin_hi,count,theo_density_at_midpoint")?;
        for b in 0..hist.count.len() {
            writeln!(
                w,
                "{},{},{},{}",
                hist.bin_lo[b], hist.bin_hi[b], hist.count[b], hist.theo_density_mid[b]
            )?;
        }
        w.flush()?;
    }

    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(dir.join("report.json"), json)?;
    Ok(())
}
