//! Experiment configuration: a single JSON document, echoed verbatim into
//! every report for provenance.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use msde::averaging::InvariantAvgOptions;
use msde::registry;

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mle,
    QuasiMle,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::QuasiMle => "quasi_mle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mle" => Some(EstimatorKind::Mle),
            "quasi" | "quasi_mle" => Some(EstimatorKind::QuasiMle),
            _ => None,
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Ergodic-averaging knobs as plain JSON fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AveragingParams {
    pub burn_in: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_chains: usize,
    pub seed: u64,
}

impl Default for AveragingParams {
    fn default() -> Self {
        let d = InvariantAvgOptions::<f64>::default();
        AveragingParams {
            burn_in: d.burn_in,
            horizon: d.horizon,
            n_steps: d.n_steps,
            n_chains: d.n_chains,
            seed: d.seed,
        }
    }
}

impl AveragingParams {
    pub fn to_options(self) -> InvariantAvgOptions<f64> {
        InvariantAvgOptions {
            burn_in: self.burn_in,
            horizon: self.horizon,
            n_steps: self.n_steps,
            n_chains: self.n_chains,
            seed: self.seed,
        }
    }
}

/// Monte Carlo experiment design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in model name (see the model registry).
    pub model: String,
    pub theta0: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_replicates: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub ci_levels: Vec<f64>,
    pub histogram_bins: usize,
    pub output_dir: Option<PathBuf>,
    /// Grid steps for the limit path underlying the Fisher information.
    pub fisher_grid_steps: usize,
    pub averaging: AveragingParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "sin-ou-indep".into(),
            theta0: vec![2.0],
            eps: 0.1,
            delta: 1e-3,
            t_end: 1.0,
            n_steps: 1_000_000,
            n_replicates: 2000,
            master_seed: 1,
            estimators: vec![EstimatorKind::Mle],
            ci_levels: vec![0.68, 0.95],
            histogram_bins: 40,
            output_dir: None,
            fisher_grid_steps: 100,
            averaging: AveragingParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let model = registry::builtin::<f64>(&self.model)
            .ok_or_else(|| HarnessError::Config(format!(
                "unknown model '{}'; available: {}",
                self.model,
                registry::names().join(", ")
            )))?;
        if self.theta0.len() != model.dim_param() {
            return Err(HarnessError::Config(format!(
                "theta0 has {} coordinates, model '{}' has {} parameters",
                self.theta0.len(),
                self.model,
                model.dim_param()
            )));
        }
        if !model.param_domain().contains(&self.theta0) {
            return Err(HarnessError::Config("theta0 lies outside the model's parameter domain".into()));
        }
        if self.n_replicates == 0 {
            return Err(HarnessError::Config("n_replicates must be at least 1".into()));
        }
        if self.n_steps == 0 || !(self.t_end > 0.0) {
            return Err(HarnessError::Config("grid needs positive t_end and n_steps".into()));
        }
        if !(self.eps > 0.0) || !(self.delta > 0.0) {
            return Err(HarnessError::Config("eps and delta must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::Config("at least one estimator must be requested".into()));
        }
        if self.ci_levels.iter().any(|&l| !(0.0 < l && l < 1.0)) {
            return Err(HarnessError::Config("ci_levels must lie strictly inside (0,1)".into()));
        }
        if self.histogram_bins == 0 {
            return Err(HarnessError::Config("histogram_bins must be at least 1".into()));
        }
        Ok(())
    }
}
