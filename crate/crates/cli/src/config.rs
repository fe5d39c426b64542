//! Experiment configuration files.
//!
//! A configuration is a JSON object; unknown keys are rejected and every
//! error names the offending field path.

use std::path::{Path, PathBuf};

use mfc_core::dynamics::VectorFieldProblem;
use mfc_core::problems::{
    self, AttractionParams, ConstantParams, LinearParams, ZeroParams, PROBLEM_NAMES,
};
use mfc_core::strategies::LawKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the lattice node cap.
pub const MAX_NODES_VAR: &str = "MFC_MAX_NODES";

fn default_dt() -> f64 {
    2.5e-3
}

fn default_particles() -> usize {
    500
}

fn default_samples() -> usize {
    3
}

fn default_eval() -> usize {
    4
}

fn default_budget() -> usize {
    20
}

fn default_max_particles() -> usize {
    1_000_000
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Lattice spacing for single runs.
    #[serde(default)]
    pub h: Option<f64>,
    /// Lattice spacings for sweeps.
    #[serde(default)]
    pub h_list: Option<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Number of uniform partition steps on `[0, T]`.
    #[serde(default)]
    pub partition_steps: Option<usize>,
    #[serde(default)]
    pub partition_list: Option<Vec<usize>>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Start from `m₀ = 𝓘(μ₀)` instead of the sampled cloud.
    #[serde(default)]
    pub matched_start: bool,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_samples")]
    pub samples_per_side: usize,
    #[serde(default = "default_eval")]
    pub eval_per_step: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_nodes: Option<usize>,
    #[serde(default = "default_max_particles")]
    pub max_particles: usize,
    #[serde(default = "yes")]
    pub coalesce: bool,
    /// Samples drawn by `build-chain` when checking the assumptions.
    #[serde(default = "default_budget")]
    pub verify_budget: usize,
    /// Jump-process sample paths drawn by `simulate-chain` (0 skips it).
    #[serde(default)]
    pub jump_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// How the initial cloud `m₀` is produced; `μ₀` is always its projection
/// onto the lattice.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Independent Gaussian coordinates conditioned on the state box.
    Gaussian {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        std: f64,
    },
    /// Uniform on the state box.
    Uniform,
    /// Explicit atoms; weights default to uniform.
    Points {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// A cloud CSV (`x_1, …, x_d, w`), relative to the configuration file.
    CloudFile { path: PathBuf },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Gaussian {
            mean: None,
            std: 0.4,
        }
    }
}

fn default_bins() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "default_kind")]
    pub kind: LawKind,
    /// Spatial bins per axis.
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_bins")]
    pub time_cells: usize,
}

fn default_kind() -> LawKind {
    LawKind::Mixed
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            bins: default_bins(),
            time_cells: default_bins(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    Reverse,
}

fn parse_at<T: DeserializeOwned>(value: &serde_json::Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let full = match (prefix.is_empty(), path == ".") {
            (true, _) => path,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{path}"),
        };
        CliError::Config(format!("{full}: {}", e.inner()))
    })
}

/// A loaded configuration with the directory it was read from.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir })
}

/// Parses and validates a configuration.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("not valid JSON: {e}")))?;
    let config: ExperimentConfig = parse_at(&value, "")?;
    config.validate()?;
    Ok(config)
}

fn positive(v: f64, what: &str) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what}: must be positive, got {v}"
        )))
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), CliError> {
        if let Some(h) = self.h {
            positive(h, "h")?;
        }
        if let Some(list) = &self.h_list {
            if list.is_empty() {
                return Err(CliError::Config("h_list: must not be empty".into()));
            }
            for (i, &h) in list.iter().enumerate() {
                positive(h, &format!("h_list[{i}]"))?;
            }
        }
        positive(self.dt, "dt")?;
        if self.partition_steps == Some(0) {
            return Err(CliError::Config(
                "partition_steps: must be at least 1".into(),
            ));
        }
        if let Some(list) = &self.partition_list {
            if list.is_empty() || list.contains(&0) {
                return Err(CliError::Config(
                    "partition_list: must be nonempty with entries ≥ 1".into(),
                ));
            }
        }
        let counts = [
            (self.particles, "particles"),
            (self.samples_per_side, "samples_per_side"),
            (self.eval_per_step, "eval_per_step"),
            (self.verify_budget, "verify_budget"),
            (self.max_particles, "max_particles"),
            (self.strategy.bins, "strategy.bins"),
            (self.strategy.time_cells, "strategy.time_cells"),
        ];
        for (v, what) in counts {
            if v == 0 {
                return Err(CliError::Config(format!("{what}: must be at least 1")));
            }
        }
        if let InitialConfig::Gaussian { std, .. } = &self.initial {
            positive(*std, "initial.std")?;
        }
        Ok(())
    }

    /// The problem, with parameter errors reported by field path.
    pub fn build_problem(&self) -> Result<VectorFieldProblem, CliError> {
        let params = if self.problem.params.is_null() {
            serde_json::json!({})
        } else {
            self.problem.params.clone()
        };
        let at = "problem.params";
        let built = match self.problem.name.as_str() {
            "zero" => {
                let p: ZeroParams = parse_at(&params, at)?;
                problems::zero(p.dim, p.half_width, p.horizon, p.atoms_per_axis)
            }
            "constant" => {
                let p: ConstantParams = parse_at(&params, at)?;
                problems::constant(p.velocity, p.half_width, p.horizon, p.atoms_per_axis)
            }
            "linear" => {
                let p: LinearParams = parse_at(&params, at)?;
                problems::linear(p.dim, p.half_width, p.horizon, p.rate, p.atoms_per_axis)
            }
            "attraction" => problems::attraction(&parse_at::<AttractionParams>(&params, at)?),
            other => {
                return Err(CliError::Config(format!(
                    "problem.name: unknown problem {other:?}; known problems: {}",
                    PROBLEM_NAMES.join(", ")
                )))
            }
        };
        built.map_err(|e| CliError::Config(format!("problem.params: {e}")))
    }

    /// The single lattice spacing of a non-sweep command.
    pub fn single_h(&self) -> Result<f64, CliError> {
        match (self.h, &self.h_list) {
            (Some(h), _) => Ok(h),
            (None, Some(list)) if list.len() == 1 => Ok(list[0]),
            _ => Err(CliError::Config("h: required by this command".into())),
        }
    }

    /// All lattice spacings mentioned by the configuration.
    pub fn all_h(&self) -> Vec<f64> {
        match (&self.h_list, self.h) {
            (Some(list), _) => list.clone(),
            (None, Some(h)) => vec![h],
            (None, None) => Vec::new(),
        }
    }

    pub fn single_steps(&self) -> Result<usize, CliError> {
        match (self.partition_steps, &self.partition_list) {
            (Some(n), _) => Ok(n),
            (None, Some(list)) if list.len() == 1 => Ok(list[0]),
            _ => Err(CliError::Config(
                "partition_steps: required by this command".into(),
            )),
        }
    }

    /// The node cap: `MFC_MAX_NODES` if set, else the configured value.
    pub fn max_nodes(&self) -> Result<usize, CliError> {
        match std::env::var(MAX_NODES_VAR) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{MAX_NODES_VAR}: expected a positive integer, got {v:?}"
                    ))
                }),
            Err(_) => Ok(self.max_nodes.unwrap_or(mfc_core::chain::DEFAULT_MAX_NODES)),
        }
    }

    /// Checks `dt · B_Q · fan-out ≤ 0.5` for every spacing before any work.
    pub fn check_stability(&self, problem: &VectorFieldProblem) -> Result<(), CliError> {
        let d = problem.dim() as f64;
        for h in self.all_h() {
            let rate = d * problem.bound_r / h * (d + 1.0);
            if self.dt * rate > mfc_core::chain::STABILITY_LIMIT {
                return Err(CliError::Config(format!(
                    "dt: {} is unstable for h = {h}; use dt ≤ {:e}",
                    self.dt,
                    mfc_core::chain::STABILITY_LIMIT / rate
                )));
            }
        }
        Ok(())
    }
}
