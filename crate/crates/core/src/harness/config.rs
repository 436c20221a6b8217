//! Declarative experiment configuration: strict TOML in, validated
//! struct out, canonical TOML back.
//!
//! Unknown keys are rejected everywhere so a typo cannot silently fall
//! back to a default. Validation attempts to build the model and kernel
//! up front: a config that parses is a config that can run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{KernelRegistry, KernelSpec};
use crate::models::ModelCatalog;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("validation: {0}")]
    Validation(String),
    #[error("emit: {0}")]
    Emit(#[from] toml::ser::Error),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub kernel: KernelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub speed: SpeedSection,
    #[serde(default)]
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub wave: WaveSection,
    #[serde(default)]
    pub step: StepSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Comparison-weight override; omitted means the catalog default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl KernelSection {
    pub fn to_spec(&self) -> KernelSpec {
        KernelSpec {
            kind: self.kind.clone(),
            params: self.params.clone(),
            file: self.file.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub dx: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            half_width: 200.0,
            dx: 0.1,
        }
    }
}

/// Wave speed: explicit `c`, or `multiplier` times the minimal speed.
/// `of` names the reference the criteria phrase the multiple against;
/// for the catalog's models the comparison speed at rate R and the
/// model's minimal speed are the same number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    #[serde(default)]
    pub of: SpeedReference,
}

impl Default for SpeedSection {
    fn default() -> Self {
        SpeedSection {
            c: None,
            multiplier: None,
            of: SpeedReference::CStar,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedReference {
    #[default]
    CStar,
    CR,
}

pub const DEFAULT_SPEED_MULTIPLIER: f64 = 1.1;

impl SpeedSection {
    /// The speed for a resolved minimal speed `c_min`.
    pub fn resolve(&self, c_min: f64) -> f64 {
        match (self.c, self.multiplier) {
            (Some(c), _) => c,
            (None, Some(m)) => m * c_min,
            (None, None) => DEFAULT_SPEED_MULTIPLIER * c_min,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    #[default]
    Bump,
    None,
}

/// Smooth compactly supported bump added to the reference profile,
/// directed into the invariant box componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSection {
    pub kind: PerturbationKind,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection {
            kind: PerturbationKind::Bump,
            amplitude: 0.2,
            center: 0.0,
            width: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSection {
    /// Load the reference profile from this file instead of relaxing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub tol: f64,
    pub max_time: f64,
}

impl Default for WaveSection {
    fn default() -> Self {
        WaveSection {
            file: None,
            tol: 1e-8,
            max_time: 600.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvChoice {
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    /// Step override; omitted means the stability-bound default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub mode: ConvChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub observe_every: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Half-width of the local convergence window; default L/4.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 200.0,
            observe_every: 1.0,
            seed: 0,
            out_dir: None,
            window: None,
        }
    }
}

/// Strict parse with defaults filled, followed by validation deep
/// enough that the pipeline cannot fail on a constraint the config
/// already encodes: the kernel and model are trial-built here.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text)?;
    validate(&config)?;
    Ok(config)
}

pub fn validate(config: &ExperimentConfig) -> Result<(), ConfigError> {
    let g = &config.grid;
    if !(g.half_width > 0.0 && g.half_width.is_finite()) {
        return Err(invalid(format!("grid.half_width = {}", g.half_width)));
    }
    if !(g.dx > 0.0 && g.dx < g.half_width) {
        return Err(invalid(format!(
            "grid.dx = {} outside (0, half_width)",
            g.dx
        )));
    }
    if config.speed.c.is_some() && config.speed.multiplier.is_some() {
        return Err(invalid("speed.c and speed.multiplier are exclusive"));
    }
    if let Some(c) = config.speed.c {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid(format!("speed.c = {c}")));
        }
    }
    if let Some(m) = config.speed.multiplier {
        if !(m.is_finite() && m > 0.0) {
            return Err(invalid(format!("speed.multiplier = {m}")));
        }
    }
    let p = &config.perturbation;
    if p.kind == PerturbationKind::Bump {
        if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
            return Err(invalid(format!("perturbation.amplitude = {}", p.amplitude)));
        }
        if !(p.width > 0.0) {
            return Err(invalid(format!("perturbation.width = {}", p.width)));
        }
    }
    if !(config.wave.tol > 0.0) {
        return Err(invalid(format!("wave.tol = {}", config.wave.tol)));
    }
    if !(config.run.t_end >= 0.0) {
        return Err(invalid(format!("run.t_end = {}", config.run.t_end)));
    }
    if !(config.run.observe_every > 0.0) {
        return Err(invalid(format!(
            "run.observe_every = {}",
            config.run.observe_every
        )));
    }
    if let Some(dt) = config.step.dt {
        if !(dt > 0.0) {
            return Err(invalid(format!("step.dt = {dt}")));
        }
    }
    if let Some(w) = config.run.window {
        if !(w > 0.0 && w <= g.half_width) {
            return Err(invalid(format!("run.window = {w}")));
        }
    }

    // Trial-build: model constraints (e.g. pp2 needs ab < 1) and kernel
    // parameter ranges surface here, not mid-pipeline.
    ModelCatalog::builtin()
        .build(
            &config.model.name,
            &config.model.params,
            config.model.sigma.as_deref(),
        )
        .map_err(|e| invalid(e.to_string()))?;
    KernelRegistry::builtin()
        .build(&config.kernel.to_spec())
        .map_err(|e| invalid(e.to_string()))?;
    Ok(())
}

/// Canonical TOML for a parsed config; re-parsing yields an identical
/// structure.
pub fn canonical_toml(config: &ExperimentConfig) -> Result<String, ConfigError> {
    Ok(toml::to_string_pretty(config)?)
}
