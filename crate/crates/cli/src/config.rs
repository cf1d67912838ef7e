//! Experiment configuration: a single JSON document describing the graph,
//! the signal model, the quantizer model, the optimization, the simulation,
//! and the sweep protocol.
//!
//! Sections are individually optional so that a graph-only config can drive
//! `gen-graph`; each command demands the sections it needs. Any violation —
//! parse error, unknown field, or failed invariant — is reported with the
//! offending field's path and maps to exit code 2.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use quantcon::graph::DEFAULT_RETRY_LIMIT;
use quantcon::optimizer::DEFAULT_TOL;
use quantcon::rate_model::{
    d_max_from_nonzero_rule, ecsq_rate_constant, QuantizerFamily, RdModel,
};
use quantcon::simulator::{QuantizerKind, DEFAULT_RANGE_MULTIPLIER};
use quantcon::state_evolution::ScheduleMode;

/// A configuration problem, carrying the path of the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Result alias for configuration loading and validation.
pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// A float or the literal string `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOrFloat {
    Value(f64),
    Auto(String),
}

/// Distortion-schedule granularity, with an automatic switch to the tied
/// program above a variable-count threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Variable,
    Constant,
    Auto,
}

impl ModeChoice {
    /// Resolves `auto` against the instance size: the exact program has
    /// `m·T` variables and its coefficient count grows quadratically, so
    /// large instances fall back to the tied per-iteration program.
    pub fn resolve(self, m: usize, horizon: usize, auto_threshold: usize) -> ScheduleMode {
        match self {
            ModeChoice::Variable => ScheduleMode::PerNode,
            ModeChoice::Constant => ScheduleMode::Constant,
            ModeChoice::Auto => {
                if m * horizon > auto_threshold {
                    ScheduleMode::Constant
                } else {
                    ScheduleMode::PerNode
                }
            }
        }
    }
}

/// How a scalar MSE target is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintChoice {
    /// Network MSE at the horizon stays below the target.
    Network,
    /// Every node's own MSE at the horizon stays below the target.
    MaxNode,
    /// One explicit cap per node (the target is replicated to all nodes).
    PerNode,
}

/// `graph` section: a seeded random geometric graph or an explicit edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retries: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl GraphSection {
    pub fn retries(&self) -> usize {
        self.retries.unwrap_or(DEFAULT_RETRY_LIMIT)
    }

    fn validate(&self) -> ConfigResult<()> {
        if self.m < 2 {
            return Err(ConfigError::at("graph.m", format!("need at least 2 nodes, got {}", self.m)));
        }
        match (&self.rho_c, &self.edges) {
            (Some(_), Some(_)) => Err(ConfigError::at(
                "graph",
                "give either `rho_c` (random geometric graph) or `edges`, not both",
            )),
            (None, None) => Err(ConfigError::at(
                "graph",
                "give either `rho_c` (random geometric graph) or `edges`",
            )),
            (Some(rho), None) => {
                if !(*rho > 0.0) || !rho.is_finite() {
                    return Err(ConfigError::at(
                        "graph.rho_c",
                        format!("connectivity radius must be positive and finite, got {rho}"),
                    ));
                }
                if self.seed.is_none() {
                    return Err(ConfigError::at(
                        "graph.seed",
                        "a seed is required when drawing a random geometric graph",
                    ));
                }
                Ok(())
            }
            (None, Some(edges)) => {
                for (k, &(i, j)) in edges.iter().enumerate() {
                    if i >= self.m || j >= self.m || i == j {
                        return Err(ConfigError::at(
                            format!("graph.edges[{k}]"),
                            format!("invalid edge ({i}, {j}) for m = {}", self.m),
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

/// `signal` section: common signal plus per-node noise, over `L` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub sigma_x2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_n2: Option<f64>,
    /// Alternative to `sigma_n2`: SNR in dB, with SNR = sigma_x2/sigma_n2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(rename = "L", alias = "l", default = "default_l")]
    pub l: usize,
}

fn default_l() -> usize {
    1000
}

impl SignalSection {
    /// The noise variance, from `sigma_n2` directly or from the SNR.
    pub fn sigma_n2(&self) -> f64 {
        match (self.sigma_n2, self.snr_db) {
            (Some(v), _) => v,
            (None, Some(db)) => self.sigma_x2 / 10f64.powf(db / 10.0),
            (None, None) => unreachable!("validated at load"),
        }
    }

    fn validate(&self) -> ConfigResult<()> {
        if !(self.sigma_x2 > 0.0) || !self.sigma_x2.is_finite() {
            return Err(ConfigError::at(
                "signal.sigma_x2",
                format!("signal variance must be positive and finite, got {}", self.sigma_x2),
            ));
        }
        match (self.sigma_n2, self.snr_db) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at(
                    "signal",
                    "give either `sigma_n2` or `snr_db`, not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::at("signal", "give either `sigma_n2` or `snr_db`"))
            }
            (Some(v), None) if !(v > 0.0) || !v.is_finite() => {
                return Err(ConfigError::at(
                    "signal.sigma_n2",
                    format!("noise variance must be positive and finite, got {v}"),
                ))
            }
            (None, Some(db)) if !db.is_finite() => {
                return Err(ConfigError::at("signal.snr_db", format!("must be finite, got {db}")))
            }
            _ => {}
        }
        if self.l < 1 {
            return Err(ConfigError::at("signal.L", "need at least 1 coordinate"));
        }
        Ok(())
    }
}

/// `model` section: quantizer family and RD-law constants, each either
/// explicit or `"auto"` (`d_max` also accepts `"auto:p=<prob>"`, the
/// nonzero-index rule at probability `p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: QuantizerFamily,
    #[serde(default = "auto", skip_serializing_if = "is_auto")]
    pub r_c: AutoOrFloat,
    #[serde(default = "auto", skip_serializing_if = "is_auto")]
    pub d_max: AutoOrFloat,
}

fn auto() -> AutoOrFloat {
    AutoOrFloat::Auto("auto".into())
}

fn is_auto(v: &AutoOrFloat) -> bool {
    matches!(v, AutoOrFloat::Auto(s) if s == "auto")
}

impl ModelSection {
    /// Builds the RD model, resolving `"auto"` values from the family.
    pub fn resolve(&self) -> ConfigResult<RdModel> {
        let r_c = match &self.r_c {
            AutoOrFloat::Value(v) => *v,
            AutoOrFloat::Auto(s) if s == "auto" => match self.family {
                QuantizerFamily::Ecsq | QuantizerFamily::DitheredUniform => ecsq_rate_constant(),
                QuantizerFamily::VqProxy | QuantizerFamily::FixedUniform => 0.0,
            },
            AutoOrFloat::Auto(s) => {
                return Err(ConfigError::at(
                    "model.r_c",
                    format!("expected a number or \"auto\", got \"{s}\""),
                ))
            }
        };
        let d_max = match &self.d_max {
            AutoOrFloat::Value(v) => *v,
            AutoOrFloat::Auto(s) => {
                let p = parse_auto_p(s)
                    .ok_or_else(|| ConfigError::at(
                        "model.d_max",
                        format!("expected a number, \"auto\", or \"auto:p=<prob>\", got \"{s}\""),
                    ))?;
                d_max_from_nonzero_rule(p)
                    .map_err(|e| ConfigError::at("model.d_max", e.to_string()))?
            }
        };
        RdModel::new(self.family, r_c, d_max)
            .map_err(|e| ConfigError::at("model", e.to_string()))
    }
}

/// Parses `"auto"` (default probability) or `"auto:p=<prob>"`.
fn parse_auto_p(s: &str) -> Option<f64> {
    if s == "auto" {
        return Some(quantcon::rate_model::DEFAULT_NONZERO_PROB);
    }
    s.strip_prefix("auto:p=")?.parse().ok()
}

/// `optimizer` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_mode")]
    pub mode: ModeChoice,
    /// Variable count above which `auto` mode ties distortions per iteration.
    #[serde(default = "default_auto_threshold")]
    pub auto_threshold: usize,
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintChoice,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Absolute network-MSE targets at the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_targets: Option<Vec<f64>>,
    /// Targets as excess-MSE budgets in dB over the lossless MSE at the
    /// horizon; resolved per graph realization.
    #[serde(
        default,
        rename = "from_emse_db",
        alias = "from-emse",
        skip_serializing_if = "Option::is_none"
    )]
    pub from_emse_db: Option<Vec<f64>>,
}

fn default_mode() -> ModeChoice {
    ModeChoice::Auto
}

fn default_auto_threshold() -> usize {
    128
}

fn default_constraint() -> ConstraintChoice {
    ConstraintChoice::Network
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl OptimizerSection {
    fn validate(&self) -> ConfigResult<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(ConfigError::at(
                "optimizer.tol",
                format!("tolerance must be positive and finite, got {}", self.tol),
            ));
        }
        match (&self.mse_targets, &self.from_emse_db) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at(
                    "optimizer",
                    "give either `mse_targets` or `from_emse_db`, not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::at(
                    "optimizer",
                    "give either `mse_targets` or `from_emse_db`",
                ))
            }
            (Some(list), None) => {
                for (k, &t) in list.iter().enumerate() {
                    if !(t > 0.0) || !t.is_finite() {
                        return Err(ConfigError::at(
                            format!("optimizer.mse_targets[{k}]"),
                            format!("targets must be positive and finite, got {t}"),
                        ));
                    }
                }
            }
            (None, Some(list)) => {
                for (k, &db) in list.iter().enumerate() {
                    if !(db > 0.0) || !db.is_finite() {
                        return Err(ConfigError::at(
                            format!("optimizer.from_emse_db[{k}]"),
                            format!(
                                "excess-MSE budgets must be positive dB values, got {db}"
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// The concrete MSE targets for a graph whose lossless MSE at the
    /// horizon is `lossless`: absolute targets pass through; dB budgets
    /// scale the lossless reference.
    pub fn targets_for(&self, lossless: f64) -> Vec<f64> {
        match (&self.mse_targets, &self.from_emse_db) {
            (Some(list), None) => list.clone(),
            (None, Some(list)) => {
                list.iter().map(|db| lossless * 10f64.powf(db / 10.0)).collect()
            }
            _ => unreachable!("validated at load"),
        }
    }

    /// Labels the target axis for reports: the raw numbers plus whether
    /// they are absolute MSEs or dB budgets.
    pub fn target_labels(&self) -> Vec<String> {
        match (&self.mse_targets, &self.from_emse_db) {
            (Some(list), None) => list.iter().map(|t| format!("mse={t}")).collect(),
            (None, Some(list)) => list.iter().map(|db| format!("emse_db={db}")).collect(),
            _ => unreachable!("validated at load"),
        }
    }
}

/// `simulation` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_kind")]
    pub quantizer_kind: QuantizerKind,
    pub seed: u64,
    /// Clamp range of the fixed-rate quantizer, in standard deviations of
    /// the quantizer input.
    #[serde(default = "default_range_multiplier")]
    pub range_multiplier: f64,
}

fn default_trials() -> usize {
    100
}

fn default_kind() -> QuantizerKind {
    QuantizerKind::GaussianNoiseProxy
}

fn default_range_multiplier() -> f64 {
    DEFAULT_RANGE_MULTIPLIER
}

impl SimulationSection {
    fn validate(&self) -> ConfigResult<()> {
        if self.trials < 1 {
            return Err(ConfigError::at("simulation.trials", "need at least 1 trial"));
        }
        if !(self.range_multiplier > 0.0) || !self.range_multiplier.is_finite() {
            return Err(ConfigError::at(
                "simulation.range_multiplier",
                format!("must be positive and finite, got {}", self.range_multiplier),
            ));
        }
        Ok(())
    }
}

/// `sweep` section: how many graph realizations per radius, and which radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_graphs")]
    pub graphs: usize,
    #[serde(default = "default_rho_c_values")]
    pub rho_c_values: Vec<f64>,
}

fn default_graphs() -> usize {
    8
}

fn default_rho_c_values() -> Vec<f64> {
    vec![0.35, 0.45]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { graphs: default_graphs(), rho_c_values: default_rho_c_values() }
    }
}

impl SweepSection {
    fn validate(&self) -> ConfigResult<()> {
        if self.graphs < 1 {
            return Err(ConfigError::at("sweep.graphs", "need at least 1 graph realization"));
        }
        if self.rho_c_values.is_empty() {
            return Err(ConfigError::at("sweep.rho_c_values", "need at least one radius"));
        }
        for (k, &rho) in self.rho_c_values.iter().enumerate() {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(ConfigError::at(
                    format!("sweep.rho_c_values[{k}]"),
                    format!("radius must be positive and finite, got {rho}"),
                ));
            }
        }
        Ok(())
    }
}

/// The whole experiment document. Sections are optional at parse time;
/// commands request the ones they need through the accessors, which report
/// a missing section as a config error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates a config document from a JSON string.
    pub fn from_json(text: &str) -> ConfigResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            ConfigError::at(e.path().to_string(), e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file.
    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            ConfigError::at("<config file>", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    fn validate(&self) -> ConfigResult<()> {
        if let Some(g) = &self.graph {
            g.validate()?;
        }
        if let Some(s) = &self.signal {
            s.validate()?;
        }
        if let Some(t) = self.horizon {
            if t < 1 {
                return Err(ConfigError::at("horizon", "need at least 1 iteration"));
            }
        }
        if let Some(m) = &self.model {
            m.resolve()?;
        }
        if let Some(o) = &self.optimizer {
            o.validate()?;
        }
        if let Some(s) = &self.simulation {
            s.validate()?;
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    pub fn graph(&self) -> ConfigResult<&GraphSection> {
        self.graph.as_ref().ok_or_else(|| ConfigError::at("graph", "section required"))
    }

    pub fn signal(&self) -> ConfigResult<&SignalSection> {
        self.signal.as_ref().ok_or_else(|| ConfigError::at("signal", "section required"))
    }

    pub fn horizon(&self) -> ConfigResult<usize> {
        self.horizon.ok_or_else(|| ConfigError::at("horizon", "field required"))
    }

    pub fn model(&self) -> ConfigResult<&ModelSection> {
        self.model.as_ref().ok_or_else(|| ConfigError::at("model", "section required"))
    }

    pub fn optimizer(&self) -> ConfigResult<&OptimizerSection> {
        self.optimizer.as_ref().ok_or_else(|| ConfigError::at("optimizer", "section required"))
    }

    pub fn simulation(&self) -> ConfigResult<&SimulationSection> {
        self.simulation.as_ref().ok_or_else(|| ConfigError::at("simulation", "section required"))
    }

    /// The sweep protocol, with desk-scale defaults when the section is
    /// absent.
    pub fn sweep(&self) -> SweepSection {
        self.sweep.clone().unwrap_or_default()
    }
}
