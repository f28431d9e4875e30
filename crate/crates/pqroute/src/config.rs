//! Scenario configuration shared by the batch runner and the gateway.

use std::path::{Path, PathBuf};

use pqroute_core::fault::FaultError;
use pqroute_core::operator::{ScriptConfig, ScriptEntry, ShapingParams, Variant};
use pqroute_core::sim::{
    generate_synthetic_leaks, synthetic_districts, Experiment, LeakGenConfig, LeakThreshold, OperatorMode, RunSettings,
    Scenario, SimError,
};
use pqroute_core::{FaultWeights, LeakEvent, LearningParams, NetworkGraph, NodeId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formats::{self, FormatError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Overrides `learning.rng_seed` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub source: NodeId,
    pub dest: NodeId,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_window_size")]
    pub window_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_windows: Option<usize>,
    #[serde(default)]
    pub repeat: bool,
    pub topology: TopologySource,
    pub events: EventSource,
    #[serde(default)]
    pub learning: LearningParams,
    #[serde(default)]
    pub faults: FaultWeights,
    #[serde(default)]
    pub shaping: ShapingParams,
    #[serde(default)]
    pub operator: OperatorSection,
    #[serde(default)]
    pub threshold: LeakThreshold,
}

fn default_variant() -> Variant {
    Variant::Plain
}

fn default_window_size() -> usize {
    30
}

/// Either `path` or `synthetic`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticTopology>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTopology {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_diagonal_prob")]
    pub diagonal_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_diagonal_prob() -> f64 {
    0.3
}

/// Either `path` or `synthetic`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticEvents>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEvents {
    pub count: usize,
    pub propensity_shape: f64,
    pub repair_mean_hours: f64,
    pub cost_mean: f64,
    pub seed: u64,
}

impl Default for SyntheticEvents {
    fn default() -> Self {
        let g = LeakGenConfig::default();
        SyntheticEvents {
            count: g.count,
            propensity_shape: g.propensity_shape,
            repair_mean_hours: g.repair_mean_hours,
            cost_mean: g.cost_mean,
            seed: 0,
        }
    }
}

impl SyntheticEvents {
    pub fn gen_config(&self) -> LeakGenConfig {
        LeakGenConfig {
            count: self.count,
            propensity_shape: self.propensity_shape,
            repair_mean_hours: self.repair_mean_hours,
            cost_mean: self.cost_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub mode: OperatorMode,
    /// Fixed intervention script; without it a scripted operator acts at
    /// random according to `random`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub random: ScriptConfig,
}

impl Default for OperatorSection {
    fn default() -> Self {
        OperatorSection { mode: OperatorMode::None, script: None, random: ScriptConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    File(#[from] FormatError),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    fn invalid(field: &'static str, reason: impl ToString) -> Self {
        ConfigError::Invalid { field, reason: reason.to_string() }
    }
}

/// Command-line or API adjustments applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub max_windows: Option<usize>,
    pub cold_start: Option<bool>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    /// Reads a config file; the second value is the directory relative paths
    /// inside it resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
        let cfg = Self::from_toml(&text, path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Applies `o` and describes each change for the run metadata.
    pub fn apply(&mut self, o: &Overrides) -> Vec<String> {
        let mut notes = Vec::new();
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
            notes.push(format!("seed={seed}"));
        }
        if let Some(v) = o.variant {
            self.variant = v;
            notes.push(format!("variant={}", v.as_str()));
        }
        if let Some(m) = o.max_windows {
            self.max_windows = Some(m);
            notes.push(format!("max_windows={m}"));
        }
        if let Some(c) = o.cold_start {
            self.learning.cold_start = c;
            notes.push(format!("cold_start={c}"));
        }
        notes
    }

    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.learning.rng_seed)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(digest)[..16].to_string()
    }

    pub fn settings(&self) -> RunSettings {
        let mut s = RunSettings::new(self.source, self.dest);
        s.variant = self.variant;
        s.operator = self.operator.mode;
        s.script = self.operator.random;
        s.learning = self.learning;
        s.learning.rng_seed = self.effective_seed();
        s.faults = self.faults;
        s.shaping = self.shaping;
        s.window_size = self.window_size;
        s.max_windows = self.max_windows;
        s.repeat = self.repeat;
        s.threshold = self.threshold;
        s
    }

    fn load_graph(&self, base: &Path) -> Result<NetworkGraph, ConfigError> {
        match (&self.topology.path, &self.topology.synthetic) {
            (Some(p), None) => Ok(formats::read_topology(&base.join(p))?),
            (None, Some(s)) => {
                if s.rows * s.cols < 2 {
                    return Err(ConfigError::invalid("topology.synthetic", "needs at least two nodes"));
                }
                if !(0.0..=1.0).contains(&s.diagonal_prob) {
                    return Err(ConfigError::invalid("topology.synthetic.diagonal_prob", "must be in [0, 1]"));
                }
                synthetic_districts(s.rows, s.cols, s.diagonal_prob, s.seed)
                    .map_err(|e| ConfigError::invalid("topology.synthetic", e))
            }
            _ => Err(ConfigError::invalid("topology", "give exactly one of `path` or `synthetic`")),
        }
    }

    fn load_events(&self, base: &Path, node_count: usize) -> Result<Vec<LeakEvent>, ConfigError> {
        match (&self.events.path, &self.events.synthetic) {
            (Some(p), None) => Ok(formats::read_leaks(&base.join(p))?),
            (None, Some(s)) => generate_synthetic_leaks(node_count, &s.gen_config(), s.seed)
                .map_err(|e| ConfigError::invalid("events.synthetic", e)),
            _ => Err(ConfigError::invalid("events", "give exactly one of `path` or `synthetic`")),
        }
    }

    fn load_script(&self, base: &Path) -> Result<Option<Vec<ScriptEntry>>, ConfigError> {
        match &self.operator.script {
            Some(p) => {
                if self.operator.mode != OperatorMode::Scripted {
                    return Err(ConfigError::invalid("operator.script", "only used with mode = \"scripted\""));
                }
                Ok(Some(formats::read_script(&base.join(p))?))
            }
            None => Ok(None),
        }
    }

    /// Loads every input and validates the scenario by constructing an
    /// experiment from it.
    pub fn resolve(&self, base: &Path) -> Result<Scenario, ConfigError> {
        let graph = self.load_graph(base)?;
        let events = self.load_events(base, graph.node_count())?;
        let script = self.load_script(base)?;
        let scenario = Scenario { graph, events, settings: self.settings(), script };
        Experiment::new(scenario.clone()).map_err(describe)?;
        Ok(scenario)
    }
}

/// Names the config field behind a construction-time error.
pub fn describe(e: SimError) -> ConfigError {
    match e {
        SimError::Learner(e) => ConfigError::invalid("learning", e),
        SimError::Events(e @ FaultError::BadWeight { .. }) => ConfigError::invalid("faults", e),
        SimError::Events(e) => ConfigError::invalid("events", e),
        SimError::Route(e) => ConfigError::invalid("source/dest", e),
        SimError::Script(e) => ConfigError::invalid("operator.script", e),
        SimError::Config(msg) => {
            let field = if msg.starts_with("variant") {
                "variant"
            } else if msg.starts_with("window_size") {
                "window_size"
            } else if msg.starts_with("repeat") {
                "max_windows"
            } else if msg.starts_with("threshold") {
                "threshold"
            } else if msg.contains("danger_penalty") || msg.contains("safe_relief") {
                "shaping"
            } else {
                "operator.random"
            };
            ConfigError::Invalid { field, reason: msg }
        }
        other => ConfigError::invalid("scenario", other),
    }
}

pub fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "plain" => Ok(Variant::Plain),
        "reward_shaping" => Ok(Variant::RewardShaping),
        "action_pruning" => Ok(Variant::ActionPruning),
        other => Err(format!("unknown variant `{other}` (plain, reward_shaping, action_pruning)")),
    }
}
