//! The single documented parameter tree every stage reads, with TOML
//! loading, two named profiles, and dotted-path overrides. Overrides are
//! validated against the schema: an unknown key is an error, never a
//! silently ignored warning, and every write re-runs the cross-field
//! checks.
//!
//! `nominal` is the full-scale profile; `fast` keeps the data shape but
//! shrinks the networks, training budget, and solver population so the
//! whole pipeline fits in a test run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::base::Timebase;
use crate::mpc::ShootingConfig;
use crate::nn::{Architecture, Layout, ModelSpec};
use crate::predictors::{DatasetKind, TrainConfig};
use crate::sim::{GuidedConfig, HumanAgentModel, LeashModel, RobotResponseModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown parameter '{key}'{hint}")]
    UnknownKey { key: String, hint: String },
    #[error("parameter '{key}' expects {want}, got '{got}'")]
    BadValue { key: String, want: &'static str, got: String },
    #[error("unknown profile '{0}' (available: nominal, fast)")]
    UnknownProfile(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("config encode: {0}")]
    Encode(String),
    #[error("config parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// History window and rollout depth for dataset construction, plus the
/// synthetic collection panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataParams {
    /// History rows fed to the sequence models.
    pub window: usize,
    /// Supervised rollout steps per training sample.
    pub horizon: usize,
    /// Synthetic subjects logged by the generate stage.
    pub subjects: usize,
    /// Length of each collection episode in seconds.
    pub episode_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    /// "cnn", "lstm", "tcn", or "all".
    pub arch: String,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied after each epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Reset rollout windows to measured history at each supervised step.
    pub teacher_forcing: bool,
    pub cnn_channels: [usize; 2],
    pub cnn_kernel: usize,
    pub lstm_layers: usize,
    pub lstm_units: usize,
    pub tcn_blocks: usize,
    pub tcn_channels: usize,
    pub tcn_kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub k_folds: usize,
}

/// Route shaping ahead of waypoint selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorParams {
    /// Turning-angle threshold for the redundant-point smoother, radians.
    pub wrps_threshold: f64,
    /// Obstacle inflation radius in meters before grid planning.
    pub inflation_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanMpcParams {
    pub horizon: usize,
    pub waypoint_weight: f64,
    pub force_step_weight: f64,
    pub magnitude_step_weight: f64,
    pub bearing_step_weight: f64,
    pub length_step_weight: f64,
    pub tension_min: f64,
    pub tension_max: f64,
    pub length_min: f64,
    pub length_max: f64,
    /// Largest allowed angle between consecutive force vectors, radians.
    pub max_force_turn: f64,
    /// Largest allowed angle between force and leash bearing, radians.
    pub max_leash_skew: f64,
    /// Required clearance from obstacle points, meters.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotMpcParams {
    pub horizon: usize,
    pub tracking_weight: f64,
    pub effort_weight: f64,
    /// Per-component command magnitude limits (x, y, yaw rate).
    pub command_bounds: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub force_std: f64,
    pub angle_std: f64,
    pub length_std: f64,
    pub command_std: f64,
    pub min_std: f64,
    pub penalty_weight: f64,
    pub refine_steps: usize,
    pub refine_step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Guided-episode duration cap in seconds.
    pub episode_seconds: f64,
    pub slack_length: f64,
    pub nominal_separation: f64,
    pub goal_radius: f64,
    /// Comfortable speeds of the guided-episode panel, m/s.
    pub comfortable_speeds: Vec<f64>,
    pub responsiveness: f64,
    pub agent_time_constant: f64,
    pub heading_compliance: f64,
    pub agent_noise_std: f64,
    pub robot_time_constant: f64,
    pub tension_discount: [f64; 2],
    pub robot_noise_std: f64,
}

/// The full parameter tree. Field paths double as the override keys, so
/// `--set train.epochs=30` writes `train.epochs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Control period in seconds shared by logging and planning.
    pub timebase: f64,
    /// Odd moving-average width for finite-difference velocities.
    pub smoothing_window: usize,
    pub data: DataParams,
    pub train: TrainParams,
    pub eval: EvalParams,
    pub selector: SelectorParams,
    pub human_mpc: HumanMpcParams,
    pub robot_mpc: RobotMpcParams,
    pub solver: SolverParams,
    pub sim: SimParams,
}

impl Default for DataParams {
    fn default() -> Self {
        Self { window: 20, horizon: 10, subjects: 10, episode_seconds: 120.0 }
    }
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            arch: "tcn".into(),
            learning_rate: 1e-3,
            lr_decay: 0.97,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 40,
            teacher_forcing: true,
            cnn_channels: [8, 16],
            cnn_kernel: 3,
            lstm_layers: 3,
            lstm_units: 16,
            tcn_blocks: 4,
            tcn_channels: 16,
            tcn_kernel: 3,
        }
    }
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { k_folds: 5 }
    }
}

impl Default for SelectorParams {
    fn default() -> Self {
        Self { wrps_threshold: 0.05, inflation_radius: 0.3 }
    }
}

impl Default for HumanMpcParams {
    fn default() -> Self {
        Self {
            horizon: 10,
            waypoint_weight: 20.0,
            force_step_weight: 0.02,
            magnitude_step_weight: 0.01,
            bearing_step_weight: 0.5,
            length_step_weight: 2.0,
            tension_min: 2.0,
            tension_max: 20.0,
            length_min: 0.8,
            length_max: 1.2,
            max_force_turn: 0.6,
            max_leash_skew: 0.7,
            clearance: 0.3,
        }
    }
}

impl Default for RobotMpcParams {
    fn default() -> Self {
        Self {
            horizon: 10,
            tracking_weight: 10.0,
            effort_weight: 0.05,
            command_bounds: [1.5, 1.5, 1.5],
        }
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            population: 64,
            elite_fraction: 0.125,
            iterations: 24,
            force_std: 3.0,
            angle_std: 0.4,
            length_std: 0.1,
            command_std: 0.3,
            min_std: 1e-3,
            penalty_weight: 1e4,
            refine_steps: 2,
            refine_step_size: 1e-2,
        }
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            episode_seconds: 60.0,
            slack_length: 0.7,
            nominal_separation: 1.0,
            goal_radius: 0.3,
            comfortable_speeds: vec![0.6, 1.0],
            responsiveness: 0.1,
            agent_time_constant: 0.3,
            heading_compliance: 0.9,
            agent_noise_std: 0.0,
            robot_time_constant: 0.25,
            tension_discount: [0.02, 0.02],
            robot_noise_std: 0.0,
        }
    }
}

impl Default for Params {
    fn default() -> Self {
        Self::nominal()
    }
}

impl Params {
    /// Full-scale settings.
    pub fn nominal() -> Self {
        Self {
            timebase: 0.02,
            smoothing_window: 5,
            data: DataParams::default(),
            train: TrainParams::default(),
            eval: EvalParams::default(),
            selector: SelectorParams::default(),
            human_mpc: HumanMpcParams::default(),
            robot_mpc: RobotMpcParams::default(),
            solver: SolverParams::default(),
            sim: SimParams::default(),
        }
    }

    /// Same data shape as `nominal` with smaller networks, a shorter
    /// training budget, and a lighter shooting population.
    pub fn fast() -> Self {
        let mut p = Self::nominal();
        p.train.epochs = 16;
        p.train.learning_rate = 2e-3;
        p.train.lr_decay = 0.95;
        p.train.cnn_channels = [4, 8];
        p.train.cnn_kernel = 2;
        p.train.lstm_layers = 1;
        p.train.lstm_units = 8;
        p.train.tcn_blocks = 2;
        p.train.tcn_channels = 8;
        p.train.tcn_kernel = 2;
        p.solver.population = 24;
        p.solver.iterations = 8;
        p.solver.refine_steps = 0;
        p
    }

    pub fn profile(name: &str) -> Result<Self, ConfigError> {
        match name {
            "nominal" => Ok(Self::nominal()),
            "fast" => Ok(Self::fast()),
            other => Err(ConfigError::UnknownProfile(other.to_string())),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let params: Params =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Encode(e.to_string()))
    }

    /// Writes one dotted-path override, e.g. `set("train.epochs", "30")`.
    /// Array elements address by index: `robot_mpc.command_bounds.1`.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let mut tree =
            toml::Value::try_from(&*self).map_err(|e| ConfigError::Encode(e.to_string()))?;
        let mut node = &mut tree;
        let segments: Vec<&str> = key.split('.').collect();
        for (i, seg) in segments.iter().enumerate() {
            let child = match node {
                toml::Value::Table(map) => map.get_mut(*seg),
                toml::Value::Array(items) => {
                    seg.parse::<usize>().ok().and_then(|idx| items.get_mut(idx))
                }
                _ => None,
            };
            node = child.ok_or_else(|| ConfigError::UnknownKey {
                key: key.to_string(),
                hint: hint_for(seg),
            })?;
            if i + 1 == segments.len() {
                assign(node, raw, key)?;
            }
        }
        let candidate: Params = tree
            .try_into()
            .map_err(|e| ConfigError::Parse(format!("{key}: {e}")))?;
        candidate.validate()?;
        *self = candidate;
        Ok(())
    }

    /// All leaf override keys in tree order; arrays count as one leaf.
    pub fn schema_keys(&self) -> Vec<String> {
        let tree = toml::Value::try_from(self).expect("params always encode");
        let mut keys = Vec::new();
        flatten(&tree, String::new(), &mut keys);
        keys
    }

    /// One `key = value` line per leaf, the reference for `--set`.
    pub fn schema_text(&self) -> String {
        let tree = toml::Value::try_from(self).expect("params always encode");
        let mut keys = Vec::new();
        flatten(&tree, String::new(), &mut keys);
        let mut out = String::new();
        for key in keys {
            let mut node = &tree;
            for seg in key.split('.') {
                node = &node[seg];
            }
            out.push_str(&format!("{key} = {node}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.timebase.is_finite() && self.timebase > 0.0) {
            return bad(format!("timebase {} must be > 0", self.timebase));
        }
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return bad(format!("smoothing_window {} must be odd", self.smoothing_window));
        }
        if self.data.window < 2 {
            return bad("data.window must be >= 2".into());
        }
        if self.data.horizon == 0 {
            return bad("data.horizon must be >= 1".into());
        }
        if !(self.data.episode_seconds > 0.0) {
            return bad("data.episode_seconds must be > 0".into());
        }
        let t = &self.train;
        if !(t.learning_rate > 0.0 && t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
            return bad("train.learning_rate must be > 0 and lr_decay in (0, 1]".into());
        }
        if !(t.beta1 >= 0.0 && t.beta1 < 1.0 && t.beta2 >= 0.0 && t.beta2 < 1.0) {
            return bad("train.beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(t.epsilon > 0.0) {
            return bad("train.epsilon must be > 0".into());
        }
        if t.batch_size == 0 || t.epochs == 0 {
            return bad("train.batch_size and epochs must be >= 1".into());
        }
        if t.arch != "all" && t.arch.parse::<Architecture>().is_err() {
            return bad(format!("train.arch '{}' is not cnn, lstm, tcn, or all", t.arch));
        }
        if t.cnn_channels.contains(&0) || t.cnn_kernel == 0 {
            return bad("train.cnn_channels and cnn_kernel must be >= 1".into());
        }
        if t.lstm_layers == 0 || t.lstm_units == 0 {
            return bad("train.lstm_layers and lstm_units must be >= 1".into());
        }
        if t.tcn_blocks == 0 || t.tcn_channels == 0 || t.tcn_kernel == 0 {
            return bad("train.tcn_blocks, tcn_channels, tcn_kernel must be >= 1".into());
        }
        if self.eval.k_folds < 2 {
            return bad("eval.k_folds must be >= 2".into());
        }
        if !(self.selector.wrps_threshold > 0.0) {
            return bad("selector.wrps_threshold must be > 0".into());
        }
        if !(self.selector.inflation_radius >= 0.0) {
            return bad("selector.inflation_radius must be >= 0".into());
        }
        let h = &self.human_mpc;
        if h.horizon == 0 {
            return bad("human_mpc.horizon must be >= 1".into());
        }
        if !(h.tension_min >= 0.0 && h.tension_min < h.tension_max) {
            return bad(format!(
                "human_mpc tension bounds [{}, {}] must satisfy 0 <= min < max",
                h.tension_min, h.tension_max
            ));
        }
        if !(h.length_min > 0.0 && h.length_min < h.length_max) {
            return bad(format!(
                "human_mpc length bounds [{}, {}] must satisfy 0 < min < max",
                h.length_min, h.length_max
            ));
        }
        if !(h.max_force_turn > 0.0 && h.max_leash_skew > 0.0) {
            return bad("human_mpc angle limits must be > 0".into());
        }
        if !(h.clearance >= 0.0) {
            return bad("human_mpc.clearance must be >= 0".into());
        }
        for w in [
            h.waypoint_weight,
            h.force_step_weight,
            h.magnitude_step_weight,
            h.bearing_step_weight,
            h.length_step_weight,
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return bad("human_mpc weights must be finite and >= 0".into());
            }
        }
        let r = &self.robot_mpc;
        if r.horizon == 0 {
            return bad("robot_mpc.horizon must be >= 1".into());
        }
        if r.horizon > h.horizon {
            return bad(format!(
                "robot_mpc.horizon {} cannot exceed human_mpc.horizon {}",
                r.horizon, h.horizon
            ));
        }
        if !(r.tracking_weight >= 0.0 && r.effort_weight >= 0.0) {
            return bad("robot_mpc weights must be >= 0".into());
        }
        if r.command_bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return bad("robot_mpc.command_bounds must be > 0".into());
        }
        let s = &self.solver;
        if s.population < 2 || s.iterations == 0 {
            return bad("solver.population must be >= 2 and iterations >= 1".into());
        }
        if !(s.elite_fraction > 0.0 && s.elite_fraction <= 1.0) {
            return bad("solver.elite_fraction must lie in (0, 1]".into());
        }
        for v in [s.force_std, s.angle_std, s.length_std, s.command_std, s.min_std] {
            if !(v.is_finite() && v > 0.0) {
                return bad("solver sampling spreads must be > 0".into());
            }
        }
        if !(s.penalty_weight > 0.0 && s.refine_step_size > 0.0) {
            return bad("solver.penalty_weight and refine_step_size must be > 0".into());
        }
        let m = &self.sim;
        if !(m.episode_seconds > 0.0) {
            return bad("sim.episode_seconds must be > 0".into());
        }
        if !(m.slack_length > 0.0 && m.nominal_separation >= m.slack_length) {
            return bad(format!(
                "sim.nominal_separation {} must be at least slack_length {}",
                m.nominal_separation, m.slack_length
            ));
        }
        if !(m.goal_radius > 0.0) {
            return bad("sim.goal_radius must be > 0".into());
        }
        if m.comfortable_speeds.is_empty() {
            return bad("sim.comfortable_speeds must list at least one subject".into());
        }
        if m.comfortable_speeds.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("sim.comfortable_speeds must be finite and >= 0".into());
        }
        if !(m.responsiveness >= 0.0) {
            return bad("sim.responsiveness must be >= 0".into());
        }
        if !(m.agent_time_constant > 0.0 && m.robot_time_constant > 0.0) {
            return bad("sim time constants must be > 0".into());
        }
        if !(0.0..=1.0).contains(&m.heading_compliance) {
            return bad("sim.heading_compliance must lie in [0, 1]".into());
        }
        if !(m.agent_noise_std >= 0.0 && m.robot_noise_std >= 0.0) {
            return bad("sim noise levels must be >= 0".into());
        }
        if m.tension_discount.iter().any(|d| !d.is_finite()) {
            return bad("sim.tension_discount must be finite".into());
        }
        Ok(())
    }

    pub fn timebase(&self) -> Result<Timebase, ConfigError> {
        Timebase::new(self.timebase).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Architectures selected by `train.arch` ("all" expands to the trio).
    pub fn architectures(&self) -> Result<Vec<Architecture>, ConfigError> {
        match self.train.arch.as_str() {
            "all" => Ok(vec![Architecture::Cnn, Architecture::Lstm, Architecture::Tcn]),
            name => name
                .parse::<Architecture>()
                .map(|a| vec![a])
                .map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }

    pub fn layout(&self, arch: Architecture) -> Layout {
        let t = &self.train;
        match arch {
            Architecture::Cnn => Layout::Cnn {
                channels: (t.cnn_channels[0], t.cnn_channels[1]),
                kernel: t.cnn_kernel,
            },
            Architecture::Lstm => Layout::Lstm { layers: t.lstm_layers, units: t.lstm_units },
            Architecture::Tcn => Layout::Tcn {
                blocks: t.tcn_blocks,
                channels: t.tcn_channels,
                kernel: t.tcn_kernel,
            },
        }
    }

    pub fn model_spec(&self, kind: DatasetKind, arch: Architecture) -> ModelSpec {
        ModelSpec {
            input_channels: kind.channels(),
            window: self.data.window,
            output_dim: 2,
            layout: self.layout(arch),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            adam: crate::nn::AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            lr_decay: t.lr_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            teacher_forcing: t.teacher_forcing,
            seed,
        }
    }

    pub fn shooting_config(&self, seed: u64) -> ShootingConfig {
        let s = &self.solver;
        ShootingConfig {
            population: s.population,
            elite_fraction: s.elite_fraction,
            iterations: s.iterations,
            force_std: s.force_std,
            angle_std: s.angle_std,
            length_std: s.length_std,
            command_std: s.command_std,
            min_std: s.min_std,
            penalty_weight: s.penalty_weight,
            refine_steps: s.refine_steps,
            refine_step_size: s.refine_step_size,
            seed,
        }
    }

    pub fn guided_config(&self, seed: u64) -> GuidedConfig {
        let h = &self.human_mpc;
        let r = &self.robot_mpc;
        GuidedConfig {
            human_horizon: h.horizon,
            robot_horizon: r.horizon,
            waypoint_weight: h.waypoint_weight,
            force_step_weight: h.force_step_weight,
            magnitude_step_weight: h.magnitude_step_weight,
            bearing_step_weight: h.bearing_step_weight,
            length_step_weight: h.length_step_weight,
            tension_bounds: (h.tension_min, h.tension_max),
            length_bounds: (h.length_min, h.length_max),
            max_force_turn: h.max_force_turn,
            max_leash_skew: h.max_leash_skew,
            clearance: h.clearance,
            tracking_weight: r.tracking_weight,
            effort_weight: r.effort_weight,
            command_bounds: r.command_bounds,
            solver: self.shooting_config(seed),
            goal_radius: self.sim.goal_radius,
        }
    }

    pub fn human_agent(&self, comfortable_speed: f64) -> HumanAgentModel {
        let m = &self.sim;
        HumanAgentModel {
            comfortable_speed,
            responsiveness: m.responsiveness,
            time_constant: m.agent_time_constant,
            heading_compliance: m.heading_compliance,
            noise_std: m.agent_noise_std,
        }
    }

    pub fn robot_response(&self) -> RobotResponseModel {
        let m = &self.sim;
        RobotResponseModel {
            time_constant: m.robot_time_constant,
            tension_discount: m.tension_discount,
            command_bounds: self.robot_mpc.command_bounds,
            noise_std: m.robot_noise_std,
        }
    }

    pub fn leash(&self) -> LeashModel {
        LeashModel { slack_length: self.sim.slack_length }
    }
}

/// Replaces a leaf with a value parsed to the leaf's existing type.
fn assign(slot: &mut toml::Value, raw: &str, key: &str) -> Result<(), ConfigError> {
    let bad = |want: &'static str| ConfigError::BadValue {
        key: key.to_string(),
        want,
        got: raw.to_string(),
    };
    let new = match slot {
        toml::Value::Integer(_) => {
            toml::Value::Integer(raw.trim().parse::<i64>().map_err(|_| bad("an integer"))?)
        }
        toml::Value::Float(_) => {
            toml::Value::Float(raw.trim().parse::<f64>().map_err(|_| bad("a number"))?)
        }
        toml::Value::Boolean(_) => {
            toml::Value::Boolean(raw.trim().parse::<bool>().map_err(|_| bad("true or false"))?)
        }
        toml::Value::String(_) => toml::Value::String(raw.to_string()),
        toml::Value::Array(_) => {
            let doc: toml::Table = format!("v = {raw}")
                .parse()
                .map_err(|_| bad("an array like [1.0, 2.0]"))?;
            match doc.get("v") {
                Some(toml::Value::Array(items)) => toml::Value::Array(items.clone()),
                _ => return Err(bad("an array like [1.0, 2.0]")),
            }
        }
        _ => return Err(bad("a leaf parameter, not a section")),
    };
    *slot = new;
    Ok(())
}

fn flatten(node: &toml::Value, prefix: String, out: &mut Vec<String>) {
    match node {
        toml::Value::Table(map) => {
            for (k, v) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(v, path, out);
            }
        }
        _ => out.push(prefix),
    }
}

/// Suggests known keys whose last segment resembles the failing segment.
fn hint_for(segment: &str) -> String {
    let keys = Params::nominal().schema_keys();
    let near: Vec<&String> = keys
        .iter()
        .filter(|k| {
            let leaf = k.rsplit('.').next().unwrap_or(k);
            leaf.contains(segment) || segment.contains(leaf)
        })
        .take(3)
        .collect();
    if near.is_empty() {
        String::new()
    } else {
        let list: Vec<&str> = near.iter().map(|s| s.as_str()).collect();
        format!(" (known keys include {})", list.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_profiles_validate() {
        assert!(Params::nominal().validate().is_ok());
        assert!(Params::fast().validate().is_ok());
        assert_eq!(Params::profile("nominal").unwrap(), Params::default());
        assert_eq!(Params::profile("fast").unwrap(), Params::fast());
    }

    #[test]
    fn unknown_profiles_are_an_error() {
        let err = Params::profile("warp").unwrap_err();
        assert!(err.to_string().contains("warp"));
        assert!(err.to_string().contains("nominal"));
    }

    #[test]
    fn overrides_reach_every_scalar_type() {
        let mut p = Params::nominal();
        p.set("train.epochs", "7").unwrap();
        assert_eq!(p.train.epochs, 7);
        p.set("timebase", "0.01").unwrap();
        assert_eq!(p.timebase, 0.01);
        p.set("train.teacher_forcing", "false").unwrap();
        assert!(!p.train.teacher_forcing);
        p.set("train.arch", "lstm").unwrap();
        assert_eq!(p.train.arch, "lstm");
        p.set("robot_mpc.command_bounds", "[2.0, 2.0, 1.0]").unwrap();
        assert_eq!(p.robot_mpc.command_bounds, [2.0, 2.0, 1.0]);
        p.set("sim.comfortable_speeds", "[0.8]").unwrap();
        assert_eq!(p.sim.comfortable_speeds, vec![0.8]);
    }

    #[test]
    fn array_elements_override_by_index() {
        let mut p = Params::nominal();
        p.set("robot_mpc.command_bounds.1", "0.5").unwrap();
        assert_eq!(p.robot_mpc.command_bounds, [1.5, 0.5, 1.5]);
        assert!(p.set("robot_mpc.command_bounds.3", "0.5").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_not_ignored() {
        let mut p = Params::nominal();
        let err = p.set("train.epoch", "3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.epoch"), "{msg}");
        assert!(msg.contains("train.epochs"), "should hint the near miss: {msg}");
        assert!(p.set("nope.thing", "1").is_err());
        assert_eq!(p, Params::nominal(), "failed writes leave the tree untouched");
    }

    #[test]
    fn type_mismatches_name_the_key() {
        let mut p = Params::nominal();
        let err = p.set("train.epochs", "fast").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.epochs") && msg.contains("integer"), "{msg}");
        let err = p.set("timebase", "soon").unwrap_err();
        assert!(err.to_string().contains("number"));
    }

    #[test]
    fn sections_cannot_be_assigned() {
        let mut p = Params::nominal();
        assert!(p.set("train", "5").is_err());
    }

    #[test]
    fn toml_round_trips_exactly() {
        let p = Params::fast();
        let text = p.to_toml_string().unwrap();
        let back = Params::from_toml_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn partial_files_fill_in_full_scale_defaults() {
        let p = Params::from_toml_str("[train]\nepochs = 3\n").unwrap();
        assert_eq!(p.train.epochs, 3);
        let mut want = Params::nominal();
        want.train.epochs = 3;
        assert_eq!(p, want);
        assert_eq!(Params::from_toml_str("").unwrap(), Params::nominal());
    }

    #[test]
    fn files_with_unknown_fields_fail() {
        let mut text = Params::nominal().to_toml_string().unwrap();
        text.push_str("\n[experimental]\nflag = true\n");
        assert!(Params::from_toml_str(&text).is_err());
    }

    #[test]
    fn every_schema_key_round_trips_through_set() {
        let mut p = Params::nominal();
        let tree = toml::Value::try_from(&p).unwrap();
        for key in p.schema_keys() {
            let mut node = &tree;
            for seg in key.split('.') {
                node = &node[seg];
            }
            let rendered = match node {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            p.set(&key, &rendered).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
        assert_eq!(p, Params::nominal());
    }

    #[test]
    fn schema_text_lists_the_documented_keys() {
        let text = Params::nominal().schema_text();
        for key in ["timebase", "train.epochs", "solver.population", "sim.comfortable_speeds"] {
            assert!(text.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key}");
        }
    }

    #[test]
    fn cross_field_checks_run_on_every_write() {
        let mut p = Params::nominal();
        let err = p.set("human_mpc.tension_min", "25.0").unwrap_err();
        assert!(err.to_string().contains("tension"), "{err}");
        let err = p.set("robot_mpc.horizon", "99").unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
        let err = p.set("eval.k_folds", "1").unwrap_err();
        assert!(err.to_string().contains("k_folds"), "{err}");
        assert_eq!(p, Params::nominal(), "rejected writes must not mutate");
    }

    #[test]
    fn derived_builders_match_the_fields() {
        let p = Params::fast();
        let spec = p.model_spec(DatasetKind::Human, Architecture::Tcn);
        assert_eq!(spec.input_channels, 4);
        assert_eq!(spec.window, p.data.window);
        assert_eq!(spec.output_dim, 2);
        assert_eq!(spec.layout, Layout::Tcn { blocks: 2, channels: 8, kernel: 2 });

        let tc = p.train_config(3);
        assert_eq!(tc.seed, 3);
        assert_eq!(tc.epochs, p.train.epochs);
        assert_eq!(tc.adam.learning_rate, p.train.learning_rate);

        let sc = p.shooting_config(5);
        assert_eq!(sc.seed, 5);
        assert_eq!(sc.population, p.solver.population);

        let gc = p.guided_config(7);
        assert_eq!(gc.human_horizon, p.human_mpc.horizon);
        assert_eq!(gc.tension_bounds, (2.0, 20.0));
        assert_eq!(gc.solver.seed, 7);
        assert_eq!(gc.goal_radius, p.sim.goal_radius);

        let agent = p.human_agent(0.6);
        assert_eq!(agent.comfortable_speed, 0.6);
        agent.validate().unwrap();
        p.robot_response().validate().unwrap();
        p.leash().validate().unwrap();

        assert_eq!(p.architectures().unwrap(), vec![Architecture::Tcn]);
        let mut all = p.clone();
        all.train.arch = "all".into();
        assert_eq!(all.architectures().unwrap().len(), 3);
    }
}
