//! Scenario configuration: loading, validation, overrides, library.
//!
//! Scenarios are TOML files with a fixed key set (unknown keys are rejected,
//! typos surface as load errors with the offending path). `load` fills every
//! omitted field with its documented default, so the canonical form always
//! carries the full key set; `--set key=value` overrides are applied against
//! that canonical form and therefore can name any key.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::barrier::{Barrier, BarrierSet, RobotSdf};
use crate::cost::CostConfig;
use crate::dynamics::{ModelKind, RobotModel};
use crate::geometry::{Activation, SdfModel, ShapeDescriptor};
use crate::mppi::{MppiMode, MppiParams};
use crate::projection::ProjectionWeights;
use crate::{Error, Result};

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub control_min: Vec<f64>,
    pub control_max: Vec<f64>,
}

fn default_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    #[serde(default = "default_shape")]
    pub shape: String,
    #[serde(default)]
    pub radius: f64,
    #[serde(default)]
    pub half_x: f64,
    #[serde(default)]
    pub half_y: f64,
    #[serde(default)]
    pub circumradius: f64,
    /// Optional path to a trained SDF model; replaces the analytic body SDF
    /// in point-cloud barriers.
    #[serde(default)]
    pub sdf_model: String,
    #[serde(default = "default_activation")]
    pub sdf_activation: String,
}

fn default_shape() -> String {
    "point".into()
}

fn default_activation() -> String {
    "tanh".into()
}

impl Default for RobotSection {
    fn default() -> Self {
        RobotSection {
            shape: default_shape(),
            radius: 0.0,
            half_x: 0.0,
            half_y: 0.0,
            circumradius: 0.0,
            sdf_model: String::new(),
            sdf_activation: default_activation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub center: [f64; 2],
    pub radius: f64,
    /// 0 keeps the analytic circle barrier; n > 0 samples n boundary points
    /// and adds one SDF barrier per point.
    #[serde(default)]
    pub pointcloud: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSection {
    pub normal: [f64; 2],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_h_act")]
    pub h_act: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_buffer() -> f64 {
    0.5
}
fn default_margin() -> f64 {
    0.02
}
fn default_h_act() -> f64 {
    3.0
}
fn default_kappa() -> f64 {
    0.5
}

impl Default for BarrierSection {
    fn default() -> Self {
        BarrierSection {
            buffer: default_buffer(),
            margin: default_margin(),
            h_act: default_h_act(),
            kappa: default_kappa(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub q_goal: Vec<f64>,
    #[serde(default = "default_terminal_scale")]
    pub terminal_scale: f64,
    #[serde(default = "default_violation_penalty")]
    pub violation_penalty: f64,
    #[serde(default = "default_h_floor")]
    pub h_floor: f64,
}

fn default_terminal_scale() -> f64 {
    10.0
}
fn default_violation_penalty() -> f64 {
    1e4
}
fn default_h_floor() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    pub samples: usize,
    pub horizon: usize,
    pub sigma_u: Vec<f64>,
    #[serde(default = "default_sigma_alpha")]
    pub sigma_alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> String {
    "br".into()
}
fn default_sigma_alpha() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSection {
    #[serde(default = "default_q_alpha")]
    pub q_alpha: f64,
}

fn default_q_alpha() -> f64 {
    10.0
}

impl Default for ProjectionSection {
    fn default() -> Self {
        ProjectionSection { q_alpha: default_q_alpha() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSection {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    /// Capture rollout batches every n steps (0 disables; feeds SVG fans).
    #[serde(default)]
    pub snapshot_stride: u64,
}

fn default_max_steps() -> usize {
    400
}
fn default_goal_tolerance() -> f64 {
    0.3
}

impl Default for EpisodeSection {
    fn default() -> Self {
        EpisodeSection {
            max_steps: default_max_steps(),
            goal_tolerance: default_goal_tolerance(),
            snapshot_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    /// Pixels per meter.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    60.0
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection { scale: default_scale() }
    }
}

/// Full scenario description; the canonical on-disk form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub model: ModelSection,
    #[serde(default)]
    pub robot: RobotSection,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSection>,
    #[serde(default)]
    pub walls: Vec<WallSection>,
    #[serde(default)]
    pub barriers: BarrierSection,
    pub cost: CostSection,
    pub mppi: MppiSection,
    #[serde(default)]
    pub projection: ProjectionSection,
    #[serde(default)]
    pub episode: EpisodeSection,
    #[serde(default)]
    pub render: RenderSection,
}

impl ScenarioConfig {
    /// Parse and validate a scenario from TOML text.
    pub fn parse(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| cfg_err("scenario", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a file path.
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)?;
        ScenarioConfig::parse(&text).map_err(|e| match e {
            Error::Config { path: p, message } => {
                Error::Config { path: format!("{}: {p}", path.display()), message }
            }
            other => other,
        })
    }

    /// Canonical TOML text with every field materialized.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Apply `key=value` overrides (dotted paths into the canonical form).
    /// Overrides must name existing keys; values are parsed as TOML.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
        let mut table: toml::Table =
            toml::from_str(&self.to_toml()).map_err(|e| cfg_err("scenario", e.to_string()))?;
        for (key, raw) in overrides {
            apply_override(&mut table, key, raw)?;
        }
        let text =
            toml::to_string_pretty(&table).map_err(|e| cfg_err("scenario", e.to_string()))?;
        ScenarioConfig::parse(&text)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model.name)
            .ok_or_else(|| cfg_err("model.name", format!("unknown model `{}`", self.model.name)))
    }

    pub fn mode(&self) -> Result<MppiMode> {
        MppiMode::parse(&self.mppi.mode)
            .ok_or_else(|| cfg_err("mppi.mode", format!("unknown mode `{}`", self.mppi.mode)))
    }

    pub fn robot_shape(&self) -> Result<ShapeDescriptor> {
        match self.robot.shape.as_str() {
            "point" => Ok(ShapeDescriptor::Point),
            "circle" => Ok(ShapeDescriptor::Circle { radius: self.robot.radius }),
            "rectangle" => Ok(ShapeDescriptor::Rectangle {
                half_x: self.robot.half_x,
                half_y: self.robot.half_y,
            }),
            "hexagon" => Ok(ShapeDescriptor::Hexagon { circumradius: self.robot.circumradius }),
            other => Err(cfg_err("robot.shape", format!("unknown shape `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.model_kind()?;
        let probe = RobotModel::with_limit(kind, 1.0, 1.0);
        let (n, m) = (probe.state_dim(), probe.control_dim());
        if !(self.model.dt > 0.0) || !self.model.dt.is_finite() {
            return Err(cfg_err("model.dt", "must be positive and finite"));
        }
        if self.model.control_min.len() != m || self.model.control_max.len() != m {
            return Err(cfg_err("model.control_min", format!("bounds must have length {m}")));
        }
        for j in 0..m {
            let (lo, hi) = (self.model.control_min[j], self.model.control_max[j]);
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(cfg_err(
                    &format!("model.control_min[{j}]"),
                    "bounds must be finite with min < max",
                ));
            }
        }
        if self.start.len() != n {
            return Err(cfg_err(
                "start",
                format!("must have length {n} for model {}", self.model.name),
            ));
        }
        if self.goal.len() != n {
            return Err(cfg_err(
                "goal",
                format!("must have length {n} for model {}", self.model.name),
            ));
        }
        if self.start.iter().chain(self.goal.iter()).any(|v| !v.is_finite()) {
            return Err(cfg_err("start", "start/goal entries must be finite"));
        }
        if self.cost.q_goal.len() != n {
            return Err(cfg_err("cost.q_goal", format!("must have length {n}")));
        }
        if self.cost.q_goal.iter().any(|q| *q < 0.0 || !q.is_finite()) {
            return Err(cfg_err("cost.q_goal", "entries must be nonnegative"));
        }
        if !(self.cost.violation_penalty > 0.0) {
            return Err(cfg_err("cost.violation_penalty", "must be positive"));
        }
        if !(self.cost.h_floor > 0.0) {
            return Err(cfg_err("cost.h_floor", "must be positive"));
        }
        if self.cost.terminal_scale < 0.0 {
            return Err(cfg_err("cost.terminal_scale", "must be nonnegative"));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if !(ob.radius > 0.0) {
                return Err(cfg_err(&format!("obstacles[{i}].radius"), "must be positive"));
            }
            if ob.center.iter().any(|v| !v.is_finite()) {
                return Err(cfg_err(&format!("obstacles[{i}].center"), "must be finite"));
            }
        }
        for (i, w) in self.walls.iter().enumerate() {
            if w.normal[0].hypot(w.normal[1]) < 1e-12 {
                return Err(cfg_err(&format!("walls[{i}].normal"), "must be nonzero"));
            }
        }
        let shape = self.robot_shape()?;
        match shape {
            ShapeDescriptor::Circle { radius } if !(radius > 0.0) => {
                return Err(cfg_err("robot.radius", "must be positive for circle robots"));
            }
            ShapeDescriptor::Rectangle { half_x, half_y } if !(half_x > 0.0 && half_y > 0.0) => {
                return Err(cfg_err("robot.half_x", "half extents must be positive"));
            }
            ShapeDescriptor::Hexagon { circumradius } if !(circumradius > 0.0) => {
                return Err(cfg_err("robot.circumradius", "must be positive"));
            }
            _ => {}
        }
        let plain_circle_obstacles = self.obstacles.iter().any(|o| o.pointcloud == 0);
        if plain_circle_obstacles
            && !matches!(shape, ShapeDescriptor::Point | ShapeDescriptor::Circle { .. })
        {
            return Err(cfg_err(
                "obstacles",
                "non-circular robots need `pointcloud` obstacles (set pointcloud = n)",
            ));
        }
        if Activation::parse(&self.robot.sdf_activation).is_none() {
            return Err(cfg_err("robot.sdf_activation", "must be `tanh` or `softplus`"));
        }
        if !(self.barriers.buffer > 0.0) {
            return Err(cfg_err("barriers.buffer", "must be positive"));
        }
        if self.barriers.margin < 0.0 {
            return Err(cfg_err("barriers.margin", "must be nonnegative"));
        }
        if !(self.barriers.h_act > 0.0) {
            return Err(cfg_err("barriers.h_act", "must be positive"));
        }
        if self.barriers.kappa < 0.0 {
            return Err(cfg_err("barriers.kappa", "must be nonnegative"));
        }
        self.mode()?;
        if self.mppi.samples < 1 {
            return Err(cfg_err("mppi.samples", "must be at least 1"));
        }
        if self.mppi.horizon < 1 {
            return Err(cfg_err("mppi.horizon", "must be at least 1"));
        }
        if self.mppi.sigma_u.len() != m {
            return Err(cfg_err("mppi.sigma_u", format!("must have length {m}")));
        }
        if self.mppi.sigma_u.iter().any(|s| !(*s > 0.0)) {
            return Err(cfg_err("mppi.sigma_u", "entries must be positive"));
        }
        if !(self.mppi.sigma_alpha > 0.0) {
            return Err(cfg_err("mppi.sigma_alpha", "must be positive"));
        }
        if !(self.mppi.lambda > 0.0) {
            return Err(cfg_err("mppi.lambda", "must be positive"));
        }
        if self.mppi.gamma < 0.0 || self.mppi.gamma > self.mppi.lambda {
            return Err(cfg_err("mppi.gamma", "must lie in [0, lambda]"));
        }
        if !(self.projection.q_alpha > 0.0) {
            return Err(cfg_err("projection.q_alpha", "must be positive"));
        }
        if self.episode.max_steps < 1 {
            return Err(cfg_err("episode.max_steps", "must be at least 1"));
        }
        if !(self.episode.goal_tolerance > 0.0) {
            return Err(cfg_err("episode.goal_tolerance", "must be positive"));
        }
        if !(self.render.scale > 0.0) {
            return Err(cfg_err("render.scale", "must be positive"));
        }
        Ok(())
    }

    /// Number of barriers the scenario declares (cloud points expand).
    pub fn barrier_count(&self) -> usize {
        self.obstacles.iter().map(|o| o.pointcloud.max(1)).sum::<usize>() + self.walls.len()
    }

    pub fn build_model(&self) -> Result<RobotModel> {
        Ok(RobotModel::new(
            self.model_kind()?,
            self.model.dt,
            self.model.control_min.clone(),
            self.model.control_max.clone(),
        ))
    }

    /// Barrier set as declared: analytic circle barriers for plain obstacles,
    /// one SDF barrier per sampled boundary point for `pointcloud` obstacles,
    /// one half-plane barrier per wall.
    pub fn build_barriers(&self) -> Result<BarrierSet> {
        let shape = self.robot_shape()?;
        let robot_radius = match shape {
            ShapeDescriptor::Point => 0.0,
            ShapeDescriptor::Circle { radius } => radius,
            _ => 0.0,
        };
        let mut barriers = Vec::new();
        let needs_sdf = self.obstacles.iter().any(|o| o.pointcloud > 0);
        let robot_sdfs = if needs_sdf {
            let sdf = if self.robot.sdf_model.is_empty() {
                RobotSdf::Analytic(shape)
            } else {
                let file = std::fs::File::open(&self.robot.sdf_model).map_err(|e| {
                    cfg_err("robot.sdf_model", format!("{}: {e}", self.robot.sdf_model))
                })?;
                let act = Activation::parse(&self.robot.sdf_activation).unwrap();
                RobotSdf::Neural(SdfModel::read(std::io::BufReader::new(file), act)?)
            };
            vec![sdf]
        } else {
            vec![]
        };
        let mut groups = Vec::new();
        for ob in &self.obstacles {
            if ob.pointcloud == 0 {
                barriers.push(Barrier::Circle {
                    center: ob.center,
                    radius: ob.radius,
                    robot_radius,
                    buffer: self.barriers.buffer,
                });
            } else {
                groups.push(crate::barrier::CloudGroup {
                    center: ob.center,
                    radius: ob.radius,
                    margin: self.barriers.margin,
                    start: barriers.len(),
                    len: ob.pointcloud,
                });
                for j in 0..ob.pointcloud {
                    let angle = 2.0 * std::f64::consts::PI * j as f64 / ob.pointcloud as f64;
                    barriers.push(Barrier::CloudPoint {
                        point: [
                            ob.center[0] + ob.radius * angle.cos(),
                            ob.center[1] + ob.radius * angle.sin(),
                        ],
                        margin: self.barriers.margin,
                        buffer: self.barriers.buffer,
                        cloud: 0,
                    });
                }
            }
        }
        for w in &self.walls {
            let norm = w.normal[0].hypot(w.normal[1]);
            barriers.push(Barrier::Halfplane {
                normal: [w.normal[0] / norm, w.normal[1] / norm],
                offset: w.offset,
                buffer: self.barriers.buffer,
            });
        }
        Ok(BarrierSet::new(barriers, robot_sdfs, self.barriers.kappa, self.barriers.h_act)
            .with_cloud_groups(groups))
    }

    pub fn build_cost(&self) -> CostConfig {
        CostConfig {
            goal: self.goal.clone(),
            q_goal: self.cost.q_goal.clone(),
            terminal_scale: self.cost.terminal_scale,
            violation_penalty: self.cost.violation_penalty,
            h_floor: self.cost.h_floor,
        }
    }

    pub fn build_params(&self) -> Result<MppiParams> {
        Ok(MppiParams {
            mode: self.mode()?,
            samples: self.mppi.samples,
            horizon: self.mppi.horizon,
            sigma_u: self.mppi.sigma_u.clone(),
            sigma_alpha: self.mppi.sigma_alpha,
            lambda: self.mppi.lambda,
            gamma: self.mppi.gamma,
            seed: self.mppi.seed,
        })
    }

    pub fn build_proj_weights(&self) -> Result<ProjectionWeights> {
        let m = self.build_model()?.control_dim();
        Ok(ProjectionWeights::identity(m, self.projection.q_alpha))
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut current: &mut toml::Value = {
        let first = *parts.first().ok_or_else(|| cfg_err(key, "empty override key"))?;
        table.get_mut(first).ok_or_else(|| cfg_err(key, format!("no such config key `{first}`")))?
    };
    for part in &parts[1..] {
        current = if let Ok(idx) = part.parse::<usize>() {
            current
                .as_array_mut()
                .and_then(|a| a.get_mut(idx))
                .ok_or_else(|| cfg_err(key, format!("no array element `{part}`")))?
        } else {
            current
                .as_table_mut()
                .and_then(|t| t.get_mut(*part))
                .ok_or_else(|| cfg_err(key, format!("no such config key `{part}`")))?
        };
    }
    // Parse the raw text as a TOML value via a throwaway assignment; bare
    // words (mode names, paths) fall back to strings.
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let compatible = matches!(
        (&*current, &parsed),
        (toml::Value::Integer(_), toml::Value::Integer(_))
            | (toml::Value::Float(_), toml::Value::Float(_))
            | (toml::Value::Float(_), toml::Value::Integer(_))
            | (toml::Value::String(_), toml::Value::String(_))
            | (toml::Value::Boolean(_), toml::Value::Boolean(_))
            | (toml::Value::Array(_), toml::Value::Array(_))
    );
    if !compatible {
        return Err(cfg_err(
            key,
            format!("override type mismatch: existing `{current}` vs new `{parsed}`"),
        ));
    }
    *current = match (&*current, parsed) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, p) => p,
    };
    Ok(())
}

/// Built-in scenario library.
pub fn library() -> &'static [(&'static str, &'static str)] {
    &[
        ("slalom", include_str!("../scenarios/slalom.toml")),
        ("narrow_gap", include_str!("../scenarios/narrow_gap.toml")),
        ("hexagon_si", include_str!("../scenarios/hexagon_si.toml")),
        ("corridor_pq", include_str!("../scenarios/corridor_pq.toml")),
    ]
}

/// Load a built-in scenario by name.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    library()
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::parse(text))
        .unwrap_or_else(|| {
            Err(cfg_err(
                "scenario",
                format!(
                    "unknown builtin `{name}` (available: {})",
                    library().iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                ),
            ))
        })
}
