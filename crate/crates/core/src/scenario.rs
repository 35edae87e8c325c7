//! Declarative scenario files: scene, vehicles, sensors, task and outputs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coop_planning::{GridSpec, PurePursuitParams};
use crate::coop_tracking::{FormationSpec, StandoffParams, TargetScript};
use crate::geometry::{NedPose, Quaternion, Vec3};
use crate::registration::IcpParams;
use crate::sensors::SensorSuiteConfig;
use crate::simcore::SimConfig;
use crate::vehicles::{VehicleParams, VehicleType};
use crate::world::{load_scene, Scene, SceneError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error at `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("duplicate vehicle id `{0}`")]
    DuplicateId(String),
    #[error("task refers to unknown vehicle `{id}` (field `{field}`)")]
    UnknownVehicle { id: String, field: String },
    #[error("vehicle `{id}` must be a {expected} for field `{field}`")]
    WrongType {
        id: String,
        expected: VehicleType,
        field: String,
    },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub position: Vec3,
    /// Yaw, pitch, roll in degrees.
    #[serde(default)]
    pub ypr_deg: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(&self) -> NedPose {
        let [y, p, r] = self.ypr_deg;
        NedPose::new(
            self.position,
            Quaternion::from_ypr(y.to_radians(), p.to_radians(), r.to_radians()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: String,
    #[serde(rename = "type")]
    pub vtype: VehicleType,
    pub pose: PoseSpec,
    #[serde(default)]
    pub sensors: SensorSuiteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingTask {
    pub ugv: String,
    pub uav: String,
    pub ugv_route: Vec<Vec3>,
    pub ugv_speed: f64,
    pub uav_route: Vec<Vec3>,
    pub uav_speed: f64,
    /// Accumulate a scan into the map every this many ticks.
    #[serde(default = "default_scan_every")]
    pub scan_every_ticks: u64,
    /// Voxel size (m) used to thin each accumulated cloud.
    #[serde(default = "default_voxel")]
    pub voxel: f64,
    #[serde(default)]
    pub icp: IcpParams,
}

fn default_scan_every() -> u64 {
    10
}

fn default_voxel() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningTask {
    pub ugv: String,
    pub uav: String,
    /// Intermediate (n, e) points the route must pass through.
    #[serde(default)]
    pub via: Vec<[f64; 2]>,
    pub goal: [f64; 2],
    pub grid: GridSpec,
    #[serde(default = "default_height_threshold")]
    pub height_threshold: f64,
    /// Obstacle inflation radius (m).
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default)]
    pub pursuit: PurePursuitParams,
    /// Replan after being stuck for this long (s).
    #[serde(default = "default_blocked_s")]
    pub blocked_replan_s: f64,
}

fn default_height_threshold() -> f64 {
    0.4
}

fn default_inflation() -> f64 {
    1.0
}

fn default_blocked_s() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingTask {
    pub uav: String,
    pub ugv: String,
    pub target: TargetScript,
    #[serde(default = "StandoffParams::uav")]
    pub uav_standoff: StandoffParams,
    #[serde(default = "StandoffParams::ugv")]
    pub ugv_standoff: StandoffParams,
    /// Camera height above the car's support surface (m).
    #[serde(default = "default_eye_height")]
    pub ugv_eye_height: f64,
    /// Error statistics ignore samples before this time (s).
    #[serde(default)]
    pub settle_s: f64,
}

fn default_eye_height() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationTask {
    pub pattern: FormationSpec,
    pub ugvs: Vec<String>,
    pub uavs: Vec<String>,
    #[serde(default = "default_formation_gain")]
    pub gain: f64,
    #[serde(default = "default_formation_lookahead")]
    pub lookahead: f64,
}

fn default_formation_gain() -> f64 {
    0.5
}

fn default_formation_lookahead() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Mapping(MappingTask),
    Planning(PlanningTask),
    Tracking(TrackingTask),
    Formation(FormationTask),
    None,
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Mapping(_) => "mapping",
            TaskSpec::Planning(_) => "planning",
            TaskSpec::Tracking(_) => "tracking",
            TaskSpec::Formation(_) => "formation",
            TaskSpec::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scene file, relative to the config file, or `bundled:<name>`.
    pub scene: String,
    pub sim: SimConfig,
    #[serde(default)]
    pub vehicle_params: VehicleParams,
    pub vehicles: Vec<VehicleSpec>,
    pub task: TaskSpec,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

/// A validated config with its scene loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub scene: Scene,
}

impl ScenarioConfig {
    /// Parses JSON, reporting the offending field path on failure.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Field {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn vehicle(&self, id: &str) -> Option<&VehicleSpec> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    fn require(&self, id: &str, vtype: VehicleType, field: &str) -> Result<(), ConfigError> {
        let v = self.vehicle(id).ok_or_else(|| ConfigError::UnknownVehicle {
            id: id.to_string(),
            field: field.to_string(),
        })?;
        if v.vtype != vtype {
            return Err(ConfigError::WrongType {
                id: id.to_string(),
                expected: vtype,
                field: field.to_string(),
            });
        }
        Ok(())
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(|m| invalid("sim", m))?;
        self.vehicle_params
            .validate()
            .map_err(|m| invalid("vehicle_params", m))?;
        let mut seen = HashSet::new();
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.id.is_empty() {
                return Err(invalid(&format!("vehicles[{i}].id"), "must be nonempty"));
            }
            if !seen.insert(v.id.as_str()) {
                return Err(ConfigError::DuplicateId(v.id.clone()));
            }
            if !v.pose.position.is_finite() || v.pose.ypr_deg.iter().any(|a| !a.is_finite()) {
                return Err(invalid(&format!("vehicles[{i}].pose"), "must be finite"));
            }
            v.sensors
                .validate()
                .map_err(|m| invalid(&format!("vehicles[{i}].sensors"), m))?;
        }
        use VehicleType::{Car, Multirotor};
        match &self.task {
            TaskSpec::Mapping(m) => {
                self.require(&m.ugv, Car, "task.ugv")?;
                self.require(&m.uav, Multirotor, "task.uav")?;
                for (field, id) in [("task.ugv", &m.ugv), ("task.uav", &m.uav)] {
                    if self.vehicle(id).is_some_and(|v| v.sensors.lidar.is_none()) {
                        return Err(invalid(field, format!("vehicle `{id}` needs a lidar")));
                    }
                }
                if m.ugv_route.is_empty() || m.uav_route.is_empty() {
                    return Err(invalid("task.ugv_route", "routes must be nonempty"));
                }
                if !(m.ugv_speed > 0.0 && m.uav_speed > 0.0) {
                    return Err(invalid("task.ugv_speed", "speeds must be positive"));
                }
                if m.scan_every_ticks == 0 || !(m.voxel > 0.0) {
                    return Err(invalid("task.scan_every_ticks", "scan interval and voxel must be positive"));
                }
                m.icp.validate().map_err(|e| invalid("task.icp", e))?;
            }
            TaskSpec::Planning(p) => {
                self.require(&p.ugv, Car, "task.ugv")?;
                self.require(&p.uav, Multirotor, "task.uav")?;
                if self.vehicle(&p.uav).is_some_and(|v| v.sensors.depth.is_none()) {
                    return Err(invalid("task.uav", format!("vehicle `{}` needs a depth camera", p.uav)));
                }
                p.grid.validate().map_err(|e| invalid("task.grid", e))?;
                p.pursuit.validate().map_err(|e| invalid("task.pursuit", e))?;
                if !(p.height_threshold > 0.0) {
                    return Err(invalid("task.height_threshold", "must be positive"));
                }
                if !(p.inflation >= 0.0 && p.blocked_replan_s > 0.0) {
                    return Err(invalid("task.inflation", "inflation must be nonnegative and blocked_replan_s positive"));
                }
            }
            TaskSpec::Tracking(t) => {
                self.require(&t.uav, Multirotor, "task.uav")?;
                self.require(&t.ugv, Car, "task.ugv")?;
                t.target.validate().map_err(|e| invalid("task.target", e))?;
                t.uav_standoff.validate().map_err(|e| invalid("task.uav_standoff", e))?;
                t.ugv_standoff.validate().map_err(|e| invalid("task.ugv_standoff", e))?;
                if !(t.ugv_eye_height > 0.0 && t.settle_s >= 0.0) {
                    return Err(invalid("task.ugv_eye_height", "must be positive"));
                }
            }
            TaskSpec::Formation(f) => {
                f.pattern.validate().map_err(|e| invalid("task.pattern", e))?;
                if f.ugvs.len() != f.pattern.ugv_count || f.uavs.len() != f.pattern.uav_count {
                    return Err(invalid("task.pattern", "ugv_count/uav_count must match the listed vehicles"));
                }
                for (i, id) in f.ugvs.iter().enumerate() {
                    self.require(id, Car, &format!("task.ugvs[{i}]"))?;
                }
                for (i, id) in f.uavs.iter().enumerate() {
                    self.require(id, Multirotor, &format!("task.uavs[{i}]"))?;
                }
                if !(f.gain > 0.0 && f.lookahead > 0.0) {
                    return Err(invalid("task.gain", "gain and lookahead must be positive"));
                }
            }
            TaskSpec::None => {}
        }
        Ok(())
    }

    /// Loads the scene. Relative paths resolve against `base`.
    pub fn load_scene(&self, base: Option<&Path>) -> Result<Scene, ConfigError> {
        if let Some(name) = self.scene.strip_prefix("bundled:") {
            return crate::bundled::scene(name).ok_or_else(|| invalid("scene", format!("no bundled scene `{name}`")));
        }
        let path = Path::new(&self.scene);
        let full = match base {
            Some(b) if path.is_relative() => b.join(path),
            _ => path.to_path_buf(),
        };
        Ok(load_scene(full)?)
    }
}

impl Scenario {
    pub fn from_text(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let config = ScenarioConfig::parse(text)?;
        config.validate()?;
        let scene = config.load_scene(base)?;
        Ok(Self { config, scene })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text, path.parent())
    }
}
