//! Lockstep simulation engine.
//!
//! One thread owns [`Simulation`] and steps it. Everyone else talks to it
//! through a [`SimHandle`]: commands go into a latest-wins mailbox that is
//! drained at the start of each tick, and reads see an immutable snapshot
//! published at the end of each tick.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimTime;
use crate::coop_tracking::{TargetScript, TargetTruth};
use crate::geometry::{NedPose, Vec3};
use crate::sensors::{
    capture_depth, lidar_scan, sensor_pose, DepthGrid, Odometry, PointCloud, SensorSuiteConfig,
};
use crate::vehicles::{
    step_car, step_uav, VehicleCommand, VehicleError, VehicleParams, VehicleState, VehicleType,
};
use crate::world::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("vehicle id `{0}` is already registered")]
    DuplicateId(String),
    #[error("unknown vehicle `{0}`")]
    UnknownVehicle(String),
    #[error("vehicle `{id}` has no {sensor} configured")]
    NoSuchSensor { id: String, sensor: &'static str },
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock pacing; 0 runs as fast as possible.
    #[serde(default)]
    pub realtime_factor: f64,
}

fn default_dt() -> f64 {
    0.02
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64, seed: u64) -> Self {
        Self {
            dt,
            duration,
            seed,
            realtime_factor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("sim.dt must be positive, got {}", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(format!("sim.duration must be positive, got {}", self.duration));
        }
        if !(self.realtime_factor >= 0.0 && self.realtime_factor.is_finite()) {
            return Err("sim.realtime_factor must be nonnegative".into());
        }
        Ok(())
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VehicleInfo {
    pub id: String,
    pub vehicle_type: VehicleType,
}

/// Published per-vehicle view for one tick.
#[derive(Debug, Clone)]
pub struct VehicleSnapshot {
    pub state: VehicleState,
    pub sensors: SensorSuiteConfig,
    pub lidar: Option<Arc<PointCloud>>,
    pub depth: Option<Arc<DepthGrid>>,
}

impl VehicleSnapshot {
    pub fn odometry(&self) -> Odometry {
        Odometry {
            vehicle_id: self.state.id.clone(),
            stamp: self.state.stamp,
            pose: self.state.pose,
            velocity: self.state.velocity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TickSnapshot {
    pub time: SimTime,
    pub vehicles: Vec<VehicleSnapshot>,
    pub target: Option<TargetTruth>,
    index: HashMap<String, usize>,
}

impl TickSnapshot {
    pub fn vehicle(&self, id: &str) -> Option<&VehicleSnapshot> {
        self.index.get(id).map(|&i| &self.vehicles[i])
    }

    pub fn info(&self) -> Vec<VehicleInfo> {
        self.vehicles
            .iter()
            .map(|v| VehicleInfo {
                id: v.state.id.clone(),
                vehicle_type: v.state.vtype,
            })
            .collect()
    }

    /// Stamps that must agree for this tick: every vehicle state plus
    /// every sensor frame due on this tick.
    pub fn due_stamps(&self) -> Vec<SimTime> {
        let tick = self.time.tick();
        let mut out = Vec::new();
        for v in &self.vehicles {
            out.push(v.state.stamp);
            if let (Some(cfg), Some(frame)) = (&v.sensors.lidar, &v.lidar) {
                if tick.is_multiple_of(cfg.every_ticks) {
                    out.push(frame.stamp);
                }
            }
            if let (Some(cfg), Some(frame)) = (&v.sensors.depth, &v.depth) {
                if tick.is_multiple_of(cfg.every_ticks) {
                    out.push(frame.stamp);
                }
            }
        }
        if let Some(t) = &self.target {
            out.push(t.stamp);
        }
        out
    }
}

struct SharedState {
    mailbox: Mutex<HashMap<String, VehicleCommand>>,
    snapshot: RwLock<Arc<TickSnapshot>>,
    params: VehicleParams,
}

/// Cloneable, thread-safe access to a running simulation.
#[derive(Clone)]
pub struct SimHandle {
    shared: Arc<SharedState>,
}

impl SimHandle {
    pub fn snapshot(&self) -> Arc<TickSnapshot> {
        self.shared.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn time(&self) -> SimTime {
        self.snapshot().time
    }

    pub fn vehicles(&self) -> Vec<VehicleInfo> {
        self.snapshot().info()
    }

    pub fn vehicle_type(&self, id: &str) -> Option<VehicleType> {
        self.snapshot().vehicle(id).map(|v| v.state.vtype)
    }

    pub fn target_truth(&self) -> Option<TargetTruth> {
        self.snapshot().target
    }

    pub fn api(&self, id: &str) -> Result<VehicleApi, SimError> {
        let vtype = self
            .vehicle_type(id)
            .ok_or_else(|| SimError::UnknownVehicle(id.to_string()))?;
        Ok(VehicleApi {
            handle: self.clone(),
            id: id.to_string(),
            vtype,
        })
    }

    pub fn read_odometry(&self, id: &str) -> Result<Odometry, SimError> {
        self.snapshot()
            .vehicle(id)
            .map(VehicleSnapshot::odometry)
            .ok_or_else(|| SimError::UnknownVehicle(id.to_string()))
    }

    /// Queues `cmd` for `id`; it takes effect at the next tick boundary.
    pub fn submit(&self, id: &str, cmd: VehicleCommand) -> Result<SimTime, SimError> {
        let snap = self.snapshot();
        let v = snap
            .vehicle(id)
            .ok_or_else(|| SimError::UnknownVehicle(id.to_string()))?;
        if cmd.vehicle_type() != v.state.vtype {
            return Err(VehicleError::TypeMismatch {
                id: id.to_string(),
                expected: v.state.vtype,
                actual: cmd.vehicle_type(),
            }
            .into());
        }
        match &cmd {
            VehicleCommand::Uav(c) => c.validate()?,
            VehicleCommand::Car(c) => c.validate(&self.shared.params.car)?,
        }
        self.shared
            .mailbox
            .lock()
            .expect("mailbox lock")
            .insert(id.to_string(), cmd);
        Ok(snap.time)
    }
}

/// Per-vehicle API instance: every call is scoped to one vehicle.
#[derive(Clone)]
pub struct VehicleApi {
    handle: SimHandle,
    id: String,
    vtype: VehicleType,
}

impl VehicleApi {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vehicle_type(&self) -> VehicleType {
        self.vtype
    }

    fn with<T>(&self, f: impl FnOnce(&VehicleSnapshot) -> T) -> T {
        let snap = self.handle.snapshot();
        f(snap.vehicle(&self.id).expect("registered vehicles stay registered"))
    }

    pub fn state(&self) -> VehicleState {
        self.with(|v| v.state.clone())
    }

    pub fn odometry(&self) -> Odometry {
        self.with(VehicleSnapshot::odometry)
    }

    pub fn lidar(&self) -> Result<Arc<PointCloud>, SimError> {
        self.with(|v| v.lidar.clone()).ok_or_else(|| SimError::NoSuchSensor {
            id: self.id.clone(),
            sensor: "lidar",
        })
    }

    pub fn depth(&self) -> Result<Arc<DepthGrid>, SimError> {
        self.with(|v| v.depth.clone()).ok_or_else(|| SimError::NoSuchSensor {
            id: self.id.clone(),
            sensor: "depth",
        })
    }

    pub fn send_command(&self, cmd: VehicleCommand) -> Result<SimTime, SimError> {
        self.handle.submit(&self.id, cmd)
    }
}

struct Slot {
    state: VehicleState,
    command: VehicleCommand,
    sensors: SensorSuiteConfig,
    rng: Xoshiro256PlusPlus,
    lidar: Option<Arc<PointCloud>>,
    depth: Option<Arc<DepthGrid>>,
}

/// One trajectory log row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRow {
    pub time: SimTime,
    pub vehicle: usize,
    pub position: Vec3,
    pub yaw: f64,
    pub velocity: Vec3,
}

pub const TRAJECTORY_HEADER: &str = "tick,seconds,vehicle_id,n,e,d,yaw,vn,ve,vd";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RealtimeStats {
    pub ticks: u64,
    pub overruns: u64,
    /// The first few overrun ticks with how late each finished.
    pub late_ticks: Vec<(u64, Duration)>,
}

pub struct Simulation {
    scene: Arc<Scene>,
    config: SimConfig,
    params: VehicleParams,
    time: SimTime,
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
    master_rng: Xoshiro256PlusPlus,
    target: Option<TargetScript>,
    shared: Arc<SharedState>,
    recording: bool,
    log: Vec<TrajRow>,
    sync_violations: u64,
}

impl Simulation {
    pub fn new(scene: Arc<Scene>, config: SimConfig, params: VehicleParams) -> Result<Self, SimError> {
        config.validate().map_err(SimError::InvalidConfig)?;
        params.validate().map_err(SimError::InvalidConfig)?;
        let time = SimTime::zero(config.dt);
        let empty = TickSnapshot {
            time,
            vehicles: Vec::new(),
            target: None,
            index: HashMap::new(),
        };
        Ok(Self {
            scene,
            config,
            params,
            time,
            slots: Vec::new(),
            index: HashMap::new(),
            master_rng: Xoshiro256PlusPlus::seed_from_u64(config.seed),
            target: None,
            shared: Arc::new(SharedState {
                mailbox: Mutex::new(HashMap::new()),
                snapshot: RwLock::new(Arc::new(empty)),
                params,
            }),
            recording: true,
            log: Vec::new(),
            sync_violations: 0,
        })
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn time(&self) -> SimTime {
        self.time
    }

    pub fn handle(&self) -> SimHandle {
        SimHandle {
            shared: self.shared.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Keep (default) or drop per-tick trajectory rows.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn log(&self) -> &[TrajRow] {
        &self.log
    }

    pub fn sync_violations(&self) -> u64 {
        self.sync_violations
    }

    pub fn vehicle_ids(&self) -> Vec<&str> {
        self.slots.iter().map(|s| s.state.id.as_str()).collect()
    }

    pub fn state(&self, id: &str) -> Option<&VehicleState> {
        self.index.get(id).map(|&i| &self.slots[i].state)
    }

    pub fn set_target(&mut self, script: TargetScript) {
        self.target = Some(script);
        self.publish();
    }

    pub fn target_truth(&self) -> Option<TargetTruth> {
        self.target.as_ref().map(|t| t.truth(self.time))
    }

    /// Adds a vehicle at rest. Cars are placed on their support surface.
    pub fn register_vehicle(
        &mut self,
        id: &str,
        vtype: VehicleType,
        initial: NedPose,
        sensors: SensorSuiteConfig,
    ) -> Result<VehicleApi, SimError> {
        if id.is_empty() {
            return Err(SimError::InvalidConfig("vehicle id must be nonempty".into()));
        }
        if self.index.contains_key(id) {
            return Err(SimError::DuplicateId(id.to_string()));
        }
        if !initial.is_valid() {
            return Err(SimError::InvalidConfig(format!("vehicle `{id}` has an invalid pose")));
        }
        sensors
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("vehicle `{id}`: {e}")))?;
        let mut pose = initial;
        match vtype {
            VehicleType::Car => {
                let p = pose.position;
                pose.position.d = self.scene.support_d(p.n, p.e, p.d, self.params.car.max_step);
            }
            VehicleType::Multirotor => {
                pose.position.d = pose.position.d.min(self.scene.ground_d);
            }
        }
        self.master_rng.jump();
        let mut slot = Slot {
            state: VehicleState::at_rest(id, vtype, pose, self.time),
            command: VehicleCommand::idle(vtype),
            sensors,
            rng: self.master_rng.clone(),
            lidar: None,
            depth: None,
        };
        self.sense(&mut slot, true);
        self.index.insert(id.to_string(), self.slots.len());
        self.slots.push(slot);
        self.publish();
        Ok(VehicleApi {
            handle: self.handle(),
            id: id.to_string(),
            vtype,
        })
    }

    pub fn vehicle(&self, id: &str) -> Result<VehicleApi, SimError> {
        self.handle().api(id)
    }

    fn sense(&self, slot: &mut Slot, force: bool) {
        let tick = self.time.tick();
        if let Some(cfg) = &slot.sensors.lidar {
            if force || tick.is_multiple_of(cfg.every_ticks) {
                let frame = format!("{}/lidar", slot.state.id);
                let cloud = lidar_scan(&self.scene, &slot.state.pose, cfg, &mut slot.rng, &frame, self.time);
                slot.lidar = Some(Arc::new(cloud));
            }
        }
        if let Some(cfg) = &slot.sensors.depth {
            if force || tick.is_multiple_of(cfg.every_ticks) {
                slot.depth = Some(Arc::new(capture_depth(&self.scene, &slot.state.pose, cfg, self.time)));
            }
        }
    }

    fn publish(&self) {
        let snap = TickSnapshot {
            time: self.time,
            vehicles: self
                .slots
                .iter()
                .map(|s| VehicleSnapshot {
                    state: s.state.clone(),
                    sensors: s.sensors,
                    lidar: s.lidar.clone(),
                    depth: s.depth.clone(),
                })
                .collect(),
            target: self.target_truth(),
            index: self.index.clone(),
        };
        *self.shared.snapshot.write().expect("snapshot lock") = Arc::new(snap);
    }

    /// Sets a vehicle's active command directly, bypassing the mailbox.
    pub fn command(&mut self, id: &str, cmd: VehicleCommand) -> Result<(), SimError> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| SimError::UnknownVehicle(id.to_string()))?;
        let vtype = self.slots[i].state.vtype;
        if cmd.vehicle_type() != vtype {
            return Err(VehicleError::TypeMismatch {
                id: id.to_string(),
                expected: vtype,
                actual: cmd.vehicle_type(),
            }
            .into());
        }
        self.slots[i].command = cmd;
        Ok(())
    }

    /// Advances every vehicle, the clock and the sensors by one tick.
    pub fn step(&mut self) -> SimTime {
        let pending = std::mem::take(&mut *self.shared.mailbox.lock().expect("mailbox lock"));
        let dt = self.config.dt;
        let mut slots = std::mem::take(&mut self.slots);
        for slot in &mut slots {
            if let Some(cmd) = pending.get(&slot.state.id) {
                slot.command = *cmd;
            }
            let next = match &slot.command {
                VehicleCommand::Uav(c) => step_uav(&slot.state, c, &self.params, self.scene.ground_d, dt),
                VehicleCommand::Car(c) => step_car(&slot.state, c, &self.params, &self.scene, dt),
            };
            slot.state = next.expect("commands are type-checked on submission");
        }
        self.time = self.time.next();
        for slot in &mut slots {
            self.sense(slot, false);
        }
        self.slots = slots;

        if self.recording {
            for (i, s) in self.slots.iter().enumerate() {
                self.log.push(TrajRow {
                    time: self.time,
                    vehicle: i,
                    position: s.state.position(),
                    yaw: s.state.yaw(),
                    velocity: s.state.velocity,
                });
            }
        }
        self.publish();
        let snap = self.handle().snapshot();
        if snap.due_stamps().iter().any(|s| *s != self.time) {
            self.sync_violations += 1;
        }
        self.time
    }

    /// World-frame pose of a vehicle's LiDAR.
    pub fn lidar_world(&self, id: &str) -> Option<PointCloud> {
        let slot = &self.slots[*self.index.get(id)?];
        let cfg = slot.sensors.lidar.as_ref()?;
        let cloud = slot.lidar.as_ref()?;
        Some(cloud.to_world(&sensor_pose(&slot.state.pose, &cfg.mount)))
    }

    pub fn trajectory_csv(&self) -> String {
        let mut out = String::with_capacity(64 * self.log.len() + 64);
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for r in &self.log {
            let id = &self.slots[r.vehicle].state.id;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.time.tick(),
                r.time.seconds(),
                id,
                r.position.n,
                r.position.e,
                r.position.d,
                r.yaw,
                r.velocity.n,
                r.velocity.e,
                r.velocity.d
            );
        }
        out
    }

    /// `(seconds, position)` series for one vehicle, starting with its
    /// registration pose.
    pub fn positions(&self, id: &str) -> Vec<(f64, Vec3)> {
        let Some(&i) = self.index.get(id) else {
            return Vec::new();
        };
        self.log
            .iter()
            .filter(|r| r.vehicle == i)
            .map(|r| (r.time.seconds(), r.position))
            .collect()
    }

    /// Steps in wall-clock time at `factor` x real time until `stop` is set
    /// or `max_ticks` have run. A tick overruns when it finishes after its
    /// wall-clock deadline.
    pub fn run_realtime(
        &mut self,
        factor: f64,
        stop: &AtomicBool,
        max_ticks: Option<u64>,
        mut on_tick: impl FnMut(&mut Simulation),
    ) -> RealtimeStats {
        let mut stats = RealtimeStats::default();
        let period = if factor > 0.0 {
            Some(Duration::from_secs_f64(self.config.dt / factor))
        } else {
            None
        };
        let start = Instant::now();
        while !stop.load(Ordering::Relaxed) && max_ticks.is_none_or(|m| stats.ticks < m) {
            self.step();
            on_tick(self);
            stats.ticks += 1;
            if let Some(p) = period {
                let deadline = start + p * stats.ticks as u32;
                let now = Instant::now();
                if now > deadline {
                    stats.overruns += 1;
                    if stats.late_ticks.len() < 16 {
                        stats.late_ticks.push((self.time.tick(), now - deadline));
                    }
                } else {
                    std::thread::sleep(deadline - now);
                }
            }
        }
        stats
    }
}
