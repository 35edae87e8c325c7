//! Task runners: drive a [`Simulation`] through one of the scenario tasks
//! and collect the artifacts it produces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

use crate::coop_planning::{
    astar, build_occupancy, Cell, path_csv, GridPath, OccupancyGrid, PathFollower, PlanError, PurePursuitParams, UnknownIs,
};
use crate::coop_tracking::{
    formation_commands, fuse_observations, observe_target, ugv_standoff_command, uav_standoff_command, xy_error,
    yaw_error_deg,
};
use crate::geometry::{RigidTransform, Vec3};
use crate::metrics::{error_stats, fmt1, fmt_range, fmt_vec, render_table, traj_stats, MetricsError, TrajStats};
use crate::registration::{icp, voxel_downsample, RegistrationError};
use crate::scenario::{FormationTask, MappingTask, PlanningTask, Scenario, TaskSpec, TrackingTask};
use crate::sensors::{cloud_sidecar, cloud_text, depth_to_world, PointCloud, WORLD_FRAME};
use crate::simcore::{SimError, Simulation};
use crate::vehicles::{CarCommand, UavCommand, VehicleCommand, VehicleState, UAV_WAYPOINT_CAPTURE};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("registration failed: {0}")]
    Registration(#[from] RegistrationError),
    #[error("metrics failed: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Failed(String),
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";

/// Everything a run writes, keyed by file name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArtifacts {
    pub files: BTreeMap<String, Vec<u8>>,
    pub report: Value,
}

impl RunArtifacts {
    fn add(&mut self, name: &str, body: impl Into<Vec<u8>>) {
        self.files.insert(name.to_string(), body.into());
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(|b| std::str::from_utf8(b).ok())
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Options that override the scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub realtime_factor: Option<f64>,
}

/// Sleeps between ticks when running against the wall clock.
struct Pacer {
    start: Instant,
    period: Option<Duration>,
    ticks: u32,
}

impl Pacer {
    fn new(dt: f64, factor: f64) -> Self {
        Self {
            start: Instant::now(),
            period: (factor > 0.0).then(|| Duration::from_secs_f64(dt / factor)),
            ticks: 0,
        }
    }

    fn tick(&mut self) {
        self.ticks += 1;
        if let Some(p) = self.period {
            let deadline = self.start + p * self.ticks;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
        }
    }
}

/// Builds the simulation for a scenario with every vehicle registered.
pub fn build_simulation(scenario: &Scenario, seed: Option<u64>) -> Result<Simulation, SimError> {
    let cfg = &scenario.config;
    let mut sim_cfg = cfg.sim;
    if let Some(s) = seed {
        sim_cfg.seed = s;
    }
    let mut sim = Simulation::new(Arc::new(scenario.scene.clone()), sim_cfg, cfg.vehicle_params)?;
    for v in &cfg.vehicles {
        sim.register_vehicle(&v.id, v.vtype, v.pose.to_pose(), v.sensors)?;
    }
    if let TaskSpec::Tracking(t) = &cfg.task {
        sim.set_target(t.target.clone());
    }
    Ok(sim)
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario, opts: RunOptions) -> Result<RunArtifacts, TaskError> {
    let mut sim = build_simulation(scenario, opts.seed)?;
    let factor = opts.realtime_factor.unwrap_or(scenario.config.sim.realtime_factor);
    let mut pacer = Pacer::new(sim.config().dt, factor);
    let mut out = RunArtifacts::default();
    let mut report = match &scenario.config.task {
        TaskSpec::Mapping(m) => run_mapping(&mut sim, m, &mut pacer, &mut out)?,
        TaskSpec::Planning(p) => run_planning(&mut sim, p, &mut pacer, &mut out)?,
        TaskSpec::Tracking(t) => run_tracking(&mut sim, t, &mut pacer, &mut out)?,
        TaskSpec::Formation(f) => run_formation(&mut sim, f, &mut pacer, &mut out)?,
        TaskSpec::None => {
            for _ in 0..sim.config().total_ticks() {
                sim.step();
                pacer.tick();
            }
            json!({})
        }
    };
    let obj = report.as_object_mut().expect("task reports are objects");
    obj.insert("task".into(), json!(scenario.config.task.kind()));
    obj.insert("seed".into(), json!(sim.config().seed));
    obj.insert("dt".into(), json!(sim.config().dt));
    obj.insert("ticks".into(), json!(sim.time().tick()));
    obj.insert("vehicles".into(), json!(sim.vehicle_ids()));
    obj.insert("sync_violations".into(), json!(sim.sync_violations()));
    obj.insert("trajectory_csv_path".into(), json!(TRAJECTORY_FILE));

    out.add(TRAJECTORY_FILE, sim.trajectory_csv());
    out.add(REPORT_FILE, serde_json::to_string_pretty(&report).expect("report serializes") + "\n");
    out.add(TABLE_FILE, render_report(&report).map_err(TaskError::Failed)?);
    out.report = report;
    Ok(out)
}

/// Position series of `id` from its registration pose through `until`
/// (inclusive, ticks), as `(seconds, position)`.
fn window(sim: &Simulation, id: &str, initial: Vec3, until: Option<u64>) -> Vec<(f64, Vec3)> {
    let idx = sim.vehicle_ids().iter().position(|v| *v == id).expect("registered");
    let mut out = vec![(0.0, initial)];
    out.extend(
        sim.log()
            .iter()
            .filter(|r| r.vehicle == idx && until.is_none_or(|u| r.time.tick() <= u))
            .map(|r| (r.time.seconds(), r.position)),
    );
    out
}

fn state(sim: &Simulation, id: &str) -> VehicleState {
    sim.state(id).expect("task vehicles are validated").clone()
}

fn stats_json(s: &TrajStats) -> Value {
    serde_json::to_value(s).expect("stats serialize")
}

fn run_mapping(
    sim: &mut Simulation,
    m: &MappingTask,
    pacer: &mut Pacer,
    out: &mut RunArtifacts,
) -> Result<Value, TaskError> {
    let car = sim.params().car;
    let ugv0 = state(sim, &m.ugv).position();
    let uav0 = state(sim, &m.uav).position();
    let pursuit = PurePursuitParams {
        cruise_speed: m.ugv_speed,
        ..PurePursuitParams::default()
    };
    let mut follower = PathFollower::from_route(&m.ugv_route, 0.5)?;
    let mut leg = 0usize;
    let (mut ugv_done, mut uav_done) = (None, None);
    let (mut ugv_pts, mut uav_pts) = (Vec::new(), Vec::new());

    for _ in 0..sim.config().total_ticks() {
        let ugv = state(sim, &m.ugv);
        let cmd = if ugv_done.is_some() {
            CarCommand::stop()
        } else {
            follower.step(&ugv, &pursuit, &car)
        };
        sim.command(&m.ugv, VehicleCommand::Car(cmd))?;

        let uav = state(sim, &m.uav);
        let last = m.uav_route.len() - 1;
        if leg < last && uav.position().distance(m.uav_route[leg]) < 1.0 {
            leg += 1;
        }
        let goal = m.uav_route[leg];
        let to_goal = (goal - uav.position()).horizontal();
        let yaw = (to_goal.norm() > 1.0).then(|| to_goal.e.atan2(to_goal.n));
        sim.command(
            &m.uav,
            VehicleCommand::Uav(UavCommand::Waypoint {
                waypoint: goal,
                yaw,
                speed_limit: m.uav_speed,
            }),
        )?;

        let now = sim.step();
        pacer.tick();
        if ugv_done.is_none() && follower.finished(state(sim, &m.ugv).position(), &pursuit) {
            ugv_done = Some(now.tick());
        }
        if uav_done.is_none() && leg == last && state(sim, &m.uav).position().distance(goal) < 2.0 * UAV_WAYPOINT_CAPTURE {
            uav_done = Some(now.tick());
        }
        if now.tick().is_multiple_of(m.scan_every_ticks) {
            for (id, acc) in [(&m.ugv, &mut ugv_pts), (&m.uav, &mut uav_pts)] {
                if let Some(c) = sim.lidar_world(id) {
                    acc.extend(c.points);
                }
            }
        }
    }

    let stamp = sim.time();
    let ugv_cloud = PointCloud::new(WORLD_FRAME, stamp, voxel_downsample(&ugv_pts, m.voxel));
    let uav_cloud = PointCloud::new(WORLD_FRAME, stamp, voxel_downsample(&uav_pts, m.voxel));
    // source = aerial map, target = ground map
    let result = icp(&uav_cloud.points, &ugv_cloud.points, RigidTransform::IDENTITY, &m.icp)?;
    let registration = result.report();

    out.add("ugv_cloud.xyz", cloud_text(&ugv_cloud));
    out.add("ugv_cloud.json", cloud_sidecar(&ugv_cloud));
    out.add("uav_cloud.xyz", cloud_text(&uav_cloud));
    out.add("uav_cloud.json", cloud_sidecar(&uav_cloud));
    out.add(
        "registration.json",
        serde_json::to_string_pretty(&registration).expect("report serializes") + "\n",
    );

    let ugv_stats = traj_stats(&window(sim, &m.ugv, ugv0, ugv_done))?;
    let uav_stats = traj_stats(&window(sim, &m.uav, uav0, uav_done))?;
    Ok(json!({
        "ugv": {"id": m.ugv, "completed": ugv_done.is_some(), "stats": stats_json(&ugv_stats), "cloud_points": ugv_cloud.len()},
        "uav": {"id": m.uav, "completed": uav_done.is_some(), "stats": stats_json(&uav_stats), "cloud_points": uav_cloud.len()},
        "registration": registration,
        "registration_json_path": "registration.json",
        "clouds": ["ugv_cloud.xyz", "uav_cloud.xyz"],
    }))
}

/// Plans through `points` leg by leg on `grid`.
fn plan_route(grid: &OccupancyGrid, points: &[(f64, f64)], ground_d: f64) -> Result<GridPath, TaskError> {
    let cell = |&(n, e): &(f64, f64)| grid.cell_of(n, e).ok_or(PlanError::OutsideGrid { n, e });
    let mut path: Option<GridPath> = None;
    for w in points.windows(2) {
        let leg = astar(grid, cell(&w[0])?, cell(&w[1])?, UnknownIs::Occupied, ground_d)?;
        match &mut path {
            Some(p) => p.extend(leg),
            None => path = Some(leg),
        }
    }
    path.ok_or_else(|| TaskError::Failed("route needs a start and a goal".into()))
}

fn run_planning(
    sim: &mut Simulation,
    p: &PlanningTask,
    pacer: &mut Pacer,
    out: &mut RunArtifacts,
) -> Result<Value, TaskError> {
    let car = sim.params().car;
    let ground_d = sim.scene().ground_d;
    let uav_cfg = sim_depth_cfg(sim, &p.uav);
    let uav = state(sim, &p.uav);
    let depth = sim.vehicle(&p.uav)?.depth()?;
    let points = depth_to_world(&depth, &uav.pose, &uav_cfg);
    let cloud = PointCloud::new(WORLD_FRAME, depth.stamp, points);
    let raw = build_occupancy(&[cloud], ground_d, &p.grid, p.height_threshold, &sim.scene().drivable_boxes());
    let mut grid = raw.inflate(p.inflation);

    let ugv0 = state(sim, &p.ugv).position();
    let mut route: Vec<(f64, f64)> = vec![(ugv0.n, ugv0.e)];
    route.extend(p.via.iter().map(|v| (v[0], v[1])));
    route.push((p.goal[0], p.goal[1]));
    let planned = plan_route(&grid, &route, ground_d)?;
    out.add("path.csv", path_csv(&planned));
    let mut follower = PathFollower::new(planned.world_waypoints.clone())?;
    // remaining route points, as indices into the current path
    let mut legs = leg_ends(&planned, &grid, &route);

    let hover = state(sim, &p.uav).position();
    sim.command(
        &p.uav,
        VehicleCommand::Uav(UavCommand::Waypoint {
            waypoint: hover,
            yaw: None,
            speed_limit: 1.0,
        }),
    )?;

    let blocked_limit = (p.blocked_replan_s / sim.config().dt).ceil() as u64;
    let (mut blocked, mut replans, mut done) = (0u64, 0u32, None);
    let mut replan_failures = 0u32;
    for _ in 0..sim.config().total_ticks() {
        let ugv = state(sim, &p.ugv);
        let cmd = if done.is_some() {
            CarCommand::stop()
        } else {
            follower.step(&ugv, &p.pursuit, &car)
        };
        sim.command(&p.ugv, VehicleCommand::Car(cmd))?;
        let now = sim.step();
        pacer.tick();
        let after = state(sim, &p.ugv);
        if done.is_none() && follower.finished(after.position(), &p.pursuit) {
            done = Some(now.tick());
        }
        let wants_motion = matches!(cmd, CarCommand::Drive { speed, .. } if speed != 0.0);
        if done.is_none() && wants_motion && after.speed() == 0.0 {
            blocked += 1;
        } else {
            blocked = 0;
        }
        if blocked > blocked_limit {
            blocked = 0;
            let pos = after.position();
            let ahead = pos + Vec3::new(after.yaw().cos(), after.yaw().sin(), 0.0) * 1.5;
            grid.mark_occupied(ahead.n, ahead.e, 1.0);
            legs.retain(|&(i, _)| i > follower.progress());
            let mut rest = vec![(pos.n, pos.e)];
            rest.extend(legs.iter().map(|&(_, w)| w));
            match plan_route(&grid, &rest, ground_d) {
                Ok(path) => {
                    legs = leg_ends(&path, &grid, &rest);
                    follower = PathFollower::new(path.world_waypoints)?;
                    replans += 1;
                }
                Err(_) => replan_failures += 1,
            }
        }
    }

    out.add("grid.pgm", grid.to_pgm());
    out.add(
        "grid.json",
        serde_json::to_string_pretty(&grid.sidecar_json()).expect("sidecar serializes") + "\n",
    );
    let stats = traj_stats(&window(sim, &p.ugv, ugv0, done))?;
    Ok(json!({
        "ugv": {"id": p.ugv, "reached_goal": done.is_some(), "stats": stats_json(&stats)},
        "path": {
            "cells": planned.cells.len(),
            "length_m": planned.length_m(p.grid.resolution),
            "path_csv_path": "path.csv",
            "replans": replans,
            "replan_failures": replan_failures,
        },
        "grid": {
            "pgm_path": "grid.pgm",
            "sidecar_path": "grid.json",
            "occupied": grid.count(Cell::Occupied),
            "free": grid.count(Cell::Free),
            "unknown": grid.count(Cell::Unknown),
        },
    }))
}

fn sim_depth_cfg(sim: &Simulation, id: &str) -> crate::sensors::DepthConfig {
    sim.handle()
        .snapshot()
        .vehicle(id)
        .and_then(|v| v.sensors.depth)
        .expect("validated: planning uav has a depth camera")
}

/// For each route point after the first, the index of the path waypoint
/// at which that leg ends.
fn leg_ends(path: &GridPath, grid: &OccupancyGrid, route: &[(f64, f64)]) -> Vec<(usize, (f64, f64))> {
    let mut out = Vec::new();
    let mut from = 0;
    for &w in &route[1..] {
        let cell = grid.cell_of(w.0, w.1);
        let i = (from..path.cells.len())
            .find(|&i| Some(path.cells[i]) == cell)
            .unwrap_or(path.cells.len() - 1);
        out.push((i, w));
        from = i;
    }
    out
}

fn run_tracking(
    sim: &mut Simulation,
    t: &TrackingTask,
    pacer: &mut Pacer,
    out: &mut RunArtifacts,
) -> Result<Value, TaskError> {
    let vp = *sim.params();
    let dt = sim.config().dt;
    let scene = sim.scene().clone();
    let mut estimate = sim.target_truth().expect("tracking sets a target").position;
    let mut velocity = Vec3::ZERO;

    let mut dist_csv = String::from("seconds,uav_distance_m,ugv_distance_m,uav_desired_m,ugv_desired_m\n");
    let mut yaw_csv = String::from("seconds,yaw_err_deg\n");
    let mut track_csv = String::from("seconds,uav_xy_err_m,ugv_xy_err_m,uav_visible,ugv_visible,fused_err_m\n");
    let (mut uav_xy, mut ugv_xy, mut yaw_err) = (Vec::new(), Vec::new(), Vec::new());
    let (mut uav_hidden, mut max_fused_err_hidden, mut max_fused_err) = (0u64, 0.0f64, 0.0f64);

    for _ in 0..sim.config().total_ticks() {
        let truth = sim.target_truth().expect("target set");
        let uav = state(sim, &t.uav);
        let ugv = state(sim, &t.ugv);
        let ugv_eye = ugv.position() - Vec3::new(0.0, 0.0, t.ugv_eye_height);
        let stamp = sim.time();
        let obs = [
            observe_target(&scene, &t.uav, uav.position(), truth.position, estimate, stamp),
            observe_target(&scene, &t.ugv, ugv_eye, truth.position, estimate, stamp),
        ];
        let fused = fuse_observations(&obs, estimate);
        if obs.iter().any(|o| o.visible) && stamp.tick() > 0 {
            velocity = (fused - estimate) / dt;
        }
        estimate = fused;
        let fused_err = fused.distance(truth.position);
        max_fused_err = max_fused_err.max(fused_err);
        if !obs[0].visible {
            uav_hidden += 1;
            max_fused_err_hidden = max_fused_err_hidden.max(fused_err);
        }

        let ucmd = uav_standoff_command(&uav, estimate, velocity, &t.uav_standoff, &vp);
        let gcmd = ugv_standoff_command(&ugv, estimate, velocity, &t.ugv_standoff, &vp);
        sim.command(&t.uav, VehicleCommand::Uav(ucmd))?;
        sim.command(&t.ugv, VehicleCommand::Car(gcmd))?;
        let now = sim.step();
        pacer.tick();

        let truth = sim.target_truth().expect("target set");
        let uav = state(sim, &t.uav);
        let ugv = state(sim, &t.ugv);
        let secs = now.seconds();
        let du = uav.position().distance(truth.position);
        let dg = ugv.position().distance(truth.position);
        let eu = xy_error(uav.position(), truth.position, t.uav_standoff.desired_distance);
        let eg = xy_error(ugv.position(), truth.position, t.ugv_standoff.desired_distance);
        let ey = yaw_error_deg(&ugv, truth.position);
        let _ = writeln!(
            dist_csv,
            "{secs},{du},{dg},{},{}",
            t.uav_standoff.desired_distance, t.ugv_standoff.desired_distance
        );
        let _ = writeln!(yaw_csv, "{secs},{ey}");
        let _ = writeln!(
            track_csv,
            "{secs},{eu},{eg},{},{},{fused_err}",
            u8::from(obs[0].visible),
            u8::from(obs[1].visible)
        );
        if secs >= t.settle_s {
            uav_xy.push(eu);
            ugv_xy.push(eg);
            yaw_err.push(ey);
        }
    }

    out.add("distance_series.csv", dist_csv);
    out.add("yaw_err_series.csv", yaw_csv);
    out.add("tracking_series.csv", track_csv);
    let agent = |errs: &[f64]| -> Result<Value, TaskError> {
        let s = error_stats(errs)?;
        Ok(json!({"mean_xy_err_m": s.mean, "var_xy_err_m2": s.variance, "max_xy_err_m": s.max}))
    };
    let yaw = error_stats(&yaw_err)?;
    let mut report = json!({
        "distance_series_csv_path": "distance_series.csv",
        "yaw_err_series_csv_path": "yaw_err_series.csv",
        "tracking_series_csv_path": "tracking_series.csv",
        "settle_s": t.settle_s,
        "uav_id": t.uav,
        "ugv_id": t.ugv,
        "ugv_yaw_err_deg": {"mean": yaw.mean, "max": yaw.max},
        "uav_occluded_ticks": uav_hidden,
        "max_fused_err_m": max_fused_err,
        "max_fused_err_while_uav_occluded_m": max_fused_err_hidden,
    });
    let obj = report.as_object_mut().expect("object");
    obj.insert(t.uav.clone(), agent(&uav_xy)?);
    obj.insert(t.ugv.clone(), agent(&ugv_xy)?);
    Ok(report)
}

fn run_formation(
    sim: &mut Simulation,
    f: &FormationTask,
    pacer: &mut Pacer,
    _out: &mut RunArtifacts,
) -> Result<Value, TaskError> {
    let vp = *sim.params();
    let n = f.ugvs.len() + f.uavs.len();
    let mut errors = vec![Vec::new(); n];
    let settle = 0.25 * sim.config().duration;
    for _ in 0..sim.config().total_ticks() {
        let ugvs: Vec<_> = f.ugvs.iter().map(|id| state(sim, id)).collect();
        let uavs: Vec<_> = f.uavs.iter().map(|id| state(sim, id)).collect();
        let (cars, drones) = formation_commands(&f.pattern, sim.time(), &ugvs, &uavs, f.gain, f.lookahead, &vp);
        for (id, c) in f.ugvs.iter().zip(cars) {
            sim.command(id, VehicleCommand::Car(c))?;
        }
        for (id, c) in f.uavs.iter().zip(drones) {
            sim.command(id, VehicleCommand::Uav(c))?;
        }
        let now = sim.step();
        pacer.tick();
        if now.seconds() < settle {
            continue;
        }
        for (k, id) in f.ugvs.iter().enumerate() {
            let r = f.pattern.ugv_reference(k, now.seconds());
            errors[k].push((state(sim, id).position() - r.position).horizontal_norm());
        }
        for (k, id) in f.uavs.iter().enumerate() {
            let r = f.pattern.uav_reference(k, now.seconds());
            errors[f.ugvs.len() + k].push(state(sim, id).position().distance(r.position));
        }
    }

    let dt = sim.config().dt;
    let snap = sim.handle().snapshot();
    let image_hz = snap
        .vehicles
        .iter()
        .filter_map(|v| v.sensors.depth.map(|d| 1.0 / (dt * d.every_ticks as f64)))
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));
    let mut per_vehicle = serde_json::Map::new();
    for (id, errs) in f.ugvs.iter().chain(&f.uavs).zip(&errors) {
        let s = error_stats(errs)?;
        per_vehicle.insert(id.clone(), json!({"mean_err_m": s.mean, "max_err_m": s.max}));
    }
    let mean_of = |range: std::ops::Range<usize>| {
        let all: Vec<f64> = errors[range].iter().flatten().copied().collect();
        error_stats(&all).map(|s| s.mean)
    };
    Ok(json!({
        "ugv_count": f.ugvs.len(),
        "uav_count": f.uavs.len(),
        "odometry_rate_hz": 1.0 / dt,
        "image_rate_hz": image_hz,
        "settle_s": settle,
        "ugv_mean_err_m": mean_of(0..f.ugvs.len())?,
        "uav_mean_err_m": mean_of(f.ugvs.len()..n)?,
        "formation_errors": per_vehicle,
    }))
}

fn num(v: &Value, path: &[&str]) -> Option<f64> {
    let mut cur = v;
    for p in path {
        cur = cur.get(p)?;
    }
    cur.as_f64()
}

fn get<'a>(v: &'a Value, path: &[&str]) -> Result<&'a Value, String> {
    let mut cur = v;
    for p in path {
        cur = cur.get(p).ok_or_else(|| format!("report is missing `{}`", path.join(".")))?;
    }
    Ok(cur)
}

fn stats_of(v: &Value, path: &[&str]) -> Result<TrajStats, String> {
    serde_json::from_value(get(v, path)?.clone()).map_err(|e| format!("bad `{}`: {e}", path.join(".")))
}

fn kinematic_rows(cols: &[TrajStats]) -> Vec<Vec<String>> {
    type Cell = fn(&TrajStats) -> String;
    let rows: [(&str, Cell); 6] = [
        ("Duration (s)", |s| fmt1(s.duration)),
        ("Total Length (m)", |s| fmt1(s.total_length)),
        ("Average Speed (m/s)", |s| fmt1(s.average_speed)),
        ("X Range (m)", |s| fmt_range(s.n_range)),
        ("Y Range (m)", |s| fmt_range(s.e_range)),
        ("Z Range (m)", |s| fmt_range(s.alt_range)),
    ];
    rows.iter()
        .map(|(name, f)| std::iter::once(name.to_string()).chain(cols.iter().map(f)).collect())
        .collect()
}

fn arr3(v: &Value) -> Result<[f64; 3], String> {
    serde_json::from_value(v.clone()).map_err(|e| e.to_string())
}

/// Renders a run report as plain-text tables.
pub fn render_report(report: &Value) -> Result<String, String> {
    let task = get(report, &["task"])?.as_str().ok_or("`task` must be a string")?;
    match task {
        "mapping" => {
            let ugv = stats_of(report, &["ugv", "stats"])?;
            let uav = stats_of(report, &["uav", "stats"])?;
            let mut rows = kinematic_rows(&[ugv, uav]);
            let reg = get(report, &["registration"])?;
            let dash = || "-".to_string();
            rows.push(vec!["ICP Est Translation (m)".into(), fmt_vec(arr3(get(reg, &["est_translation"])?)?, 3), dash()]);
            rows.push(vec!["ICP Est Rotation (deg)".into(), fmt_vec(arr3(get(reg, &["est_rotation_ypr_deg"])?)?, 3), dash()]);
            rows.push(vec!["ICP RMSE (m)".into(), format!("{:.3}", num(reg, &["rmse_m"]).unwrap_or(f64::NAN)), dash()]);
            rows.push(vec!["ICP Iterations".into(), get(reg, &["iterations"])?.to_string(), dash()]);
            rows.push(vec!["ICP Converged".into(), get(reg, &["converged"])?.to_string(), dash()]);
            Ok(render_table("Cooperative mapping", &["Metric", "UGV", "UAV"], &rows))
        }
        "planning" => {
            let ugv = stats_of(report, &["ugv", "stats"])?;
            let mut rows = kinematic_rows(&[ugv]);
            rows.push(vec!["Replans".into(), get(report, &["path", "replans"])?.to_string()]);
            Ok(render_table("Aerial-assisted navigation", &["Metric", "UGV"], &rows))
        }
        "tracking" => {
            let uav = get(report, &["uav_id"])?.as_str().ok_or("`uav_id` must be a string")?;
            let ugv = get(report, &["ugv_id"])?.as_str().ok_or("`ugv_id` must be a string")?;
            let cell = |id: &str, key: &str| -> Result<String, String> {
                num(report, &[id, key]).map(fmt1).ok_or_else(|| format!("report is missing `{id}.{key}`"))
            };
            let rows = vec![
                vec!["Mean XY Error (m)".into(), cell(uav, "mean_xy_err_m")?, cell(ugv, "mean_xy_err_m")?],
                vec!["XY Error Variance (m^2)".into(), cell(uav, "var_xy_err_m2")?, cell(ugv, "var_xy_err_m2")?],
                vec!["Max XY Error (m)".into(), cell(uav, "max_xy_err_m")?, cell(ugv, "max_xy_err_m")?],
                vec![
                    "Mean Yaw Error (deg)".into(),
                    "-".into(),
                    num(report, &["ugv_yaw_err_deg", "mean"]).map(fmt1).ok_or("report is missing `ugv_yaw_err_deg.mean`")?,
                ],
            ];
            Ok(render_table("Cooperative tracking", &["Metric", "UAV", "UGV"], &rows))
        }
        "formation" => {
            let count = |k: &str| get(report, &[k]).map(|v| v.to_string());
            let rate = |k: &str| get(report, &[k]).map(|v| v.as_f64().map_or("-".to_string(), |r| format!("{r:.0}")));
            let rows = vec![
                vec!["UGVs / UAVs".into(), format!("{} / {}", count("ugv_count")?, count("uav_count")?)],
                vec!["Odometry Rate (Hz)".into(), rate("odometry_rate_hz")?],
                vec!["Image Rate (Hz)".into(), rate("image_rate_hz")?],
                vec!["Mean UGV Formation Error (m)".into(), fmt1(num(report, &["ugv_mean_err_m"]).unwrap_or(f64::NAN))],
                vec!["Mean UAV Formation Error (m)".into(), fmt1(num(report, &["uav_mean_err_m"]).unwrap_or(f64::NAN))],
            ];
            Ok(render_table("Multi-agent formation", &["Metric", "Performance"], &rows))
        }
        "none" => {
            let rows = vec![
                vec!["Ticks".into(), get(report, &["ticks"])?.to_string()],
                vec!["Vehicles".into(), get(report, &["vehicles"])?.as_array().map_or(0, Vec::len).to_string()],
            ];
            Ok(render_table("Free run", &["Metric", "Value"], &rows))
        }
        other => Err(format!("unknown task `{other}` in report")),
    }
}
