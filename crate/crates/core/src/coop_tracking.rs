//! Standoff tracking of a scripted target with occlusion-aware fusion, and
//! formation pattern references.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::clock::SimTime;
use crate::coop_planning::steering_for;
use crate::geometry::{wrap_angle, Vec3};
use crate::vehicles::{CarCommand, UavCommand, VehicleParams, VehicleState};
use crate::world::Scene;

/// Height of the target's visible center above its ground position.
pub const TARGET_CENTER_HEIGHT: f64 = 0.75;

/// Kinematic target moving along a polyline at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetScript {
    pub waypoints: Vec<Vec3>,
    pub speed: f64,
    #[serde(default, rename = "loop")]
    pub looped: bool,
}

/// Ground-truth target sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetTruth {
    pub stamp: SimTime,
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
}

impl TargetScript {
    pub fn validate(&self) -> Result<(), String> {
        if self.waypoints.len() < 2 {
            return Err("target needs at least 2 waypoints".into());
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err("target speed must be positive".into());
        }
        if self.waypoints.iter().any(|w| !w.is_finite()) {
            return Err("target waypoints must be finite".into());
        }
        if self.segments().iter().all(|(a, b)| a.distance(*b) == 0.0) {
            return Err("target path has zero length".into());
        }
        Ok(())
    }

    fn segments(&self) -> Vec<(Vec3, Vec3)> {
        let mut segs: Vec<_> = self.waypoints.windows(2).map(|w| (w[0], w[1])).collect();
        if self.looped {
            segs.push((self.waypoints[self.waypoints.len() - 1], self.waypoints[0]));
        }
        segs
    }

    pub fn length(&self) -> f64 {
        self.segments().iter().map(|(a, b)| a.distance(*b)).sum()
    }

    /// Position, velocity and heading at time `t` seconds.
    pub fn sample(&self, t: f64) -> (Vec3, Vec3, f64) {
        let segs = self.segments();
        let total = self.length();
        let mut s = self.speed * t.max(0.0);
        if self.looped {
            s %= total;
        } else if s >= total {
            let (a, b) = segs[segs.len() - 1];
            let dir = (b - a).normalized().unwrap_or(Vec3::NORTH);
            return (b, Vec3::ZERO, dir.e.atan2(dir.n));
        }
        for (a, b) in &segs {
            let len = a.distance(*b);
            if s <= len && len > 0.0 {
                let dir = (*b - *a) / len;
                return (*a + dir * s, dir * self.speed, dir.e.atan2(dir.n));
            }
            s -= len;
        }
        let (a, b) = segs[segs.len() - 1];
        let dir = (b - a).normalized().unwrap_or(Vec3::NORTH);
        (b, dir * self.speed, dir.e.atan2(dir.n))
    }

    pub fn truth(&self, stamp: SimTime) -> TargetTruth {
        let (position, velocity, yaw) = self.sample(stamp.seconds());
        TargetTruth {
            stamp,
            position,
            velocity,
            yaw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandoffParams {
    pub desired_distance: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    /// Altitude held by aerial observers; ignored for cars.
    #[serde(default)]
    pub observer_altitude: f64,
}

fn default_gain() -> f64 {
    0.8
}

impl StandoffParams {
    pub fn uav() -> Self {
        Self {
            desired_distance: 14.0,
            gain: 0.8,
            observer_altitude: 10.0,
        }
    }

    pub fn ugv() -> Self {
        Self {
            desired_distance: 6.0,
            gain: 0.8,
            observer_altitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.desired_distance > 0.0 && self.desired_distance.is_finite()) {
            return Err("desired_distance must be positive".into());
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err("gain must be positive".into());
        }
        if !(self.observer_altitude >= 0.0 && self.observer_altitude.is_finite()) {
            return Err("observer_altitude must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetObservation {
    pub stamp: SimTime,
    pub observer_id: String,
    pub target_position: Vec3,
    pub visible: bool,
}

/// Line-of-sight test between two points; symmetric in its arguments.
pub fn line_of_sight(scene: &Scene, a: Vec3, b: Vec3) -> bool {
    !scene.segment_blocked(a, b)
}

/// Observes the target from `eye`. The detector is perfect when the
/// target center is in view; otherwise `last_estimate` is carried along.
pub fn observe_target(
    scene: &Scene,
    observer_id: &str,
    eye: Vec3,
    target_position: Vec3,
    last_estimate: Vec3,
    stamp: SimTime,
) -> TargetObservation {
    let center = target_position - Vec3::new(0.0, 0.0, TARGET_CENTER_HEIGHT);
    let visible = line_of_sight(scene, eye, center);
    TargetObservation {
        stamp,
        observer_id: observer_id.to_string(),
        target_position: if visible { target_position } else { last_estimate },
        visible,
    }
}

/// Mean of the visible observations, or `previous` when none are visible.
pub fn fuse_observations(obs: &[TargetObservation], previous: Vec3) -> Vec3 {
    let visible: Vec<Vec3> = obs.iter().filter(|o| o.visible).map(|o| o.target_position).collect();
    if visible.is_empty() {
        return previous;
    }
    visible.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / visible.len() as f64
}

/// Horizontal point at which an agent at `agent` would sit exactly
/// `desired` (3-D) from `target`, keeping its current bearing and height.
pub fn standoff_point(agent: Vec3, target: Vec3, desired: f64) -> Vec3 {
    let dz = agent.d - target.d;
    let horiz = (desired * desired - dz * dz).max(0.0).sqrt();
    let away = (agent - target).horizontal().normalized().unwrap_or(Vec3::new(-1.0, 0.0, 0.0));
    Vec3::new(target.n + away.n * horiz, target.e + away.e * horiz, agent.d)
}

/// Horizontal distance between the agent and its standoff point.
pub fn xy_error(agent: Vec3, target: Vec3, desired: f64) -> f64 {
    (agent - standoff_point(agent, target, desired)).horizontal_norm()
}

/// Angle between the heading and the bearing to the target, degrees in
/// `[0, 180]`.
pub fn yaw_error_deg(agent: &VehicleState, target: Vec3) -> f64 {
    let d = target - agent.position();
    wrap_angle(d.e.atan2(d.n) - agent.yaw()).abs().to_degrees()
}

/// Multirotor standoff command.
///
/// Velocity = target velocity feed-forward plus
/// `gain * (distance - desired)` along the horizontal bearing; altitude is
/// regulated to `observer_altitude` and the nose points at the target.
pub fn uav_standoff_command(
    agent: &VehicleState,
    target: Vec3,
    target_velocity: Vec3,
    params: &StandoffParams,
    vp: &VehicleParams,
) -> UavCommand {
    let pos = agent.position();
    let to_target = target - pos;
    let dist = to_target.norm();
    let bearing = to_target.horizontal().normalized();
    let radial = bearing.map_or(Vec3::ZERO, |b| b * (params.gain * (dist - params.desired_distance)));
    let alt_d = target.d - params.observer_altitude;
    let mut v = radial + target_velocity.horizontal();
    v.d = params.gain * (alt_d - pos.d);
    UavCommand::Velocity {
        velocity: v,
        yaw: bearing.map(|b| b.e.atan2(b.n)),
        speed_limit: vp.uav.max_speed,
    }
}

/// Car standoff command: signed speed from the same radial law, steering
/// from the pursuit law aimed at the target.
pub fn ugv_standoff_command(
    agent: &VehicleState,
    target: Vec3,
    target_velocity: Vec3,
    params: &StandoffParams,
    vp: &VehicleParams,
) -> CarCommand {
    let pos = agent.position();
    let to_target = (target - pos).horizontal();
    let dist = (target - pos).norm();
    let Some(bearing) = to_target.normalized() else {
        return CarCommand::stop();
    };
    let speed = (target_velocity.dot(bearing) + params.gain * (dist - params.desired_distance))
        .clamp(-vp.car.max_speed, vp.car.max_speed);
    let alpha = wrap_angle(bearing.e.atan2(bearing.n) - agent.yaw());
    let mut steer = steering_for(&vp.car, alpha, to_target.horizontal_norm());
    if speed < 0.0 {
        // reversing turns the other way for the same steering angle
        steer = -steer;
    }
    CarCommand::Drive { speed, steer }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirclePattern {
    pub center: Vec3,
    pub radius: f64,
    /// rad/s, positive turns North towards East.
    pub angular_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquarePattern {
    pub center: Vec3,
    pub side: f64,
    pub altitude: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSpec {
    pub ugv_pattern: CirclePattern,
    pub uav_pattern: SquarePattern,
    pub ugv_count: usize,
    pub uav_count: usize,
}

/// Reference position and velocity for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reference {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl Reference {
    pub fn heading(&self) -> f64 {
        self.velocity.e.atan2(self.velocity.n)
    }
}

impl FormationSpec {
    pub fn validate(&self) -> Result<(), String> {
        let c = &self.ugv_pattern;
        let s = &self.uav_pattern;
        if !(c.radius > 0.0 && s.side > 0.0 && s.speed > 0.0) {
            return Err("radius, side and speed must be positive".into());
        }
        if !(c.angular_speed.is_finite() && c.angular_speed != 0.0) {
            return Err("angular_speed must be finite and nonzero".into());
        }
        if !(s.altitude > 0.0) {
            return Err("square altitude must be positive".into());
        }
        Ok(())
    }

    pub fn ugv_phase(&self, k: usize, t: f64) -> f64 {
        self.ugv_pattern.angular_speed * t + 2.0 * PI * k as f64 / self.ugv_count.max(1) as f64
    }

    pub fn ugv_reference(&self, k: usize, t: f64) -> Reference {
        let c = &self.ugv_pattern;
        let phi = self.ugv_phase(k, t);
        Reference {
            position: Vec3::new(c.center.n + c.radius * phi.cos(), c.center.e + c.radius * phi.sin(), c.center.d),
            velocity: Vec3::new(-phi.sin(), phi.cos(), 0.0) * (c.radius * c.angular_speed),
        }
    }

    fn corners(&self) -> [Vec3; 4] {
        let s = &self.uav_pattern;
        let h = 0.5 * s.side;
        let d = s.center.d - s.altitude;
        [
            Vec3::new(s.center.n - h, s.center.e - h, d),
            Vec3::new(s.center.n + h, s.center.e - h, d),
            Vec3::new(s.center.n + h, s.center.e + h, d),
            Vec3::new(s.center.n - h, s.center.e + h, d),
        ]
    }

    /// Square circuit `c0 -> c1 -> c2 -> c3`, UAV `k` offset by `k/m` of
    /// the perimeter.
    pub fn uav_reference(&self, k: usize, t: f64) -> Reference {
        let s = &self.uav_pattern;
        let perimeter = 4.0 * s.side;
        let offset = perimeter * k as f64 / self.uav_count.max(1) as f64;
        let arc = (s.speed * t + offset).rem_euclid(perimeter);
        let side = ((arc / s.side).floor() as usize).min(3);
        let frac = arc - side as f64 * s.side;
        let c = self.corners();
        let (a, b) = (c[side], c[(side + 1) % 4]);
        let dir = (b - a) / s.side;
        Reference {
            position: a + dir * frac,
            velocity: dir * s.speed,
        }
    }
}

/// Commands steering every formation member towards its reference.
pub fn formation_commands(
    spec: &FormationSpec,
    t: SimTime,
    ugvs: &[VehicleState],
    uavs: &[VehicleState],
    gain: f64,
    lookahead: f64,
    vp: &VehicleParams,
) -> (Vec<CarCommand>, Vec<UavCommand>) {
    let secs = t.seconds();
    let circle = &spec.ugv_pattern;
    let cars = ugvs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let r = spec.ugv_reference(k, secs);
            let tangent = r.velocity.normalized().unwrap_or(Vec3::NORTH);
            let along = (r.position - s.position()).horizontal().dot(tangent);
            let speed = (r.velocity.norm() + gain * along).clamp(0.0, vp.car.max_speed);
            let ahead_phi = spec.ugv_phase(k, secs) + circle.angular_speed.signum() * lookahead / circle.radius;
            let aim = Vec3::new(
                circle.center.n + circle.radius * ahead_phi.cos(),
                circle.center.e + circle.radius * ahead_phi.sin(),
                s.position().d,
            );
            let d = (aim - s.position()).horizontal();
            let alpha = wrap_angle(d.e.atan2(d.n) - s.yaw());
            CarCommand::Drive {
                speed,
                steer: steering_for(&vp.car, alpha, d.horizontal_norm()),
            }
        })
        .collect();
    let drones = uavs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let r = spec.uav_reference(k, secs);
            UavCommand::Velocity {
                velocity: r.velocity + (r.position - s.position()) * gain,
                yaw: None,
                speed_limit: vp.uav.max_speed,
            }
        })
        .collect();
    (cars, drones)
}
