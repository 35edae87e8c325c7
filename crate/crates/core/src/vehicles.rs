//! Kinematic models for the two vehicle types.
//!
//! Multirotors use a first-order velocity lag; cars use the kinematic
//! bicycle model with their height snapped to the local support surface.
//! Both integrate with explicit Euler at a fixed step.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimTime;
use crate::coop_planning::pursuit_steering;
use crate::geometry::{wrap_angle, NedPose, Quaternion, Vec3};
use crate::world::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("vehicle `{id}` is a {actual}, expected {expected}")]
    TypeMismatch {
        id: String,
        expected: VehicleType,
        actual: VehicleType,
    },
    #[error("invalid command: {0}")]
    InvalidCommand(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleType {
    Multirotor,
    Car,
}

impl VehicleType {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleType::Multirotor => "multirotor",
            VehicleType::Car => "car",
        }
    }
}

impl fmt::Display for VehicleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleState {
    pub id: String,
    #[serde(rename = "vehicle_type")]
    pub vtype: VehicleType,
    pub pose: NedPose,
    pub velocity: Vec3,
    pub yaw_rate: f64,
    pub stamp: SimTime,
}

impl VehicleState {
    pub fn at_rest(id: impl Into<String>, vtype: VehicleType, pose: NedPose, stamp: SimTime) -> Self {
        Self {
            id: id.into(),
            vtype,
            pose,
            velocity: Vec3::ZERO,
            yaw_rate: 0.0,
            stamp,
        }
    }

    pub fn position(&self) -> Vec3 {
        self.pose.position
    }

    pub fn yaw(&self) -> f64 {
        self.pose.yaw()
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Signed speed along the heading (negative when reversing).
    pub fn forward_speed(&self) -> f64 {
        let yaw = self.yaw();
        self.velocity.n * yaw.cos() + self.velocity.e * yaw.sin()
    }

    fn check_type(&self, expected: VehicleType) -> Result<(), VehicleError> {
        if self.vtype != expected {
            return Err(VehicleError::TypeMismatch {
                id: self.id.clone(),
                expected,
                actual: self.vtype,
            });
        }
        Ok(())
    }
}

/// Multirotor command. `yaw: None` holds the current heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum UavCommand {
    Velocity {
        velocity: Vec3,
        #[serde(default)]
        yaw: Option<f64>,
        speed_limit: f64,
    },
    Waypoint {
        waypoint: Vec3,
        #[serde(default)]
        yaw: Option<f64>,
        speed_limit: f64,
    },
}

impl UavCommand {
    pub fn hover() -> Self {
        UavCommand::Velocity {
            velocity: Vec3::ZERO,
            yaw: None,
            speed_limit: 1.0,
        }
    }

    pub fn speed_limit(&self) -> f64 {
        match *self {
            UavCommand::Velocity { speed_limit, .. } | UavCommand::Waypoint { speed_limit, .. } => {
                speed_limit
            }
        }
    }

    pub fn yaw(&self) -> Option<f64> {
        match *self {
            UavCommand::Velocity { yaw, .. } | UavCommand::Waypoint { yaw, .. } => yaw,
        }
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let finite = match *self {
            UavCommand::Velocity { velocity: v, .. } | UavCommand::Waypoint { waypoint: v, .. } => {
                v.is_finite()
            }
        };
        if !finite || !self.yaw().is_none_or(f64::is_finite) {
            return Err(VehicleError::InvalidCommand("non-finite field".into()));
        }
        if !(self.speed_limit() > 0.0 && self.speed_limit().is_finite()) {
            return Err(VehicleError::InvalidCommand("speed_limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CarCommand {
    /// Direct speed (m/s, negative reverses) and steering angle (rad).
    Drive { speed: f64, steer: f64 },
    /// Steer towards `waypoint` at `speed`, stopping inside the capture radius.
    Waypoint { waypoint: Vec3, speed: f64 },
}

impl CarCommand {
    pub fn stop() -> Self {
        CarCommand::Drive {
            speed: 0.0,
            steer: 0.0,
        }
    }

    pub fn validate(&self, params: &CarParams) -> Result<(), VehicleError> {
        match *self {
            CarCommand::Drive { speed, steer } => {
                if !speed.is_finite() || !steer.is_finite() {
                    return Err(VehicleError::InvalidCommand("non-finite field".into()));
                }
                if steer.abs() > params.max_steer + 1e-12 {
                    return Err(VehicleError::InvalidCommand(format!(
                        "|steer| {} exceeds max_steer {}",
                        steer.abs(),
                        params.max_steer
                    )));
                }
            }
            CarCommand::Waypoint { waypoint, speed } => {
                if !waypoint.is_finite() || !speed.is_finite() {
                    return Err(VehicleError::InvalidCommand("non-finite field".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VehicleCommand {
    Uav(UavCommand),
    Car(CarCommand),
}

impl VehicleCommand {
    pub fn vehicle_type(&self) -> VehicleType {
        match self {
            VehicleCommand::Uav(_) => VehicleType::Multirotor,
            VehicleCommand::Car(_) => VehicleType::Car,
        }
    }

    pub fn idle(vtype: VehicleType) -> Self {
        match vtype {
            VehicleType::Multirotor => VehicleCommand::Uav(UavCommand::hover()),
            VehicleType::Car => VehicleCommand::Car(CarCommand::stop()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarParams {
    pub wheelbase: f64,
    pub max_speed: f64,
    pub max_steer: f64,
    /// Highest ledge (m) the car can climb onto in one step.
    pub max_step: f64,
    /// Vertical clearance (m) the body needs above its support surface.
    pub clearance: f64,
    /// Stop radius (m) for waypoint mode.
    pub waypoint_capture: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            max_speed: 6.0,
            max_steer: 0.6,
            max_step: 0.35,
            clearance: 2.0,
            waypoint_capture: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavParams {
    /// Velocity time constant (s).
    pub tau: f64,
    pub max_speed: f64,
    pub max_climb: f64,
    pub max_yaw_rate: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            max_speed: 6.0,
            max_climb: 3.0,
            max_yaw_rate: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub car: CarParams,
    pub uav: UavParams,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        let c = &self.car;
        let u = &self.uav;
        let checks = [
            ("car.wheelbase", c.wheelbase),
            ("car.max_speed", c.max_speed),
            ("car.max_steer", c.max_steer),
            ("car.max_step", c.max_step),
            ("car.clearance", c.clearance),
            ("car.waypoint_capture", c.waypoint_capture),
            ("uav.tau", u.tau),
            ("uav.max_speed", u.max_speed),
            ("uav.max_climb", u.max_climb),
            ("uav.max_yaw_rate", u.max_yaw_rate),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if c.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err("car.max_steer must be below pi/2".into());
        }
        Ok(())
    }
}

/// UAV capture radius: inside it the waypoint is held.
pub const UAV_WAYPOINT_CAPTURE: f64 = 0.2;

fn clip_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

fn clip_uav_velocity(mut v: Vec3, max_speed: f64, max_climb: f64) -> Vec3 {
    v.d = v.d.clamp(-max_climb, max_climb);
    clip_norm(v, max_speed)
}

/// Advances a multirotor by `dt`.
///
/// `v' = v + (v_des - v) * min(dt/tau, 1)`, clipped, then `p' = p + v*dt`.
pub fn step_uav(
    state: &VehicleState,
    cmd: &UavCommand,
    params: &VehicleParams,
    ground_d: f64,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    state.check_type(VehicleType::Multirotor)?;
    let p = &params.uav;
    let limit = cmd.speed_limit().min(p.max_speed);
    let pos = state.position();
    let v_des = match *cmd {
        UavCommand::Velocity { velocity, .. } => clip_norm(velocity, limit),
        UavCommand::Waypoint { waypoint, .. } => {
            let delta = waypoint - pos;
            let dist = delta.norm();
            if dist <= UAV_WAYPOINT_CAPTURE {
                Vec3::ZERO
            } else {
                // critically damped approach gain for the lagged velocity loop
                let approach = dist / (4.0 * p.tau);
                delta / dist * limit.min(approach)
            }
        }
    };
    let v_des = clip_uav_velocity(v_des, p.max_speed, p.max_climb);
    let alpha = (dt / p.tau).min(1.0);
    let mut velocity = clip_uav_velocity(
        state.velocity + (v_des - state.velocity) * alpha,
        p.max_speed,
        p.max_climb,
    );
    let mut position = pos + state.velocity * dt;
    if position.d > ground_d {
        position.d = ground_d;
        velocity.d = velocity.d.min(0.0);
    }

    let yaw = state.yaw();
    let yaw_rate = match cmd.yaw() {
        Some(target) => {
            let err = wrap_angle(target - yaw);
            (err / dt).clamp(-p.max_yaw_rate, p.max_yaw_rate)
        }
        None => 0.0,
    };
    let new_yaw = wrap_angle(yaw + yaw_rate * dt);
    let orientation = if yaw_rate == 0.0 {
        state.pose.orientation
    } else {
        Quaternion::from_yaw(new_yaw)
    };

    Ok(VehicleState {
        id: state.id.clone(),
        vtype: state.vtype,
        pose: NedPose::new(position, orientation),
        velocity,
        yaw_rate,
        stamp: SimTime::new(state.stamp.tick() + 1, dt),
    })
}

/// Advances a car by `dt` with the kinematic bicycle model.
///
/// The car is blocked (held in place, velocity zeroed) when the next
/// position is out of bounds or lacks clearance over its support surface.
pub fn step_car(
    state: &VehicleState,
    cmd: &CarCommand,
    params: &VehicleParams,
    scene: &Scene,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    state.check_type(VehicleType::Car)?;
    let c = &params.car;
    let pos = state.position();
    let yaw = state.yaw();
    let (speed, steer) = match *cmd {
        CarCommand::Drive { speed, steer } => (speed, steer),
        CarCommand::Waypoint { waypoint, speed } => {
            let delta = (waypoint - pos).horizontal();
            let dist = delta.horizontal_norm();
            if dist <= c.waypoint_capture {
                (0.0, 0.0)
            } else {
                let alpha = wrap_angle(delta.e.atan2(delta.n) - yaw);
                (speed, pursuit_steering(c.wheelbase, alpha, dist))
            }
        }
    };
    let speed = speed.clamp(-c.max_speed, c.max_speed);
    let steer = steer.clamp(-c.max_steer, c.max_steer);
    let stamp = SimTime::new(state.stamp.tick() + 1, dt);

    let yaw_rate = speed * steer.tan() / c.wheelbase;
    let next_n = pos.n + speed * yaw.cos() * dt;
    let next_e = pos.e + speed * yaw.sin() * dt;
    let next_yaw = wrap_angle(yaw + yaw_rate * dt);

    let support = scene.support_d(next_n, next_e, pos.d, c.max_step);
    if speed == 0.0 || !scene.is_clear_at(next_n, next_e, support, c.clearance) {
        return Ok(VehicleState {
            velocity: Vec3::ZERO,
            yaw_rate: 0.0,
            stamp,
            ..state.clone()
        });
    }

    Ok(VehicleState {
        id: state.id.clone(),
        vtype: state.vtype,
        pose: NedPose::new(Vec3::new(next_n, next_e, support), Quaternion::from_yaw(next_yaw)),
        velocity: Vec3::new(speed * next_yaw.cos(), speed * next_yaw.sin(), 0.0),
        yaw_rate,
        stamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Obstacle, ObstacleTag};

    fn open_scene() -> Scene {
        Scene::flat(0.0, (Vec3::new(-500.0, -500.0, -200.0), Vec3::new(500.0, 500.0, 0.0)))
    }

    fn uav(pos: Vec3) -> VehicleState {
        VehicleState::at_rest("uav1", VehicleType::Multirotor, NedPose::from_yaw(pos, 0.0), SimTime::zero(0.02))
    }

    fn car(pos: Vec3, yaw: f64) -> VehicleState {
        VehicleState::at_rest("ugv1", VehicleType::Car, NedPose::from_yaw(pos, yaw), SimTime::zero(0.02))
    }

    #[test]
    fn uav_lag_reaches_command_when_dt_equals_tau() {
        let s = uav(Vec3::new(0.0, 0.0, -10.0));
        let cmd = UavCommand::Velocity {
            velocity: Vec3::new(1.0, 0.0, 0.0),
            yaw: None,
            speed_limit: 5.0,
        };
        let next = step_uav(&s, &cmd, &VehicleParams::default(), 0.0, 0.5).unwrap();
        assert_eq!(next.velocity, Vec3::new(1.0, 0.0, 0.0));
        // explicit Euler: position uses the previous velocity
        assert_eq!(next.position(), s.position());
    }

    #[test]
    fn uav_hover_is_fixed_point() {
        let s = uav(Vec3::new(3.0, -2.0, -10.0));
        let next = step_uav(&s, &UavCommand::hover(), &VehicleParams::default(), 0.0, 0.02).unwrap();
        assert_eq!(next.pose, s.pose);
        assert_eq!(next.velocity, s.velocity);
        assert_eq!(next.stamp.tick(), 1);
    }

    #[test]
    fn uav_waypoint_desired_velocity() {
        let s = uav(Vec3::new(0.0, 0.0, -10.0));
        let cmd = UavCommand::Waypoint {
            waypoint: Vec3::new(10.0, 0.0, -10.0),
            yaw: None,
            speed_limit: 2.0,
        };
        // dt == tau makes v' equal to v_des
        let next = step_uav(&s, &cmd, &VehicleParams::default(), 0.0, 0.5).unwrap();
        assert!((next.velocity - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn uav_waypoint_converges_and_holds() {
        let params = VehicleParams::default();
        let mut s = uav(Vec3::new(0.0, 0.0, -10.0));
        let wp = Vec3::new(8.0, -3.0, -12.0);
        let cmd = UavCommand::Waypoint { waypoint: wp, yaw: Some(1.0), speed_limit: 2.0 };
        for _ in 0..2000 {
            s = step_uav(&s, &cmd, &params, 0.0, 0.02).unwrap();
        }
        assert!(s.position().distance(wp) <= UAV_WAYPOINT_CAPTURE + 1e-6);
        assert!((s.yaw() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uav_never_below_ground() {
        let mut s = uav(Vec3::new(0.0, 0.0, -0.5));
        let cmd = UavCommand::Velocity { velocity: Vec3::new(0.0, 0.0, 3.0), yaw: None, speed_limit: 3.0 };
        for _ in 0..200 {
            s = step_uav(&s, &cmd, &VehicleParams::default(), 0.0, 0.02).unwrap();
            assert!(s.position().d <= 0.0);
        }
    }

    #[test]
    fn type_mismatch_rejected() {
        let s = car(Vec3::ZERO, 0.0);
        let err = step_uav(&s, &UavCommand::hover(), &VehicleParams::default(), 0.0, 0.02).unwrap_err();
        assert!(matches!(err, VehicleError::TypeMismatch { .. }));
        let u = uav(Vec3::ZERO);
        let err = step_car(&u, &CarCommand::stop(), &VehicleParams::default(), &open_scene(), 0.02);
        assert!(err.is_err());
    }

    #[test]
    fn car_straight_line() {
        let mut s = car(Vec3::ZERO, 0.0);
        s.velocity = Vec3::new(1.0, 0.0, 0.0);
        let cmd = CarCommand::Drive { speed: 1.0, steer: 0.0 };
        let next = step_car(&s, &cmd, &VehicleParams::default(), &open_scene(), 1.0).unwrap();
        assert!((next.position() - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(next.yaw(), 0.0);
    }

    #[test]
    fn car_turning_radius_matches_bicycle_geometry() {
        // tan(delta)/wheelbase = 0.5 -> R = 2
        let mut params = VehicleParams::default();
        params.car.max_steer = 1.2;
        let steer = (0.5 * params.car.wheelbase).atan();
        let radius = 2.0;
        let steps = 1000;
        let dt = 2.0 * std::f64::consts::PI * radius / steps as f64;
        let mut s = car(Vec3::ZERO, 0.0);
        let center = Vec3::new(0.0, radius, 0.0);
        let cmd = CarCommand::Drive { speed: 1.0, steer };
        for _ in 0..steps {
            s = step_car(&s, &cmd, &params, &open_scene(), dt).unwrap();
            let r = s.position().distance(center);
            assert!((r - radius).abs() / radius < 0.01, "radius {r}");
        }
    }

    #[test]
    fn car_blocked_by_building() {
        let scene = Scene::new(
            0.0,
            (Vec3::new(-50.0, -50.0, -50.0), Vec3::new(50.0, 50.0, 0.0)),
            vec![Obstacle::new("b", Vec3::new(0.5, -5.0, -5.0), Vec3::new(3.0, 5.0, 0.0), ObstacleTag::Building)],
        )
        .unwrap();
        let s = car(Vec3::ZERO, 0.0);
        let next = step_car(&s, &CarCommand::Drive { speed: 1.0, steer: 0.0 }, &VehicleParams::default(), &scene, 1.0).unwrap();
        assert_eq!(next.position(), s.position());
        assert_eq!(next.velocity, Vec3::ZERO);
    }

    #[test]
    fn car_zero_command_is_fixed_point() {
        let s = car(Vec3::new(4.0, 2.0, 0.0), 0.7);
        let next = step_car(&s, &CarCommand::stop(), &VehicleParams::default(), &open_scene(), 0.02).unwrap();
        assert_eq!(next.pose, s.pose);
        assert_eq!(next.velocity, Vec3::ZERO);
    }

    #[test]
    fn car_climbs_ramp_onto_deck() {
        let mut obstacles = Vec::new();
        for i in 1..=10 {
            obstacles.push(Obstacle::new(
                format!("r{i}"),
                Vec3::new(9.0 + i as f64, -3.0, -0.3 * i as f64),
                Vec3::new(10.0 + i as f64, 3.0, 0.0),
                ObstacleTag::BridgeDeck,
            ));
        }
        let scene = Scene::new(0.0, (Vec3::new(-50.0, -50.0, -50.0), Vec3::new(50.0, 50.0, 0.0)), obstacles).unwrap();
        let mut s = car(Vec3::ZERO, 0.0);
        let cmd = CarCommand::Drive { speed: 2.0, steer: 0.0 };
        for _ in 0..500 {
            s = step_car(&s, &cmd, &VehicleParams::default(), &scene, 0.02).unwrap();
        }
        assert!((s.position().n - 20.0).abs() < 1e-9, "blocked at {:?}", s.position());
        assert!((s.position().d + 3.0).abs() < 1e-9);
    }

    #[test]
    fn car_waypoint_mode_stops_inside_capture() {
        let params = VehicleParams::default();
        let mut s = car(Vec3::ZERO, 0.0);
        let wp = Vec3::new(20.0, 6.0, 0.0);
        for _ in 0..2000 {
            s = step_car(&s, &CarCommand::Waypoint { waypoint: wp, speed: 2.0 }, &params, &open_scene(), 0.02).unwrap();
        }
        assert!(s.position().distance(wp) <= params.car.waypoint_capture + 2.0 * 0.02 + 1e-9);
        assert_eq!(s.speed(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn speed_limits_and_heading_wrap(
                cmds in prop::collection::vec((-20.0..20.0f64, -1.0..1.0f64, -20.0..20.0f64, -20.0..20.0f64, -5.0..5.0f64), 1..60)
            ) {
                let params = VehicleParams::default();
                let scene = open_scene();
                let mut c = car(Vec3::ZERO, 0.0);
                let mut u = uav(Vec3::new(0.0, 0.0, -20.0));
                for (speed, steer, vn, ve, vd) in cmds {
                    c = step_car(&c, &CarCommand::Drive { speed, steer }, &params, &scene, 0.05).unwrap();
                    prop_assert!(c.speed() <= params.car.max_speed + 1e-9);
                    let y = c.yaw();
                    prop_assert!(y > -std::f64::consts::PI - 1e-12 && y <= std::f64::consts::PI + 1e-12);
                    let cmd = UavCommand::Velocity { velocity: Vec3::new(vn, ve, vd), yaw: Some(steer * 3.0), speed_limit: 50.0 };
                    u = step_uav(&u, &cmd, &params, scene.ground_d, 0.05).unwrap();
                    prop_assert!(u.speed() <= params.uav.max_speed + 1e-9);
                    prop_assert!(u.velocity.d.abs() <= params.uav.max_climb + 1e-9);
                }
            }

            #[test]
            fn stepping_is_deterministic(speed in -6.0..6.0f64, steer in -0.6..0.6f64) {
                let params = VehicleParams::default();
                let scene = open_scene();
                let run = || {
                    let mut c = car(Vec3::ZERO, 0.3);
                    for _ in 0..100 {
                        c = step_car(&c, &CarCommand::Drive { speed, steer }, &params, &scene, 0.02).unwrap();
                    }
                    c
                };
                let (a, b) = (run(), run());
                prop_assert_eq!(a.pose.position.n.to_bits(), b.pose.position.n.to_bits());
                prop_assert_eq!(a.pose.position.e.to_bits(), b.pose.position.e.to_bits());
            }
        }
    }
}
