//! Type-checked request dispatch onto a running simulation.

use agsim_core::simcore::{SimError, SimHandle};
use agsim_core::vehicles::{CarCommand, UavCommand, VehicleCommand, VehicleError};
use agsim_core::VehicleType;
use serde::Serialize;
use serde_json::json;

use crate::envelope::{EndpointKind, ErrorCode, RpcEnvelope, RpcResponse};

pub const WORLD_METHODS: [&str; 4] = ["ping", "list_vehicles", "get_sim_time", "get_target_truth"];
pub const VEHICLE_METHODS: [&str; 6] = ["ping", "get_state", "get_odometry", "get_lidar", "get_depth", "send_command"];

pub fn methods(kind: EndpointKind) -> &'static [&'static str] {
    match kind {
        EndpointKind::World => &WORLD_METHODS,
        _ => &VEHICLE_METHODS,
    }
}

fn to_payload<T: Serialize>(id: u64, v: &T) -> RpcResponse {
    RpcResponse::ok(id, serde_json::to_value(v).expect("payload types serialize"))
}

fn sim_error(id: u64, e: SimError) -> RpcResponse {
    let code = match &e {
        SimError::UnknownVehicle(_) => ErrorCode::UnknownVehicle,
        SimError::NoSuchSensor { .. } => ErrorCode::NoSuchSensor,
        SimError::Vehicle(VehicleError::TypeMismatch { .. }) => ErrorCode::VehicleTypeMismatch,
        _ => ErrorCode::BadParams,
    };
    RpcResponse::error(id, code, e.to_string())
}

/// Answers `env`, which arrived on the `port` endpoint.
///
/// Checks run in a fixed order: endpoint type, method name, vehicle id,
/// the vehicle's registered type, then the method's own parameters.
pub fn route(env: &RpcEnvelope, port: EndpointKind, sim: &SimHandle) -> RpcResponse {
    let id = env.id;
    if env.vehicle_type != port {
        return RpcResponse::error(
            id,
            ErrorCode::VehicleTypeMismatch,
            format!("{} request sent to the {} endpoint", env.vehicle_type, port),
        );
    }
    if !methods(port).contains(&env.method.as_str()) {
        return RpcResponse::error(
            id,
            ErrorCode::UnknownMethod,
            format!("`{}` is not a {} method", env.method, port),
        );
    }
    let Some(vtype) = port.vehicle_type() else {
        return route_world(env, sim);
    };
    let snap = sim.snapshot();
    let Some(vehicle) = snap.vehicle(&env.vehicle_id) else {
        return RpcResponse::error(id, ErrorCode::UnknownVehicle, format!("unknown vehicle `{}`", env.vehicle_id));
    };
    if vehicle.state.vtype != vtype {
        return RpcResponse::error(
            id,
            ErrorCode::VehicleTypeMismatch,
            format!("vehicle `{}` is a {}, not a {}", env.vehicle_id, vehicle.state.vtype, vtype),
        );
    }
    match env.method.as_str() {
        "ping" => RpcResponse::ok(
            id,
            json!({"pong": true, "vehicle_id": env.vehicle_id, "tick": snap.time.tick()}),
        ),
        "get_state" => to_payload(id, &vehicle.state),
        "get_odometry" => to_payload(id, &vehicle.odometry()),
        "get_lidar" => match &vehicle.lidar {
            Some(c) => to_payload(id, c.as_ref()),
            None => sim_error(
                id,
                SimError::NoSuchSensor {
                    id: env.vehicle_id.clone(),
                    sensor: "lidar",
                },
            ),
        },
        "get_depth" => match &vehicle.depth {
            Some(d) => to_payload(id, d.as_ref()),
            None => sim_error(
                id,
                SimError::NoSuchSensor {
                    id: env.vehicle_id.clone(),
                    sensor: "depth",
                },
            ),
        },
        "send_command" => send_command(env, vtype, sim),
        _ => unreachable!("method list checked above"),
    }
}

fn send_command(env: &RpcEnvelope, vtype: VehicleType, sim: &SimHandle) -> RpcResponse {
    let parsed = match vtype {
        VehicleType::Multirotor => serde_json::from_value::<UavCommand>(env.params.clone()).map(VehicleCommand::Uav),
        VehicleType::Car => serde_json::from_value::<CarCommand>(env.params.clone()).map(VehicleCommand::Car),
    };
    let cmd = match parsed {
        Ok(c) => c,
        Err(e) => return RpcResponse::error(env.id, ErrorCode::BadParams, format!("bad {vtype} command: {e}")),
    };
    match sim.submit(&env.vehicle_id, cmd) {
        Ok(t) => RpcResponse::ok(env.id, json!({"accepted": true, "tick": t.tick()})),
        Err(e) => sim_error(env.id, e),
    }
}

fn route_world(env: &RpcEnvelope, sim: &SimHandle) -> RpcResponse {
    let id = env.id;
    if !env.vehicle_id.is_empty() {
        return RpcResponse::error(
            id,
            ErrorCode::UnknownVehicle,
            format!("world requests take an empty vehicle_id, got `{}`", env.vehicle_id),
        );
    }
    let snap = sim.snapshot();
    match env.method.as_str() {
        "ping" => RpcResponse::ok(id, json!({"pong": true, "tick": snap.time.tick()})),
        "list_vehicles" => RpcResponse::ok(id, json!({"vehicles": snap.info()})),
        "get_sim_time" => to_payload(id, &snap.time),
        "get_target_truth" => match &snap.target {
            Some(t) => to_payload(id, t),
            None => RpcResponse::error(id, ErrorCode::NotAvailable, "this scenario has no target"),
        },
        _ => unreachable!("method list checked above"),
    }
}
