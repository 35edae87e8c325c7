use std::sync::Arc;

use agsim_core::sensors::{LidarConfig, SensorSuiteConfig};
use agsim_core::vehicles::VehicleParams;
use agsim_core::{bundled, NedPose, SimConfig, Simulation, Vec3, VehicleType};
use agsim_rpc::{route, EndpointKind, ErrorCode, RpcEnvelope, Status};
use proptest::prelude::*;
use serde_json::json;

const CARS: [&str; 3] = ["ugv1", "ugv2", "ugv3"];
const DRONES: [&str; 4] = ["uav1", "uav2", "uav3", "uav4"];

fn sim() -> Simulation {
    let mut s = Simulation::new(Arc::new(bundled::open_field()), SimConfig::new(0.02, 10.0, 1), VehicleParams::default()).unwrap();
    for (i, id) in CARS.iter().enumerate() {
        let lidar = SensorSuiteConfig { lidar: Some(LidarConfig { channels: 2, points_per_channel: 8, ..LidarConfig::default() }), depth: None };
        let sensors = if i == 0 { lidar } else { SensorSuiteConfig::default() };
        s.register_vehicle(id, VehicleType::Car, NedPose::from_yaw(Vec3::new(i as f64 * 5.0, 0.0, 0.0), 0.0), sensors).unwrap();
    }
    for (i, id) in DRONES.iter().enumerate() {
        s.register_vehicle(id, VehicleType::Multirotor, NedPose::from_yaw(Vec3::new(0.0, i as f64 * 5.0, -10.0), 0.0), SensorSuiteConfig::default()).unwrap();
    }
    s
}

fn kind() -> impl Strategy<Value = EndpointKind> {
    prop_oneof![Just(EndpointKind::Multirotor), Just(EndpointKind::Car), Just(EndpointKind::World)]
}

fn vehicle_id() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::sample::select(CARS.to_vec()).prop_map(String::from),
        prop::sample::select(DRONES.to_vec()).prop_map(String::from),
        prop::sample::select(vec!["", "ugv9", "uav0", "UGV1"]).prop_map(String::from),
    ]
}

fn registered_as(id: &str) -> Option<EndpointKind> {
    if CARS.contains(&id) {
        Some(EndpointKind::Car)
    } else if DRONES.contains(&id) {
        Some(EndpointKind::Multirotor)
    } else {
        None
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn ok_iff_port_type_and_registration_agree(
        port in kind(),
        vtype in kind(),
        id in vehicle_id(),
        method in prop::sample::select(vec!["ping", "get_state", "get_odometry"]),
        req in any::<u64>(),
    ) {
        let s = sim();
        let h = s.handle();
        let world = vtype == EndpointKind::World;
        let method = if world { "ping" } else { method };
        let resp = route(&RpcEnvelope::new(req, vtype, &id, method, json!({})), port, &h);
        let expect_ok = port == vtype && if world { id.is_empty() } else { registered_as(&id) == Some(vtype) };
        prop_assert_eq!(resp.id, req);
        prop_assert_eq!(resp.is_ok(), expect_ok);
        if resp.is_ok() {
            let payload = resp.payload.unwrap();
            prop_assert!(payload.as_object().is_some_and(|o| !o.is_empty()));
            if method != "ping" {
                let echoed = payload.get("id").or_else(|| payload.get("vehicle_id")).unwrap();
                prop_assert_eq!(echoed.as_str().unwrap(), id.as_str());
            }
        } else {
            prop_assert!(resp.payload.is_none());
            prop_assert!(resp.error_code.is_some());
        }
    }
}

#[test]
fn error_codes_in_order() {
    let s = sim();
    let h = s.handle();
    let call = |port, vtype, id: &str, method: &str| route(&RpcEnvelope::new(1, vtype, id, method, json!({})), port, &h);
    use EndpointKind::*;
    assert_eq!(call(Car, Multirotor, "uav1", "get_state").error_code, Some(ErrorCode::VehicleTypeMismatch));
    // type mismatch wins over an unknown method
    assert_eq!(call(Car, Multirotor, "uav1", "fly").error_code, Some(ErrorCode::VehicleTypeMismatch));
    // unknown method wins over an unknown vehicle
    assert_eq!(call(Car, Car, "ugv9", "fly").error_code, Some(ErrorCode::UnknownMethod));
    assert_eq!(call(Car, Car, "ugv9", "get_state").error_code, Some(ErrorCode::UnknownVehicle));
    assert_eq!(call(Car, Car, "uav1", "get_state").error_code, Some(ErrorCode::VehicleTypeMismatch));
    assert_eq!(call(Car, Car, "ugv2", "get_lidar").error_code, Some(ErrorCode::NoSuchSensor));
    assert_eq!(call(Car, Car, "ugv1", "get_lidar").status, Status::Ok);
    assert_eq!(call(World, World, "", "get_state").error_code, Some(ErrorCode::UnknownMethod));
    assert_eq!(call(World, World, "", "get_target_truth").error_code, Some(ErrorCode::NotAvailable));
    let list = call(World, World, "", "list_vehicles").payload.unwrap();
    assert_eq!(list["vehicles"].as_array().unwrap().len(), 7);
    assert_eq!(list["vehicles"][0], json!({"id": "ugv1", "vehicle_type": "car"}));
}

#[test]
fn send_command_parses_by_port_type() {
    let mut s = sim();
    let h = s.handle();
    let uav = json!({"mode": "velocity", "velocity": [1.0, 0.0, 0.0], "speed_limit": 2.0});
    let car = json!({"mode": "drive", "speed": 1.0, "steer": 0.0});
    let send = |port, id: &str, params| route(&RpcEnvelope::new(9, port, id, "send_command", params), port, &h);
    let ack = send(EndpointKind::Multirotor, "uav1", uav.clone());
    assert_eq!(ack.payload.unwrap(), json!({"accepted": true, "tick": 0}));
    assert_eq!(send(EndpointKind::Car, "ugv1", uav).error_code, Some(ErrorCode::BadParams));
    assert_eq!(send(EndpointKind::Car, "ugv1", car.clone()).status, Status::Ok);
    let over = json!({"mode": "drive", "speed": 1.0, "steer": 1.5});
    assert_eq!(send(EndpointKind::Car, "ugv2", over).error_code, Some(ErrorCode::BadParams));
    s.step();
    assert!(h.snapshot().vehicle("uav1").unwrap().state.velocity.n > 0.0);
    assert_eq!(h.snapshot().vehicle("ugv1").unwrap().state.velocity.n, 1.0);
    assert_eq!(h.snapshot().vehicle("ugv2").unwrap().state.velocity.n, 0.0);
}

#[test]
fn reads_within_a_tick_share_a_stamp() {
    let mut s = sim();
    let h = s.handle();
    s.step();
    let a = route(&RpcEnvelope::new(1, EndpointKind::Car, "ugv1", "get_state", json!({})), EndpointKind::Car, &h);
    let b = route(&RpcEnvelope::new(2, EndpointKind::Multirotor, "uav3", "get_state", json!({})), EndpointKind::Multirotor, &h);
    assert_eq!(a.payload.unwrap()["stamp"], b.payload.unwrap()["stamp"]);
}
