use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;

use agsim_core::sensors::SensorSuiteConfig;
use agsim_core::vehicles::VehicleParams;
use agsim_core::{bundled, NedPose, SimConfig, Simulation, Vec3, VehicleType};
use agsim_rpc::{EndpointConfig, EndpointKind, ErrorCode, RpcClient, RpcEnvelope, Server, Status};
use serde_json::json;

fn sim() -> Simulation {
    let mut s = Simulation::new(Arc::new(bundled::open_field()), SimConfig::new(0.02, 10.0, 1), VehicleParams::default()).unwrap();
    s.register_vehicle("ugv1", VehicleType::Car, NedPose::from_yaw(Vec3::ZERO, 0.0), SensorSuiteConfig::default()).unwrap();
    s.register_vehicle("uav1", VehicleType::Multirotor, NedPose::from_yaw(Vec3::new(0.0, 5.0, -10.0), 0.0), SensorSuiteConfig::default()).unwrap();
    s
}

fn start(s: &Simulation) -> Server {
    Server::start(EndpointConfig::with_base_port(0), s.handle()).unwrap()
}

fn client(server: &Server, kind: EndpointKind) -> RpcClient {
    RpcClient::connect(server.addr(kind), kind).unwrap()
}

#[test]
fn ping_on_all_three_ports() {
    let s = sim();
    let server = start(&s);
    for kind in EndpointKind::ALL {
        let mut c = client(&server, kind);
        let vid = match kind {
            EndpointKind::Car => "ugv1",
            EndpointKind::Multirotor => "uav1",
            EndpointKind::World => "",
        };
        let r = c.call(vid, "ping", json!({})).unwrap();
        assert_eq!(r.status, Status::Ok, "{kind}");
    }
    let ports: Vec<u16> = server.addrs().iter().map(|(_, a)| a.port()).collect();
    assert!(ports[0] != ports[1] && ports[1] != ports[2] && ports[0] != ports[2]);
    server.shutdown();
}

#[test]
fn port_layout_from_base() {
    let cfg = EndpointConfig::with_base_port(41451);
    assert_eq!(cfg.port(EndpointKind::Multirotor), 41451);
    assert_eq!(cfg.port(EndpointKind::Car), 41452);
    assert_eq!(cfg.port(EndpointKind::World), 41453);
    assert_eq!(EndpointConfig::default().base_port, 41451);
}

#[test]
fn wrong_port_rejected_over_tcp() {
    let s = sim();
    let server = start(&s);
    let mut c = RpcClient::connect(server.addr(EndpointKind::Car), EndpointKind::Car).unwrap();
    let r = c.send(&RpcEnvelope::new(5, EndpointKind::Multirotor, "uav1", "get_state", json!({}))).unwrap();
    assert_eq!(r.id, 5);
    assert_eq!(r.error_code, Some(ErrorCode::VehicleTypeMismatch));
    let r = c.call("ugv1", "get_odometry", json!({})).unwrap();
    assert_eq!(r.payload.unwrap()["vehicle_id"], "ugv1");
    let r = c.call("ugv1", "get_lidar", json!({})).unwrap();
    assert_eq!(r.error_code, Some(ErrorCode::NoSuchSensor));
}

#[test]
fn interleaved_clients_get_their_own_answers() {
    let s = sim();
    let server = start(&s);
    let handles: Vec<_> = [(EndpointKind::Car, "ugv1"), (EndpointKind::Multirotor, "uav1")]
        .into_iter()
        .map(|(kind, id)| {
            let addr = server.addr(kind);
            thread::spawn(move || {
                let mut c = RpcClient::connect(addr, kind).unwrap();
                for _ in 0..200 {
                    let r = c.call(id, "get_state", json!({})).unwrap();
                    assert_eq!(r.payload.unwrap()["id"], id);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
}

#[test]
fn pipelined_requests_answered_in_order() {
    let s = sim();
    let server = start(&s);
    let mut stream = TcpStream::connect(server.addr(EndpointKind::World)).unwrap();
    let mut bytes = Vec::new();
    for id in 10..20 {
        bytes.extend(agsim_rpc::encode_frame(&RpcEnvelope::world(id, "get_sim_time", json!({}))).unwrap());
    }
    stream.write_all(&bytes).unwrap();
    let mut dec = agsim_rpc::FrameDecoder::new();
    let mut ids = Vec::new();
    let mut buf = [0u8; 4096];
    while ids.len() < 10 {
        let n = stream.read(&mut buf).unwrap();
        dec.push(&buf[..n]);
        while let Some(body) = dec.next_body().unwrap() {
            let r: agsim_rpc::RpcResponse = agsim_rpc::frame::parse_message(&body).unwrap();
            ids.push(r.id);
        }
    }
    assert_eq!(ids, (10..20).collect::<Vec<_>>());
}

#[test]
fn malformed_and_oversized_frames() {
    let s = sim();
    let server = start(&s);
    let mut c = client(&server, EndpointKind::World);
    let body = br#"{"id": 42, "vehicle_type": "world", "method": "ping"}"#;
    let mut frame = (body.len() as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(body);
    let r = c.send_raw(&frame).unwrap();
    assert_eq!((r.id, r.error_code), (42, Some(ErrorCode::MalformedRequest)));
    assert!(r.message.unwrap().contains("vehicle_id"));
    // the connection survives a bad body
    assert!(c.call("", "ping", json!({})).unwrap().is_ok());
    let r = c.send_raw(&[0x01, 0x00, 0x00, 0x01]).unwrap();
    assert_eq!(r.error_code, Some(ErrorCode::FrameTooLarge));
}

#[test]
fn commands_flow_into_the_step_loop() {
    let mut s = sim();
    let server = start(&s);
    let mut c = client(&server, EndpointKind::Car);
    let ack = c.call("ugv1", "send_command", json!({"mode": "drive", "speed": 2.0, "steer": 0.0})).unwrap();
    assert_eq!(ack.payload.unwrap()["accepted"], true);
    for _ in 0..10 {
        s.step();
    }
    let st = c.call("ugv1", "get_state", json!({})).unwrap().payload.unwrap();
    assert_eq!(st["stamp"]["tick"], 10);
    assert_eq!(st["velocity"][0], 2.0);
    let mut w = client(&server, EndpointKind::World);
    assert_eq!(w.call("", "get_sim_time", json!({})).unwrap().payload.unwrap()["tick"], 10);
}

#[test]
fn bind_conflict_reported() {
    let s = sim();
    let server = start(&s);
    let taken = server.addr(EndpointKind::Multirotor).port();
    let err = Server::start(EndpointConfig::with_base_port(taken), s.handle()).err().unwrap();
    assert!(err.to_string().contains("multirotor"), "{err}");
}
