use std::io::{BufRead, BufReader};
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use agsim_rpc::{EndpointKind, RpcClient};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agsim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/configs")
}

fn agsim(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const NONE_CONFIG: &str = r#"{
  "scene": "bundled:open_field",
  "sim": {"dt": 0.02, "duration": 1.0, "seed": 1},
  "vehicles": [
    {"id": "ugv1", "type": "car", "pose": {"position": [0, 0, 0]}},
    {"id": "uav1", "type": "multirotor", "pose": {"position": [0, 5, -10]}}
  ],
  "task": {"kind": "none"}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_bundled_configs() {
    for name in ["mapping", "planning", "tracking", "formation"] {
        let path = configs().join(format!("{name}.json"));
        let o = agsim(&["validate", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("{name} task")));
    }
}

#[test]
fn config_errors_exit_2_and_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let dup = NONE_CONFIG.replace("\"uav1\"", "\"ugv1\"");
    let p = write(tmp.path(), "dup.json", &dup);
    let o = agsim(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate vehicle id `ugv1`"), "{}", stderr(&o));

    let bad = NONE_CONFIG.replace("\"duration\": 1.0", "\"duration\": \"long\"");
    let p = write(tmp.path(), "bad.json", &bad);
    let o = agsim(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sim.duration"), "{}", stderr(&o));

    let o = agsim(&["run", "--config", tmp.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn none_task_writes_expected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "none.json", NONE_CONFIG);
    let out = tmp.path().join("out");
    let o = agsim(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    // header + 50 ticks x 2 vehicles
    assert_eq!(csv.lines().count(), 1 + 50 * 2);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["task"], "none");
    assert_eq!(report["ticks"], 50);

    let o = agsim(&["report", out.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "none.json", NONE_CONFIG);
    let out = tmp.path().join("out");
    let o = agsim(&["run", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 99);
}

#[test]
fn report_on_empty_dir_lists_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = agsim(&["report", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("missing artifact report.json"), "{err}");
    assert!(err.contains("trajectory.csv"), "{err}");
}

#[test]
fn mapping_run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mapping");
    let cfg = configs().join("mapping.json");
    let o = agsim(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reg: Value = serde_json::from_str(&std::fs::read_to_string(out.join("registration.json")).unwrap()).unwrap();
    assert_eq!(reg["converged"], true);
    for f in ["ugv_cloud.xyz", "uav_cloud.xyz", "ugv_cloud.json", "uav_cloud.json", "trajectory.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = agsim(&["report", out.to_str().unwrap()]);
    let table = String::from_utf8_lossy(&o.stdout);
    for row in ["Duration", "Length", "Speed", "UGV", "UAV", "RMSE"] {
        assert!(table.contains(row), "{row} missing from\n{table}");
    }
    assert_eq!(table, std::fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn planning_report_has_axis_ranges() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("planning");
    let cfg = configs().join("planning.json");
    let o = agsim(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["path.csv", "grid.pgm", "grid.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let table = String::from_utf8_lossy(&agsim(&["report", out.to_str().unwrap()]).stdout).into_owned();
    for row in ["X Range", "Y Range", "Z Range"] {
        assert!(table.contains(row), "{row} missing from\n{table}");
    }
}

fn read_endpoints(child: &mut std::process::Child) -> Vec<(EndpointKind, SocketAddr)> {
    let stdout = child.stdout.take().unwrap();
    let mut lines = BufReader::new(stdout).lines();
    let mut out = Vec::new();
    while out.len() < 3 {
        let line = lines.next().expect("server prints its endpoints").unwrap();
        let (kind, addr) = line.split_once(' ').unwrap();
        let kind: EndpointKind = serde_json::from_value(json!(kind)).unwrap();
        out.push((kind, addr.parse().unwrap()));
    }
    out
}

fn interrupt(child: &std::process::Child) {
    let ok = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap()
        .success();
    assert!(ok);
}

#[test]
fn serve_formation_answers_and_stops_on_interrupt() {
    let cfg = configs().join("formation.json");
    let mut child = bin()
        .args(["serve", "--config", cfg.to_str().unwrap()])
        .env("AGSIM_BASE_PORT", "0")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let endpoints = read_endpoints(&mut child);
    for (kind, addr) in &endpoints {
        let mut c = RpcClient::connect(*addr, *kind).unwrap();
        let vid = match kind {
            EndpointKind::Multirotor => "uav1",
            EndpointKind::Car => "ugv1",
            EndpointKind::World => "",
        };
        assert!(c.call(vid, "ping", json!({})).unwrap().is_ok(), "{kind}");
        if *kind == EndpointKind::World {
            let r = c.call("", "list_vehicles", json!({})).unwrap();
            assert_eq!(r.payload.unwrap()["vehicles"].as_array().unwrap().len(), 7);
        }
    }
    std::thread::sleep(Duration::from_millis(200));
    interrupt(&child);
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn serve_bind_conflict_exits_4() {
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port();
    let cfg = configs().join("formation.json");
    let o = bin()
        .args(["serve", "--config", cfg.to_str().unwrap()])
        .env("AGSIM_BASE_PORT", port.to_string())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("cannot bind"));
}
