//! Synthetic perception: spinning LiDAR, pinhole depth grid, odometry.

use std::fs;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::clock::SimTime;
use crate::geometry::{NedPose, Quaternion, Ray, RigidTransform, Vec3};
use crate::world::Scene;

/// Sensor placement on the vehicle body, given at config boundaries in
/// yaw/pitch/roll degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mount {
    pub offset: Vec3,
    pub ypr_deg: [f64; 3],
}

impl Mount {
    /// Camera-style mount looking straight down.
    pub fn nadir() -> Self {
        Self {
            offset: Vec3::ZERO,
            ypr_deg: [0.0, -90.0, 0.0],
        }
    }

    pub fn transform(&self) -> RigidTransform {
        let [y, p, r] = self.ypr_deg.map(f64::to_radians);
        RigidTransform::new(Quaternion::from_ypr(y, p, r), self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub channels: u32,
    /// Elevation limits in degrees, up positive.
    pub vfov: [f64; 2],
    pub hfov: f64,
    pub points_per_channel: u32,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub mount: Mount,
    /// Produce a scan every this many ticks.
    pub every_ticks: u64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            vfov: [-15.0, 15.0],
            hfov: 360.0,
            points_per_channel: 360,
            max_range: 100.0,
            noise_sigma: 0.0,
            mount: Mount::default(),
            every_ticks: 1,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.channels == 0 || self.points_per_channel == 0 {
            return Err("channels and points_per_channel must be at least 1".into());
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err("max_range must be positive".into());
        }
        if !(self.vfov[0] < self.vfov[1]) || self.vfov.iter().any(|v| v.abs() > 90.0) {
            return Err("vfov must be [min, max] with min < max inside [-90, 90]".into());
        }
        if !(self.hfov > 0.0 && self.hfov <= 360.0) {
            return Err("hfov must be in (0, 360]".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err("noise_sigma must be nonnegative".into());
        }
        if self.every_ticks == 0 {
            return Err("every_ticks must be at least 1".into());
        }
        Ok(())
    }

    /// Unit beam directions in the sensor frame, channel-major.
    pub fn directions(&self) -> Vec<Vec3> {
        let mut dirs = Vec::with_capacity((self.channels * self.points_per_channel) as usize);
        let [lo, hi] = self.vfov;
        for c in 0..self.channels {
            let el = if self.channels == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * c as f64 / (self.channels - 1) as f64
            }
            .to_radians();
            for k in 0..self.points_per_channel {
                let az = (-0.5 * self.hfov + self.hfov * k as f64 / self.points_per_channel as f64)
                    .to_radians();
                dirs.push(Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), -el.sin()));
            }
        }
        dirs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view, degrees.
    pub hfov: f64,
    pub max_range: f64,
    pub mount: Mount,
    pub every_ticks: u64,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            hfov: 90.0,
            max_range: 200.0,
            mount: Mount::nadir(),
            every_ticks: 1,
        }
    }
}

impl DepthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("width and height must be at least 1".into());
        }
        if !(self.hfov > 0.0 && self.hfov < 180.0) {
            return Err("hfov must be in (0, 180)".into());
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err("max_range must be positive".into());
        }
        if self.every_ticks == 0 {
            return Err("every_ticks must be at least 1".into());
        }
        Ok(())
    }

    /// Unit ray direction of pixel `(row, col)` in the camera frame
    /// (x along the optical axis, y right, z down).
    pub fn pixel_direction(&self, row: u32, col: u32) -> Vec3 {
        let half = (0.5 * self.hfov).to_radians().tan();
        let w = self.width as f64;
        let h = self.height as f64;
        let u = half * (2.0 * (col as f64 + 0.5) / w - 1.0);
        let v = half * (h / w) * (2.0 * (row as f64 + 0.5) / h - 1.0);
        Vec3::new(1.0, u, v).normalized().expect("nonzero pixel ray")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSuiteConfig {
    pub lidar: Option<LidarConfig>,
    pub depth: Option<DepthConfig>,
}

impl SensorSuiteConfig {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(l) = &self.lidar {
            l.validate().map_err(|e| format!("lidar: {e}"))?;
        }
        if let Some(d) = &self.depth {
            d.validate().map_err(|e| format!("depth: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCloud {
    pub frame_id: String,
    pub stamp: SimTime,
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>, stamp: SimTime, points: Vec<Vec3>) -> Self {
        Self {
            frame_id: frame_id.into(),
            stamp,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Re-expresses the cloud in the world frame, given the sensor pose.
    pub fn to_world(&self, sensor_pose: &RigidTransform) -> PointCloud {
        PointCloud {
            frame_id: WORLD_FRAME.to_string(),
            stamp: self.stamp,
            points: self.points.iter().map(|&p| sensor_pose.apply(p)).collect(),
        }
    }
}

/// Frame id used for clouds expressed in global NED coordinates.
pub const WORLD_FRAME: &str = "ned";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Odometry {
    pub vehicle_id: String,
    pub stamp: SimTime,
    pub pose: NedPose,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthGrid {
    pub stamp: SimTime,
    pub width: u32,
    pub height: u32,
    pub hfov: f64,
    /// Row-major ranges; `+inf` marks a miss (serialized as `null`).
    #[serde(serialize_with = "ranges_as_json")]
    pub ranges: Vec<f64>,
    pub mount: RigidTransform,
}

fn ranges_as_json<S: Serializer>(ranges: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(ranges.len()))?;
    for r in ranges {
        seq.serialize_element(&r.is_finite().then_some(*r))?;
    }
    seq.end()
}

impl DepthGrid {
    pub fn range(&self, row: u32, col: u32) -> f64 {
        self.ranges[(row * self.width + col) as usize]
    }
}

/// Pose of a mounted sensor in the world frame.
pub fn sensor_pose(vehicle_pose: &NedPose, mount: &Mount) -> RigidTransform {
    vehicle_pose.as_transform().compose(&mount.transform())
}

/// One LiDAR sweep. Points are in the sensor frame; misses are omitted.
pub fn lidar_scan<R: Rng + ?Sized>(
    scene: &Scene,
    vehicle_pose: &NedPose,
    cfg: &LidarConfig,
    rng: &mut R,
    frame_id: &str,
    stamp: SimTime,
) -> PointCloud {
    let pose = sensor_pose(vehicle_pose, &cfg.mount);
    let dirs = cfg.directions();
    let hits: Vec<Option<f64>> = dirs
        .par_iter()
        .map(|&dir| {
            let ray = Ray {
                origin: pose.translation,
                direction: pose.apply_vector(dir),
            };
            scene.cast_ray(&ray, cfg.max_range).map(|h| h.distance)
        })
        .collect();

    // noise is drawn sequentially so the stream does not depend on threading
    let noise = (cfg.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma validated"));
    let mut points = Vec::with_capacity(hits.len());
    for (dir, hit) in dirs.iter().zip(hits) {
        let Some(mut r) = hit else { continue };
        if let Some(n) = &noise {
            r += n.sample(rng);
        }
        if r > 0.0 {
            points.push(*dir * r);
        }
    }
    PointCloud::new(frame_id, stamp, points)
}

/// Ray-cast depth image from a mounted pinhole camera.
pub fn capture_depth(
    scene: &Scene,
    vehicle_pose: &NedPose,
    cfg: &DepthConfig,
    stamp: SimTime,
) -> DepthGrid {
    let pose = sensor_pose(vehicle_pose, &cfg.mount);
    let ranges: Vec<f64> = (0..cfg.width * cfg.height)
        .into_par_iter()
        .map(|i| {
            let dir = cfg.pixel_direction(i / cfg.width, i % cfg.width);
            let ray = Ray {
                origin: pose.translation,
                direction: pose.apply_vector(dir),
            };
            scene
                .cast_ray(&ray, cfg.max_range)
                .map_or(f64::INFINITY, |h| h.distance)
        })
        .collect();
    DepthGrid {
        stamp,
        width: cfg.width,
        height: cfg.height,
        hfov: cfg.hfov,
        ranges,
        mount: cfg.mount.transform(),
    }
}

/// World-frame points of every finite depth pixel.
pub fn depth_to_world(grid: &DepthGrid, vehicle_pose: &NedPose, cfg: &DepthConfig) -> Vec<Vec3> {
    let pose = sensor_pose(vehicle_pose, &cfg.mount);
    let mut out = Vec::new();
    for row in 0..grid.height {
        for col in 0..grid.width {
            let r = grid.range(row, col);
            if r.is_finite() {
                out.push(pose.apply(cfg.pixel_direction(row, col) * r));
            }
        }
    }
    out
}

/// `n e d` lines, one point per line.
pub fn cloud_text(cloud: &PointCloud) -> String {
    let mut text = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        let _ = writeln!(text, "{} {} {}", p.n, p.e, p.d);
    }
    text
}

/// `{frame_id, stamp_tick, count}` header for a cloud file.
pub fn cloud_sidecar(cloud: &PointCloud) -> String {
    let header = serde_json::json!({
        "frame_id": cloud.frame_id,
        "stamp_tick": cloud.stamp.tick(),
        "count": cloud.len(),
    });
    serde_json::to_string_pretty(&header).expect("header serializes")
}

/// Writes [`cloud_text`] to `path` and [`cloud_sidecar`] next to it (same
/// stem, `.json`).
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> io::Result<()> {
    fs::write(path, cloud_text(cloud))?;
    fs::write(path.with_extension("json"), cloud_sidecar(cloud))
}
