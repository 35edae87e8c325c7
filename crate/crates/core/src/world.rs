//! Static scene: a flat ground plane plus axis-aligned box obstacles.
//!
//! Boxes tagged [`ObstacleTag::BridgeDeck`] are drivable surfaces; ramps are
//! modelled as stacks of shallow deck boxes.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Ray, Vec3};

/// Errors raised while loading a scene file.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene text: {0}")]
    Parse(String),
    #[error("scene schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid obstacle `{id}`: {reason}")]
    Validation { id: String, reason: String },
}

#[derive(Debug, Error, PartialEq)]
#[error("position ({n}, {e}) lies outside the scene bounds")]
pub struct OutOfBounds {
    pub n: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleTag {
    Building,
    BridgeDeck,
    BridgePier,
    Generic,
}

impl ObstacleTag {
    pub fn is_drivable(self) -> bool {
        matches!(self, ObstacleTag::BridgeDeck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: String,
    pub min: Vec3,
    pub max: Vec3,
    pub tag: ObstacleTag,
}

impl Obstacle {
    pub fn new(id: impl Into<String>, min: Vec3, max: Vec3, tag: ObstacleTag) -> Self {
        Self {
            id: id.into(),
            min,
            max,
            tag,
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.min, self.max)
    }

    /// Down coordinate of the top face.
    pub fn top_d(&self) -> f64 {
        self.min.d
    }
}

/// What a ray struck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitObject {
    Ground,
    /// Index into [`Scene::obstacles`].
    Obstacle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub object: HitObject,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    ground_d: f64,
    bounds: [Vec3; 2],
    obstacles: Vec<Obstacle>,
}

/// Validated, immutable scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile", into = "SceneFile")]
pub struct Scene {
    pub ground_d: f64,
    pub bounds: (Vec3, Vec3),
    pub obstacles: Vec<Obstacle>,
}

impl TryFrom<SceneFile> for Scene {
    type Error = SceneError;
    fn try_from(f: SceneFile) -> Result<Self, SceneError> {
        Scene::new(f.ground_d, (f.bounds[0], f.bounds[1]), f.obstacles)
    }
}

impl From<Scene> for SceneFile {
    fn from(s: Scene) -> Self {
        SceneFile {
            ground_d: s.ground_d,
            bounds: [s.bounds.0, s.bounds.1],
            obstacles: s.obstacles,
        }
    }
}

/// Maximum vertical tolerance when matching a point to a surface.
const SURFACE_EPS: f64 = 1e-9;

impl Scene {
    pub fn new(
        ground_d: f64,
        bounds: (Vec3, Vec3),
        obstacles: Vec<Obstacle>,
    ) -> Result<Self, SceneError> {
        let scene_box = Aabb::new(bounds.0, bounds.1);
        if !ground_d.is_finite() || !bounds.0.is_finite() || !bounds.1.is_finite() {
            return Err(SceneError::Validation {
                id: "<scene>".into(),
                reason: "ground_d and bounds must be finite".into(),
            });
        }
        if !scene_box.is_ordered() {
            return Err(SceneError::Validation {
                id: "<scene>".into(),
                reason: "bounds min must not exceed max".into(),
            });
        }
        let mut seen = HashSet::new();
        for ob in &obstacles {
            if ob.id.is_empty() || ob.id == "ground" {
                return Err(SceneError::Validation {
                    id: ob.id.clone(),
                    reason: "obstacle id must be nonempty and not `ground`".into(),
                });
            }
            if !seen.insert(ob.id.as_str()) {
                return Err(SceneError::Validation {
                    id: ob.id.clone(),
                    reason: "duplicate obstacle id".into(),
                });
            }
            if !ob.min.is_finite() || !ob.max.is_finite() || !ob.aabb().is_ordered() {
                return Err(SceneError::Validation {
                    id: ob.id.clone(),
                    reason: "min must be finite and not exceed max componentwise".into(),
                });
            }
            if !scene_box.contains_box(&ob.aabb()) {
                return Err(SceneError::Validation {
                    id: ob.id.clone(),
                    reason: "obstacle extends outside scene bounds".into(),
                });
            }
        }
        Ok(Self {
            ground_d,
            bounds,
            obstacles,
        })
    }

    /// Empty scene with the given ground level and bounds.
    pub fn flat(ground_d: f64, bounds: (Vec3, Vec3)) -> Self {
        Self::new(ground_d, bounds, Vec::new()).expect("flat scene bounds must be ordered")
    }

    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        let file: SceneFile = serde_path_to_error::deserialize(value).map_err(|e| {
            SceneError::Schema {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            }
        })?;
        Scene::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn obstacle(&self, id: &str) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.id == id)
    }

    /// Identifier of a hit object, `"ground"` for the ground plane.
    pub fn hit_id(&self, object: HitObject) -> &str {
        match object {
            HitObject::Ground => "ground",
            HitObject::Obstacle(i) => &self.obstacles[i].id,
        }
    }

    pub fn in_bounds(&self, n: f64, e: f64) -> bool {
        n >= self.bounds.0.n && n <= self.bounds.1.n && e >= self.bounds.0.e && e <= self.bounds.1.e
    }

    pub fn drivable_boxes(&self) -> Vec<Aabb> {
        self.obstacles
            .iter()
            .filter(|o| o.tag.is_drivable())
            .map(Obstacle::aabb)
            .collect()
    }

    /// Nearest hit among the ground plane and all obstacles within `max_range`.
    pub fn cast_ray(&self, ray: &Ray, max_range: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (i, ob) in self.obstacles.iter().enumerate() {
            if let Some(t) = ob.aabb().ray_hit(ray) {
                if t <= max_range && best.is_none_or(|b| t < b.distance) {
                    best = Some(RayHit {
                        distance: t,
                        object: HitObject::Obstacle(i),
                    });
                }
            }
        }
        if ray.direction.d != 0.0 {
            let t = (self.ground_d - ray.origin.d) / ray.direction.d;
            if t >= 0.0 && t <= max_range && best.is_none_or(|b| t < b.distance) {
                best = Some(RayHit {
                    distance: t,
                    object: HitObject::Ground,
                });
            }
        }
        best
    }

    /// Whether the segment `a -> b` runs through any obstacle for more than
    /// a grazing contact. Symmetric in `a` and `b`.
    pub fn segment_blocked(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return false;
        }
        self.obstacles
            .iter()
            .any(|o| segment_overlap(a, d, &o.aabb()) * len > SURFACE_EPS)
    }

    /// Ground-level traversability of column `(n, e)`.
    ///
    /// True iff no obstacle other than a drivable deck occupies the band
    /// `[ground_d - clearance_d, ground_d]`.
    pub fn is_traversable(&self, n: f64, e: f64, clearance_d: f64) -> Result<bool, OutOfBounds> {
        if !self.in_bounds(n, e) {
            return Err(OutOfBounds { n, e });
        }
        let (top, bottom) = (self.ground_d - clearance_d, self.ground_d);
        Ok(!self.obstacles.iter().any(|o| {
            !o.tag.is_drivable()
                && o.aabb().footprint_contains(n, e)
                && o.min.d < bottom
                && o.max.d > top
        }))
    }

    /// Level-aware clearance check for a vehicle resting on `support_d`.
    ///
    /// Any obstacle, decks included, that intrudes into the open band
    /// `(support_d - clearance_d, support_d)` blocks the column.
    pub fn is_clear_at(&self, n: f64, e: f64, support_d: f64, clearance_d: f64) -> bool {
        self.in_bounds(n, e)
            && !self.obstacles.iter().any(|o| {
                o.aabb().footprint_contains(n, e)
                    && o.min.d < support_d - SURFACE_EPS
                    && o.max.d > support_d - clearance_d + SURFACE_EPS
            })
    }

    /// Support surface under `(n, e)` for a vehicle currently at `current_d`.
    ///
    /// Candidates are the ground and the tops of drivable boxes covering the
    /// column. The highest candidate that is at most `max_step` above the
    /// current level wins.
    pub fn support_d(&self, n: f64, e: f64, current_d: f64, max_step: f64) -> f64 {
        let mut best = self.ground_d;
        for o in &self.obstacles {
            if o.tag.is_drivable()
                && o.aabb().footprint_contains(n, e)
                && o.top_d() >= current_d - max_step - SURFACE_EPS
                && o.top_d() < best
            {
                best = o.top_d();
            }
        }
        best
    }

    /// Whether `p` lies on the top face of a drivable box, within `tol`.
    pub fn on_drivable_top(&self, p: Vec3, tol: f64) -> bool {
        self.obstacles.iter().any(|o| {
            o.tag.is_drivable()
                && o.aabb().footprint_contains(p.n, p.e)
                && (p.d - o.top_d()).abs() <= tol
        })
    }

    /// Distance from `p` to the nearest scene surface (ground or box face).
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.aabb().surface_distance(p))
            .fold((p.d - self.ground_d).abs(), f64::min)
    }
}

/// Fraction of the segment `a + t d`, `t` in `[0, 1]`, inside the box.
fn segment_overlap(a: Vec3, d: Vec3, b: &Aabb) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..3 {
        let (o, v, lo, hi) = (a[axis], d[axis], b.min[axis], b.max[axis]);
        if v == 0.0 {
            if o < lo || o > hi {
                return 0.0;
            }
            continue;
        }
        let (ta, tb) = ((lo - o) / v, (hi - o) / v);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 - t0).max(0.0)
}

/// Reads and validates a scene file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scene::parse(&text)
}

/// Free-function form of [`Scene::cast_ray`].
pub fn cast_ray(scene: &Scene, ray: &Ray, max_range: f64) -> Option<RayHit> {
    scene.cast_ray(ray, max_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn bounds() -> (Vec3, Vec3) {
        (Vec3::new(-50.0, -50.0, -50.0), Vec3::new(50.0, 50.0, 0.0))
    }

    fn one_box() -> Scene {
        Scene::new(
            0.0,
            bounds(),
            vec![Obstacle::new(
                "b1",
                Vec3::new(5.0, -1.0, -2.0),
                Vec3::new(7.0, 1.0, 0.0),
                ObstacleTag::Building,
            )],
        )
        .unwrap()
    }

    #[test]
    fn minimal_file_has_no_obstacles() {
        let s = Scene::parse(r#"{"ground_d":0,"bounds":[[-10,-10,-10],[10,10,0]],"obstacles":[]}"#)
            .unwrap();
        assert!(s.obstacles.is_empty());
    }

    #[test]
    fn duplicate_id_names_obstacle() {
        let text = r#"{"ground_d":0,"bounds":[[-10,-10,-10],[10,10,0]],"obstacles":[
            {"id":"a","min":[0,0,-1],"max":[1,1,0],"tag":"building"},
            {"id":"a","min":[2,2,-1],"max":[3,3,0],"tag":"generic"}]}"#;
        match Scene::parse(text) {
            Err(SceneError::Validation { id, .. }) => assert_eq!(id, "a"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn schema_and_parse_errors_are_distinct() {
        assert!(matches!(Scene::parse("{not json"), Err(SceneError::Parse(_))));
        let missing = r#"{"ground_d":0,"obstacles":[]}"#;
        assert!(matches!(Scene::parse(missing), Err(SceneError::Schema { .. })));
        let unknown = r#"{"ground_d":0,"bounds":[[0,0,0],[1,1,0]],"obstacles":[],"extra":1}"#;
        assert!(matches!(Scene::parse(unknown), Err(SceneError::Schema { .. })));
        let bad_tag = r#"{"ground_d":0,"bounds":[[0,0,-1],[1,1,0]],"obstacles":[
            {"id":"x","min":[0,0,-1],"max":[1,1,0],"tag":"tower"}]}"#;
        match Scene::parse(bad_tag) {
            Err(SceneError::Schema { path, .. }) => assert!(path.contains("obstacles[0]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inverted_or_out_of_bounds_box_rejected() {
        let inverted = r#"{"ground_d":0,"bounds":[[-10,-10,-10],[10,10,0]],"obstacles":[
            {"id":"inv","min":[1,0,-1],"max":[0,1,0],"tag":"building"}]}"#;
        assert!(matches!(Scene::parse(inverted), Err(SceneError::Validation { id, .. }) if id == "inv"));
        let outside = r#"{"ground_d":0,"bounds":[[-10,-10,-10],[10,10,0]],"obstacles":[
            {"id":"far","min":[20,0,-1],"max":[21,1,0],"tag":"building"}]}"#;
        assert!(matches!(Scene::parse(outside), Err(SceneError::Validation { id, .. }) if id == "far"));
    }

    #[test]
    fn bridge_town_has_deck_and_two_piers() {
        let s = bundled::bridge_town();
        assert!(s.obstacles.iter().any(|o| o.tag == ObstacleTag::BridgeDeck));
        let piers = s
            .obstacles
            .iter()
            .filter(|o| o.tag == ObstacleTag::BridgePier)
            .count();
        assert_eq!(piers, 2);
    }

    #[test]
    fn cast_ray_examples() {
        let empty = Scene::flat(0.0, bounds());
        let down = Ray::new(Vec3::new(0.0, 0.0, -10.0), Vec3::DOWN).unwrap();
        let hit = empty.cast_ray(&down, 100.0).unwrap();
        assert_eq!(hit.distance, 10.0);
        assert_eq!(empty.hit_id(hit.object), "ground");

        let s = one_box();
        let level = Ray::new(Vec3::new(0.0, 0.0, -5.0), Vec3::NORTH).unwrap();
        assert!(s.cast_ray(&level, 100.0).is_none());

        let ray = Ray::new(Vec3::new(0.0, 0.0, -1.0), Vec3::NORTH).unwrap();
        let hit = s.cast_ray(&ray, 100.0).unwrap();
        assert_eq!(hit.distance, 5.0);
        assert_eq!(s.hit_id(hit.object), "b1");
    }

    #[test]
    fn cast_ray_respects_max_range() {
        let s = one_box();
        let ray = Ray::new(Vec3::new(0.0, 0.0, -1.0), Vec3::NORTH).unwrap();
        assert!(s.cast_ray(&ray, 4.999).is_none());
        assert_eq!(s.cast_ray(&ray, 5.0).unwrap().distance, 5.0);
    }

    #[test]
    fn traversability_examples() {
        let s = bundled::bridge_town();
        assert_eq!(s.is_traversable(0.0, -80.0, 2.0), Ok(true));
        let building = s
            .obstacles
            .iter()
            .find(|o| o.tag == ObstacleTag::Building)
            .unwrap();
        let c = (building.min + building.max) / 2.0;
        assert_eq!(s.is_traversable(c.n, c.e, 2.0), Ok(false));
        // under the arch, between the piers
        let deck = s.obstacle("deck").unwrap();
        assert!(deck.max.d - s.ground_d < -2.0);
        assert_eq!(s.is_traversable(0.0, 0.0, 2.0), Ok(true));
        assert!(s.is_clear_at(0.0, 0.0, s.ground_d, 2.0));
        assert!(s.is_traversable(1e6, 0.0, 2.0).is_err());
    }

    #[test]
    fn support_climbs_small_steps_only() {
        let s = Scene::new(
            0.0,
            bounds(),
            vec![
                Obstacle::new("s1", Vec3::new(0.0, -2.0, -0.3), Vec3::new(1.0, 2.0, 0.0), ObstacleTag::BridgeDeck),
                Obstacle::new("s2", Vec3::new(1.0, -2.0, -0.6), Vec3::new(2.0, 2.0, 0.0), ObstacleTag::BridgeDeck),
                Obstacle::new("wall", Vec3::new(3.0, -2.0, -3.0), Vec3::new(4.0, 2.0, 0.0), ObstacleTag::BridgeDeck),
            ],
        )
        .unwrap();
        assert_eq!(s.support_d(0.5, 0.0, 0.0, 0.35), -0.3);
        assert_eq!(s.support_d(1.5, 0.0, -0.3, 0.35), -0.6);
        // from the ground the second step is too high; falls back to ground
        assert_eq!(s.support_d(1.5, 0.0, 0.0, 0.35), 0.0);
        assert!(!s.is_clear_at(1.5, 0.0, 0.0, 2.0));
        assert!(s.is_clear_at(1.5, 0.0, -0.6, 2.0));
        assert!(!s.is_clear_at(3.5, 0.0, 0.0, 2.0));
    }

    #[test]
    fn scene_json_round_trip() {
        let s = bundled::bridge_town();
        assert_eq!(Scene::parse(&s.to_json()).unwrap(), s);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shrinking_range_never_changes_hit(
                on in -40.0..40.0f64, oe in -40.0..40.0f64, od in -30.0..-0.5f64,
                dn in -1.0..1.0f64, de in -1.0..1.0f64, dd in -1.0..1.0f64,
                frac in 0.0..1.5f64,
            ) {
                let s = bundled::bridge_town();
                let Some(ray) = Ray::new(Vec3::new(on, oe, od), Vec3::new(dn, de, dd)) else {
                    return Ok(());
                };
                if let Some(full) = s.cast_ray(&ray, 500.0) {
                    let r = full.distance * frac;
                    match s.cast_ray(&ray, r) {
                        None => prop_assert!(r < full.distance),
                        Some(h) => {
                            prop_assert!(r >= full.distance);
                            prop_assert_eq!(h, full);
                        }
                    }
                    if let HitObject::Obstacle(i) = full.object {
                        let bx = s.obstacles[i].aabb();
                        if !bx.contains(ray.origin) {
                            prop_assert!(bx.surface_distance(ray.at(full.distance)) < 1e-9);
                        }
                    }
                }
            }
        }
    }
}
