//! Aerial occupancy mapping, A* grid planning and pure-pursuit following.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Aabb, Vec3};
use crate::sensors::PointCloud;
use crate::vehicles::{CarCommand, CarParams, VehicleState};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no path from {start:?} to {goal:?}")]
    NoPath {
        start: (usize, usize),
        goal: (usize, usize),
    },
    #[error("cell {cell:?} is {reason}")]
    InvalidCell { cell: (usize, usize), reason: &'static str },
    #[error("position ({n:.2}, {e:.2}) is outside the grid")]
    OutsideGrid { n: f64, e: f64 },
    #[error("path is exhausted")]
    PathExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

/// How the planner treats unknown cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownIs {
    Free,
    #[default]
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin_n: f64,
    pub origin_e: f64,
    pub resolution: f64,
    /// Columns (east).
    pub width: usize,
    /// Rows (north).
    pub height: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("grid width and height must be at least 1".into());
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err("grid resolution must be positive".into());
        }
        if !self.origin_n.is_finite() || !self.origin_e.is_finite() {
            return Err("grid origin must be finite".into());
        }
        Ok(())
    }
}

/// Row-major 2-D grid; row indexes north, column indexes east.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    pub cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(spec: GridSpec, fill: Cell) -> Self {
        Self {
            cells: vec![fill; spec.width * spec.height],
            spec,
        }
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.spec.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, c: Cell) {
        let w = self.spec.width;
        self.cells[row * w + col] = c;
    }

    pub fn cell_of(&self, n: f64, e: f64) -> Option<(usize, usize)> {
        let r = ((n - self.spec.origin_n) / self.spec.resolution).floor();
        let c = ((e - self.spec.origin_e) / self.spec.resolution).floor();
        if r < 0.0 || c < 0.0 || r >= self.spec.height as f64 || c >= self.spec.width as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// World `(n, e)` of a cell center.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.spec.origin_n + (row as f64 + 0.5) * self.spec.resolution,
            self.spec.origin_e + (col as f64 + 0.5) * self.spec.resolution,
        )
    }

    fn blocked(&self, row: usize, col: usize, unknown: UnknownIs) -> bool {
        match self.get(row, col) {
            Cell::Occupied => true,
            Cell::Unknown => unknown == UnknownIs::Occupied,
            Cell::Free => false,
        }
    }

    /// Grows occupied cells by `radius` meters (disc footprint).
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let k = (radius / self.spec.resolution).ceil() as isize;
        let r2 = (radius / self.spec.resolution).powi(2);
        let mut out = self.clone();
        let (h, w) = (self.height() as isize, self.width() as isize);
        for row in 0..h {
            for col in 0..w {
                if self.get(row as usize, col as usize) != Cell::Occupied {
                    continue;
                }
                for dr in -k..=k {
                    for dc in -k..=k {
                        let (rr, cc) = (row + dr, col + dc);
                        if rr < 0 || cc < 0 || rr >= h || cc >= w {
                            continue;
                        }
                        if ((dr * dr + dc * dc) as f64) <= r2 {
                            out.set(rr as usize, cc as usize, Cell::Occupied);
                        }
                    }
                }
            }
        }
        out
    }

    /// Marks every cell within `radius` of `(n, e)` occupied.
    pub fn mark_occupied(&mut self, n: f64, e: f64, radius: f64) {
        let res = self.spec.resolution;
        let k = (radius / res).ceil() as isize + 1;
        let Some((r0, c0)) = self.cell_of(n, e) else {
            return;
        };
        for dr in -k..=k {
            for dc in -k..=k {
                let (rr, cc) = (r0 as isize + dr, c0 as isize + dc);
                if rr < 0 || cc < 0 || rr >= self.height() as isize || cc >= self.width() as isize {
                    continue;
                }
                let (cn, ce) = self.center(rr as usize, cc as usize);
                if (cn - n).hypot(ce - e) <= radius {
                    self.set(rr as usize, cc as usize, Cell::Occupied);
                }
            }
        }
    }

    pub fn count(&self, c: Cell) -> usize {
        self.cells.iter().filter(|&&x| x == c).count()
    }

    /// ASCII PGM (`P2`): 0 occupied, 128 unknown, 255 free. Row 0 of the
    /// image is the northernmost grid row.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width(), self.height());
        for row in (0..self.height()).rev() {
            let line: Vec<&str> = (0..self.width())
                .map(|col| match self.get(row, col) {
                    Cell::Occupied => "0",
                    Cell::Unknown => "128",
                    Cell::Free => "255",
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "origin_n": self.spec.origin_n,
            "origin_e": self.spec.origin_e,
            "resolution": self.spec.resolution,
        })
    }
}

/// Builds a grid from world-frame clouds.
///
/// A cell is occupied if any of its points stands more than
/// `height_threshold` above the ground and is not on the top face of one of
/// the `drivable` boxes; cells without points stay unknown.
pub fn build_occupancy(
    clouds: &[PointCloud],
    ground_d: f64,
    spec: &GridSpec,
    height_threshold: f64,
    drivable: &[Aabb],
) -> OccupancyGrid {
    const TOP_TOL: f64 = 0.05;
    let mut grid = OccupancyGrid::new(*spec, Cell::Unknown);
    for cloud in clouds {
        for &p in &cloud.points {
            let Some((r, c)) = grid.cell_of(p.n, p.e) else {
                continue;
            };
            let on_deck = drivable
                .iter()
                .any(|b| b.footprint_contains(p.n, p.e) && (p.d - b.min.d).abs() <= TOP_TOL);
            if ground_d - p.d > height_threshold && !on_deck {
                grid.set(r, c, Cell::Occupied);
            } else if grid.get(r, c) == Cell::Unknown {
                grid.set(r, c, Cell::Free);
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    pub cells: Vec<(usize, usize)>,
    pub world_waypoints: Vec<Vec3>,
    /// Axis-aligned moves.
    pub straight: u32,
    /// Diagonal moves.
    pub diagonal: u32,
}

impl GridPath {
    /// Path cost in cells: `straight + sqrt(2) * diagonal`.
    pub fn cost(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    pub fn length_m(&self, resolution: f64) -> f64 {
        self.cost() * resolution
    }

    /// Appends `next`, dropping its first cell when it repeats our last.
    pub fn extend(&mut self, next: GridPath) {
        let skip = usize::from(self.cells.last() == next.cells.first() && !self.cells.is_empty());
        self.cells.extend(next.cells.into_iter().skip(skip));
        self.world_waypoints.extend(next.world_waypoints.into_iter().skip(skip));
        self.straight += next.straight;
        self.diagonal += next.diagonal;
    }
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0.abs_diff(b.0) as f64;
    let dc = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
    (hi - lo) + lo * SQRT_2
}

#[derive(Clone, Copy)]
struct Open {
    f: f64,
    h: f64,
    seq: u64,
    idx: usize,
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(o.h.total_cmp(&self.h))
            .then(o.seq.cmp(&self.seq))
    }
}

/// 8-connected neighbors of `(r, c)` that can be entered. Diagonal moves
/// may not cut the corner of a blocked cell.
pub fn neighbors(
    grid: &OccupancyGrid,
    (r, c): (usize, usize),
    unknown: UnknownIs,
) -> impl Iterator<Item = ((usize, usize), bool)> + '_ {
    const STEPS: [(isize, isize); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];
    let (h, w) = (grid.height() as isize, grid.width() as isize);
    STEPS.iter().filter_map(move |&(dr, dc)| {
        let (rr, cc) = (r as isize + dr, c as isize + dc);
        if rr < 0 || cc < 0 || rr >= h || cc >= w {
            return None;
        }
        let (rr, cc) = (rr as usize, cc as usize);
        if grid.blocked(rr, cc, unknown) {
            return None;
        }
        let diagonal = dr != 0 && dc != 0;
        if diagonal && (grid.blocked(rr, c, unknown) || grid.blocked(r, cc, unknown)) {
            return None;
        }
        Some(((rr, cc), diagonal))
    })
}

/// A* with the octile heuristic. Unknown cells follow `unknown_is`.
pub fn astar(
    grid: &OccupancyGrid,
    start: (usize, usize),
    goal: (usize, usize),
    unknown_is: UnknownIs,
    ground_d: f64,
) -> Result<GridPath, PlanError> {
    for (cell, what) in [(start, "start"), (goal, "goal")] {
        if cell.0 >= grid.height() || cell.1 >= grid.width() {
            return Err(PlanError::InvalidCell {
                cell,
                reason: if what == "start" { "start outside the grid" } else { "goal outside the grid" },
            });
        }
        if grid.blocked(cell.0, cell.1, unknown_is) {
            return Err(PlanError::InvalidCell {
                cell,
                reason: if what == "start" { "start is not free" } else { "goal is not free" },
            });
        }
    }
    let w = grid.width();
    let n = w * grid.height();
    let idx = |(r, c): (usize, usize)| r * w + c;
    // g is kept as exact move counts so equal-cost paths compare equal
    let mut g: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let cost = |(a, b): (u32, u32)| a as f64 + b as f64 * SQRT_2;

    g[idx(start)] = Some((0, 0));
    let h0 = octile(start, goal);
    heap.push(Open { f: h0, h: h0, seq, idx: idx(start) });

    while let Some(Open { idx: cur, .. }) = heap.pop() {
        if closed[cur] {
            continue;
        }
        closed[cur] = true;
        let cell = (cur / w, cur % w);
        if cell == goal {
            break;
        }
        let gc = g[cur].expect("popped nodes have g");
        for (next, diagonal) in neighbors(grid, cell, unknown_is) {
            let ni = idx(next);
            if closed[ni] {
                continue;
            }
            let cand = if diagonal { (gc.0, gc.1 + 1) } else { (gc.0 + 1, gc.1) };
            if g[ni].is_none_or(|old| cost(cand) < cost(old)) {
                g[ni] = Some(cand);
                parent[ni] = cur;
                let h = octile(next, goal);
                seq += 1;
                heap.push(Open { f: cost(cand) + h, h, seq, idx: ni });
            }
        }
    }

    let gi = idx(goal);
    let Some((straight, diagonal)) = g[gi].filter(|_| closed[gi]) else {
        return Err(PlanError::NoPath { start, goal });
    };
    let mut cells = vec![goal];
    let mut cur = gi;
    while cur != idx(start) {
        cur = parent[cur];
        cells.push((cur / w, cur % w));
    }
    cells.reverse();
    let world_waypoints = cells
        .iter()
        .map(|&(r, c)| {
            let (wn, we) = grid.center(r, c);
            Vec3::new(wn, we, ground_d)
        })
        .collect();
    Ok(GridPath {
        cells,
        world_waypoints,
        straight,
        diagonal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurePursuitParams {
    pub lookahead: f64,
    pub waypoint_capture: f64,
    pub cruise_speed: f64,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        Self {
            lookahead: 3.0,
            waypoint_capture: 1.0,
            cruise_speed: 3.6,
        }
    }
}

impl PurePursuitParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("lookahead", self.lookahead),
            ("waypoint_capture", self.waypoint_capture),
            ("cruise_speed", self.cruise_speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// Pure-pursuit steering angle `atan(2 L_wb sin(alpha) / L)` for a goal
/// point at bearing `alpha` (body frame) and distance `dist`. Unclamped.
pub fn pursuit_steering(wheelbase: f64, alpha: f64, dist: f64) -> f64 {
    if dist <= 1e-9 {
        return 0.0;
    }
    (2.0 * wheelbase * alpha.sin() / dist).atan()
}

/// Stateful follower that tracks progress along a polyline so that
/// self-crossing paths are followed in order.
#[derive(Debug, Clone)]
pub struct PathFollower {
    points: Vec<Vec3>,
    arc: Vec<f64>,
    progress: usize,
}

impl PathFollower {
    pub fn new(points: Vec<Vec3>) -> Result<Self, PlanError> {
        if points.is_empty() {
            return Err(PlanError::PathExhausted);
        }
        let mut arc = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                s += (*p - points[i - 1]).horizontal_norm();
            }
            arc.push(s);
        }
        Ok(Self {
            points,
            arc,
            progress: 0,
        })
    }

    /// Densifies a sparse polyline to `spacing` meters.
    pub fn from_route(route: &[Vec3], spacing: f64) -> Result<Self, PlanError> {
        let mut pts = Vec::new();
        for w in route.windows(2) {
            let len = (w[1] - w[0]).horizontal_norm();
            let k = (len / spacing).ceil().max(1.0) as usize;
            for i in 0..k {
                pts.push(w[0] + (w[1] - w[0]) * (i as f64 / k as f64));
            }
        }
        if let Some(&last) = route.last() {
            pts.push(last);
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn progress(&self) -> usize {
        self.progress
    }

    pub fn remaining(&self) -> f64 {
        self.arc[self.arc.len() - 1] - self.arc[self.progress]
    }

    pub fn goal(&self) -> Vec3 {
        self.points[self.points.len() - 1]
    }

    /// Whether the vehicle at `pos` has reached the end of the path.
    pub fn finished(&self, pos: Vec3, params: &PurePursuitParams) -> bool {
        self.remaining() <= params.lookahead + params.waypoint_capture
            && (self.goal() - pos).horizontal_norm() <= params.waypoint_capture
    }

    fn update_progress(&mut self, pos: Vec3, window: f64) {
        let base = self.arc[self.progress];
        let mut best = (self.progress, f64::INFINITY);
        for i in self.progress..self.points.len() {
            if self.arc[i] - base > window {
                break;
            }
            let d = (self.points[i] - pos).horizontal_norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        self.progress = best.0;
    }

    /// Next drive command for `state`.
    pub fn step(&mut self, state: &VehicleState, params: &PurePursuitParams, car: &CarParams) -> CarCommand {
        let pos = state.position();
        self.update_progress(pos, (3.0 * params.lookahead).max(5.0));
        if self.finished(pos, params) {
            return CarCommand::stop();
        }
        let base = self.arc[self.progress];
        let target = (self.progress..self.points.len())
            .find(|&i| self.arc[i] - base >= params.lookahead)
            .map_or(self.goal(), |i| self.points[i]);
        let delta = (target - pos).horizontal();
        let alpha = wrap_angle(delta.e.atan2(delta.n) - state.yaw());
        let steer = steering_for(car, alpha, delta.horizontal_norm());
        CarCommand::Drive {
            speed: params.cruise_speed.min(car.max_speed),
            steer,
        }
    }
}

/// Clamped pursuit steering; targets behind the vehicle get full lock
/// towards their side.
pub fn steering_for(car: &CarParams, alpha: f64, dist: f64) -> f64 {
    if alpha.cos() < 0.0 {
        return if alpha >= 0.0 { car.max_steer } else { -car.max_steer };
    }
    pursuit_steering(car.wheelbase, alpha, dist).clamp(-car.max_steer, car.max_steer)
}

/// Stateless pure-pursuit step over a whole path (nearest point searched
/// globally).
pub fn pure_pursuit_step(
    state: &VehicleState,
    path: &GridPath,
    params: &PurePursuitParams,
    car: &CarParams,
) -> Result<CarCommand, PlanError> {
    let mut f = PathFollower::new(path.world_waypoints.clone())?;
    f.update_progress(state.position(), f64::INFINITY);
    let mut cmd = f.step(state, params, car);
    if let CarCommand::Drive { speed, .. } = &mut cmd {
        if f.finished(state.position(), params) {
            *speed = 0.0;
        }
    }
    Ok(cmd)
}

/// `row,col,n,e` lines for a path.
pub fn path_csv(path: &GridPath) -> String {
    let mut out = String::from("row,col,n,e\n");
    for (&(r, c), w) in path.cells.iter().zip(&path.world_waypoints) {
        let _ = writeln!(out, "{r},{c},{},{}", w.n, w.e);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimTime;
    use crate::geometry::NedPose;
    use crate::vehicles::{step_car, VehicleParams, VehicleType};
    use crate::world::Scene;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;
    use std::collections::BTreeSet;

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec { origin_n: 0.0, origin_e: 0.0, resolution: 0.5, width: w, height: h }
    }

    /// Uniform-cost search over the same move set, with exact counts.
    fn dijkstra(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Option<(u32, u32)> {
        let mut best: Vec<Option<(u32, u32)>> = vec![None; grid.cells.len()];
        let key = |(a, b): (u32, u32)| a as f64 + b as f64 * SQRT_2;
        let mut frontier = BTreeSet::new();
        let w = grid.width();
        best[start.0 * w + start.1] = Some((0, 0));
        frontier.insert((0u64, start.0, start.1));
        let mut done = vec![false; grid.cells.len()];
        while let Some(&(k, r, c)) = frontier.iter().next() {
            frontier.remove(&(k, r, c));
            if done[r * w + c] {
                continue;
            }
            done[r * w + c] = true;
            let g = best[r * w + c].unwrap();
            for ((nr, nc), diag) in neighbors(grid, (r, c), UnknownIs::Occupied) {
                let cand = if diag { (g.0, g.1 + 1) } else { (g.0 + 1, g.1) };
                let slot = &mut best[nr * w + nc];
                if slot.is_none_or(|old| key(cand) < key(old)) {
                    *slot = Some(cand);
                    frontier.insert((key(cand).to_bits(), nr, nc));
                }
            }
        }
        best[goal.0 * w + goal.1]
    }

    fn random_grid(rng: &mut Xoshiro256PlusPlus, density: f64) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(spec(32, 32), Cell::Free);
        for c in g.cells.iter_mut() {
            if rng.random_bool(density) {
                *c = Cell::Occupied;
            }
        }
        g
    }

    #[test]
    fn no_points_all_unknown() {
        let g = build_occupancy(&[], 0.0, &spec(4, 4), 0.4, &[]);
        assert_eq!(g.count(Cell::Unknown), 16);
    }

    #[test]
    fn floor_arithmetic_and_threshold() {
        let cloud = PointCloud::new(
            "ned",
            SimTime::zero(0.02),
            vec![Vec3::new(2.3, 4.1, -1.5), Vec3::new(0.2, 0.2, -0.05)],
        );
        let g = build_occupancy(&[cloud], 0.0, &spec(20, 20), 0.4, &[]);
        assert_eq!(g.get(4, 8), Cell::Occupied);
        assert_eq!(g.get(0, 0), Cell::Free);
        assert_eq!(g.count(Cell::Occupied), 1);
    }

    #[test]
    fn deck_tops_are_free() {
        let deck = Aabb::new(Vec3::new(0.0, 0.0, -6.9), Vec3::new(2.0, 2.0, -6.0));
        let cloud = PointCloud::new("ned", SimTime::zero(0.02), vec![Vec3::new(1.0, 1.0, -6.9)]);
        let g = build_occupancy(&[cloud], 0.0, &spec(8, 8), 0.4, &[deck]);
        assert_eq!(g.get(2, 2), Cell::Free);
    }

    #[test]
    fn trivial_paths() {
        let g = OccupancyGrid::new(spec(3, 3), Cell::Free);
        let p = astar(&g, (1, 1), (1, 1), UnknownIs::Occupied, 0.0).unwrap();
        assert_eq!(p.cells, vec![(1, 1)]);
        assert_eq!(p.cost(), 0.0);
        let p = astar(&g, (0, 0), (2, 2), UnknownIs::Occupied, 0.0).unwrap();
        assert_eq!(p.cost(), 2.0 * SQRT_2);
        assert_eq!(p.cells.len(), 3);
    }

    #[test]
    fn blocked_endpoints_and_no_path() {
        let mut g = OccupancyGrid::new(spec(5, 5), Cell::Free);
        g.set(0, 0, Cell::Occupied);
        assert!(matches!(astar(&g, (0, 0), (4, 4), UnknownIs::Occupied, 0.0), Err(PlanError::InvalidCell { .. })));
        for r in 0..5 {
            g.set(r, 2, Cell::Occupied);
        }
        assert!(matches!(astar(&g, (0, 1), (4, 4), UnknownIs::Occupied, 0.0), Err(PlanError::NoPath { .. })));
        let u = OccupancyGrid::new(spec(5, 5), Cell::Unknown);
        assert!(astar(&u, (0, 0), (4, 4), UnknownIs::Free, 0.0).is_ok());
        assert!(astar(&u, (0, 0), (4, 4), UnknownIs::Occupied, 0.0).is_err());
    }

    #[test]
    fn astar_matches_dijkstra_oracle() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1234);
        let mut solved = 0;
        while solved < 50 {
            let g = random_grid(&mut rng, 0.3);
            let s = (rng.random_range(0..32), rng.random_range(0..32));
            let t = (rng.random_range(0..32), rng.random_range(0..32));
            if g.get(s.0, s.1) != Cell::Free || g.get(t.0, t.1) != Cell::Free {
                continue;
            }
            let Some(oracle) = dijkstra(&g, s, t) else {
                assert!(astar(&g, s, t, UnknownIs::Occupied, 0.0).is_err());
                continue;
            };
            let p = astar(&g, s, t, UnknownIs::Occupied, 0.0).unwrap();
            assert_eq!((p.straight, p.diagonal), oracle);
            for w in p.cells.windows(2) {
                assert!(w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1 && w[0] != w[1]);
            }
            for &(r, c) in &p.cells {
                assert_eq!(g.get(r, c), Cell::Free);
            }
            solved += 1;
        }
    }

    #[test]
    fn inflation_disc() {
        let mut g = OccupancyGrid::new(spec(9, 9), Cell::Free);
        g.set(4, 4, Cell::Occupied);
        let big = g.inflate(1.0);
        assert_eq!(big.get(4, 6), Cell::Occupied);
        assert_eq!(big.get(6, 6), Cell::Free);
        assert_eq!(big.count(Cell::Occupied), 13);
    }

    #[test]
    fn pgm_layout() {
        let mut g = OccupancyGrid::new(spec(3, 2), Cell::Free);
        g.set(0, 0, Cell::Occupied);
        g.set(1, 2, Cell::Unknown);
        assert_eq!(g.to_pgm(), "P2\n3 2\n255\n255 255 128\n0 255 255\n");
    }

    #[test]
    fn steering_formula() {
        assert_eq!(pursuit_steering(2.5, 0.0, 5.0), 0.0);
        let d = pursuit_steering(2.5, std::f64::consts::FRAC_PI_4, 2.828);
        assert!((d - (2.0 * 2.5 * 0.5f64.sqrt() / 2.828).atan()).abs() < 1e-12);
        assert!((d - 0.8961).abs() < 1e-3);
        let car = CarParams::default();
        assert_eq!(steering_for(&car, std::f64::consts::FRAC_PI_4, 2.828), 0.6);
    }

    fn car_at(n: f64, e: f64, yaw: f64) -> VehicleState {
        VehicleState::at_rest("c", VehicleType::Car, NedPose::from_yaw(Vec3::new(n, e, 0.0), yaw), SimTime::zero(0.02))
    }

    #[test]
    fn stop_inside_capture() {
        let path = GridPath {
            cells: vec![(0, 0), (0, 1)],
            world_waypoints: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.5, 0.0)],
            straight: 1,
            diagonal: 0,
        };
        let cmd = pure_pursuit_step(&car_at(0.0, 0.2, 0.0), &path, &PurePursuitParams::default(), &CarParams::default()).unwrap();
        assert_eq!(cmd, CarCommand::stop());
        let empty = GridPath { cells: vec![], world_waypoints: vec![], straight: 0, diagonal: 0 };
        assert_eq!(
            pure_pursuit_step(&car_at(0.0, 0.0, 0.0), &empty, &PurePursuitParams::default(), &CarParams::default()),
            Err(PlanError::PathExhausted)
        );
    }

    #[test]
    fn straight_path_dead_ahead() {
        let mut f = PathFollower::from_route(&[Vec3::ZERO, Vec3::new(50.0, 0.0, 0.0)], 0.5).unwrap();
        let cmd = f.step(&car_at(0.0, 0.0, 0.0), &PurePursuitParams::default(), &CarParams::default());
        assert_eq!(cmd, CarCommand::Drive { speed: 3.6, steer: 0.0 });
    }

    #[test]
    fn cross_track_error_converges() {
        let scene = Scene::flat(0.0, (Vec3::new(-100.0, -100.0, -10.0), Vec3::new(100.0, 100.0, 0.0)));
        let params = VehicleParams::default();
        let pp = PurePursuitParams::default();
        let mut f = PathFollower::from_route(&[Vec3::ZERO, Vec3::new(90.0, 0.0, 0.0)], 0.5).unwrap();
        let mut s = car_at(0.0, 2.0, 0.0);
        let mut settled = None;
        while s.position().n < 30.0 {
            let cmd = f.step(&s, &pp, &params.car);
            s = step_car(&s, &cmd, &params, &scene, 0.02).unwrap();
            if settled.is_none() && s.position().e.abs() < 0.1 {
                settled = Some(s.position().n);
            }
        }
        assert!(settled.is_some(), "cross-track error still {}", s.position().e);
        assert!(s.position().e.abs() < 0.1);
    }

    #[test]
    fn corridor_duration_matches_cruise() {
        let scene = Scene::flat(0.0, (Vec3::new(-200.0, -200.0, -10.0), Vec3::new(200.0, 200.0, 0.0)));
        let params = VehicleParams::default();
        let pp = PurePursuitParams::default();
        let mut f = PathFollower::from_route(&[Vec3::ZERO, Vec3::new(100.0, 0.0, 0.0)], 0.5).unwrap();
        let mut s = car_at(0.0, 0.0, 0.0);
        let mut ticks = 0;
        while !f.finished(s.position(), &pp) && ticks < 100_000 {
            let cmd = f.step(&s, &pp, &params.car);
            s = step_car(&s, &cmd, &params, &scene, 0.02).unwrap();
            ticks += 1;
        }
        let t = ticks as f64 * 0.02;
        assert!((t - 100.0 / 3.6).abs() < 0.1 * 100.0 / 3.6, "{t}");
    }
}
