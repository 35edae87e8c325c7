//! Point-to-point ICP with a closed-form (Kabsch) inner step.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quaternion, RigidTransform, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("only {pairs} correspondences, at least {required} required")]
    InsufficientCorrespondences { pairs: usize, required: usize },
    #[error("no correspondences within range")]
    NoPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    pub correspondence_max_dist: f64,
    /// Stop once the RMSE changes by less than this between iterations.
    pub convergence_eps: f64,
    pub min_pairs: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            correspondence_max_dist: 2.0,
            convergence_eps: 1e-6,
            min_pairs: 10,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 || self.min_pairs == 0 {
            return Err("max_iterations and min_pairs must be positive".into());
        }
        if !(self.correspondence_max_dist > 0.0 && self.correspondence_max_dist.is_finite()) {
            return Err("correspondence_max_dist must be positive".into());
        }
        if !(self.convergence_eps > 0.0) {
            return Err("convergence_eps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub rmse: f64,
    pub iterations: usize,
    pub pairs_used: usize,
    pub converged: bool,
    /// RMSE at the initial transform followed by every accepted iteration.
    pub rmse_history: Vec<f64>,
}

/// Serialized registration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub est_translation: [f64; 3],
    pub est_rotation_ypr_deg: [f64; 3],
    pub rmse_m: f64,
    pub iterations: usize,
    pub pairs_used: usize,
    pub converged: bool,
}

impl IcpResult {
    pub fn report(&self) -> RegistrationReport {
        let (y, p, r) = self.transform.rotation.to_ypr();
        RegistrationReport {
            est_translation: self.transform.translation.to_array(),
            est_rotation_ypr_deg: [y.to_degrees(), p.to_degrees(), r.to_degrees()],
            rmse_m: self.rmse,
            iterations: self.iterations,
            pairs_used: self.pairs_used,
            converged: self.converged,
        }
    }
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.n, v.e, v.d)
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let sum = points.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
    sum / points.len() as f64
}

/// Least-squares rigid transform taking `source[i]` onto `target[i]`.
pub fn best_fit_transform(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform, RegistrationError> {
    if source.len() != target.len() {
        return Err(RegistrationError::DegenerateInput(format!(
            "length mismatch: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(RegistrationError::DegenerateInput(format!(
            "{} pairs, need at least 3",
            source.len()
        )));
    }
    let cs = centroid(source);
    let ct = centroid(target);
    let mut h = Matrix3::zeros();
    for (&s, &t) in source.iter().zip(target) {
        h += to_na(s - cs) * to_na(t - ct).transpose();
    }

    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (s_max, s_mid) = (sv[order[0]], sv[order[1]]);
    if !(s_max > 0.0) || s_mid <= 1e-12 * s_max {
        return Err(RegistrationError::DegenerateInput(
            "cross-covariance has rank below 2 (points collinear or coincident)".into(),
        ));
    }

    let mut v = v_t.transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        // reflection: flip the axis of the smallest singular value
        let mut col = v.column_mut(order[2]);
        col.neg_mut();
        r = v * u.transpose();
    }
    let m = [
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ];
    let rotation = Quaternion::from_matrix(m);
    let translation = ct - rotation.rotate(cs);
    Ok(RigidTransform::new(rotation, translation))
}

type CellKey = (i64, i64, i64);

/// Uniform voxel hash for fixed-radius nearest-neighbor queries.
///
/// With the cell size equal to the query radius, every candidate lies in
/// the 27 cells around the query point, so results match brute force.
pub struct NeighborIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<CellKey, Vec<usize>>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(points: &'a [Vec3], cell: f64) -> Self {
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, cell, cells }
    }

    fn key(p: Vec3, cell: f64) -> CellKey {
        (
            (p.n / cell).floor() as i64,
            (p.e / cell).floor() as i64,
            (p.d / cell).floor() as i64,
        )
    }

    /// Nearest point within `self.cell` of `q`; ties go to the lowest index.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        let (kn, ke, kd) = Self::key(q, self.cell);
        let max_sq = self.cell * self.cell;
        let mut best: Option<(usize, f64)> = None;
        for dn in -1..=1 {
            for de in -1..=1 {
                for dd in -1..=1 {
                    let Some(bucket) = self.cells.get(&(kn + dn, ke + de, kd + dd)) else {
                        continue;
                    };
                    for &i in bucket {
                        let d2 = (self.points[i] - q).norm_squared();
                        if d2 > max_sq {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d2 < bd || (d2 == bd && i < bi),
                        };
                        if better {
                            best = Some((i, d2));
                        }
                    }
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}

struct Pairs {
    source: Vec<Vec3>,
    target: Vec<Vec3>,
    sq_sum: f64,
}

impl Pairs {
    fn len(&self) -> usize {
        self.source.len()
    }

    fn rmse(&self) -> f64 {
        (self.sq_sum / self.len() as f64).sqrt()
    }
}

fn correspond(source: &[Vec3], index: &NeighborIndex<'_>, t: &RigidTransform) -> Pairs {
    let matches: Vec<Option<(Vec3, Vec3, f64)>> = source
        .par_iter()
        .map(|&s| {
            let moved = t.apply(s);
            index
                .nearest(moved)
                .map(|(j, dist)| (moved, index.points[j], dist))
        })
        .collect();
    let mut pairs = Pairs {
        source: Vec::with_capacity(matches.len()),
        target: Vec::with_capacity(matches.len()),
        sq_sum: 0.0,
    };
    for (s, t, dist) in matches.into_iter().flatten() {
        pairs.source.push(s);
        pairs.target.push(t);
        pairs.sq_sum += dist * dist;
    }
    pairs
}

/// Registers `source` onto `target` (both in the same frame), starting
/// from `init`. The result maps source points onto the target.
pub fn icp(
    source: &[Vec3],
    target: &[Vec3],
    init: RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    if target.len() < params.min_pairs || source.len() < params.min_pairs {
        return Err(RegistrationError::InsufficientCorrespondences {
            pairs: source.len().min(target.len()),
            required: params.min_pairs,
        });
    }
    let index = NeighborIndex::new(target, params.correspondence_max_dist);
    let check = |pairs: &Pairs| {
        if pairs.len() < params.min_pairs {
            Err(RegistrationError::InsufficientCorrespondences {
                pairs: pairs.len(),
                required: params.min_pairs,
            })
        } else {
            Ok(())
        }
    };

    let mut transform = init;
    let mut pairs = correspond(source, &index, &transform);
    check(&pairs)?;
    let mut rmse = pairs.rmse();
    let mut history = vec![rmse];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        let step = best_fit_transform(&pairs.source, &pairs.target)?;
        let candidate = step.compose(&transform);
        let next = correspond(source, &index, &candidate);
        check(&next)?;
        let next_rmse = next.rmse();
        if next_rmse > rmse + 1e-12 {
            // a changed correspondence set made things worse; keep the
            // previous estimate, which is a local minimum for this search
            converged = true;
            break;
        }
        let change = rmse - next_rmse;
        transform = candidate;
        pairs = next;
        rmse = next_rmse;
        history.push(rmse);
        if change.abs() < params.convergence_eps {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform,
        rmse,
        iterations,
        pairs_used: pairs.len(),
        converged,
        rmse_history: history,
    })
}

/// RMS nearest-neighbor distance of `t(source)` to `target`, over pairs
/// closer than `max_dist`.
pub fn cloud_rmse(
    source: &[Vec3],
    target: &[Vec3],
    t: &RigidTransform,
    max_dist: f64,
) -> Result<f64, RegistrationError> {
    let index = NeighborIndex::new(target, max_dist);
    let pairs = correspond(source, &index, t);
    if pairs.len() == 0 {
        return Err(RegistrationError::NoPairs);
    }
    Ok(pairs.rmse())
}

/// Replaces the points in each occupied voxel by their centroid. Output
/// order follows the first point seen in each voxel.
pub fn voxel_downsample(points: &[Vec3], voxel: f64) -> Vec<Vec3> {
    let mut slots: HashMap<CellKey, usize> = HashMap::new();
    let mut acc: Vec<(Vec3, usize)> = Vec::new();
    for &p in points {
        let key = NeighborIndex::key(p, voxel);
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push((Vec3::ZERO, 0));
            acc.len() - 1
        });
        acc[slot].0 += p;
        acc[slot].1 += 1;
    }
    acc.into_iter().map(|(sum, n)| sum / n as f64).collect()
}
