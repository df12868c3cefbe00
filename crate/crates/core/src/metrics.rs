//! Trajectory and mesh-quality metrics: segment-wise relative pose error,
//! absolute trajectory error, mesh sampling, and precision/recall/F1.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};
use crate::mesh::TriangleMesh;

#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct RpeResult {
    pub translation_pct: f64,
    pub rotation_deg_per_100m: f64,
    /// Number of (start, length) segments that entered the means.
    pub segments: usize,
}

/// Standard KITTI-style segment lengths, in meters.
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// Desk-scale lengths for short synthetic trajectories.
pub const DESK_LENGTHS: [f64; 8] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0];

/// Segment-wise relative pose error over the given ground-truth arc lengths.
///
/// For every start frame and every length, the first frame at least that far
/// along the ground-truth path closes a segment; the error pose between the
/// estimated and ground-truth relative motions contributes its translation
/// norm per meter (reported in %) and rotation angle per meter (reported in
/// degrees per 100 m).
pub fn relative_pose_error(est: &[Pose], gt: &[Pose], lengths: &[f64]) -> Result<RpeResult> {
    if est.len() != gt.len() {
        return Err(Error::TrajectoryMismatch(format!(
            "estimated {} poses vs ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    if gt.len() < 2 {
        return Err(Error::TrajectoryMismatch(
            "trajectories must have at least 2 poses".into(),
        ));
    }

    let n = gt.len();
    let mut dist = vec![0.0f64; n];
    for i in 1..n {
        dist[i] = dist[i - 1] + (gt[i].translation - gt[i - 1].translation).norm();
    }

    let mut t_sum = 0.0;
    let mut r_sum = 0.0;
    let mut segments = 0usize;
    for start in 0..n {
        for &len in lengths {
            let target = dist[start] + len;
            let end = match dist[start..].iter().position(|&d| d >= target) {
                Some(offset) => start + offset,
                None => continue,
            };
            let rel_gt = gt[start].inverse().compose(&gt[end]);
            let rel_est = est[start].inverse().compose(&est[end]);
            segments += 1;
            // Identical relative motions contribute exactly zero; computing
            // the error pose would manufacture rounding-level rotation.
            if rel_gt.rotation == rel_est.rotation
                && rel_gt.translation == rel_est.translation
            {
                continue;
            }
            let err = rel_gt.inverse().compose(&rel_est);
            t_sum += err.translation.norm() / len;
            r_sum += err.rotation_angle() / len;
        }
    }
    if segments == 0 {
        return Ok(RpeResult::default());
    }
    let inv = 1.0 / segments as f64;
    Ok(RpeResult {
        translation_pct: t_sum * inv * 100.0,
        rotation_deg_per_100m: (r_sum * inv).to_degrees() * 100.0,
        segments,
    })
}

/// Re-expresses a trajectory relative to its first pose, so it starts at
/// the identity (the KITTI ground-truth convention).
pub fn align_to_first(poses: &[Pose]) -> Vec<Pose> {
    match poses.first() {
        None => Vec::new(),
        Some(first) => {
            let inv = first.inverse();
            poses.iter().map(|p| inv.compose(p)).collect()
        }
    }
}

/// RMS of translational differences between aligned-origin trajectories.
pub fn ate_rms(est: &[Pose], gt: &[Pose]) -> Result<f64> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(Error::TrajectoryMismatch(format!(
            "estimated {} poses vs ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    let sum: f64 = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (e.translation - g.translation).norm_squared())
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

/// Uniform surface samples of a mesh at the given density (points per m²).
///
/// Per face the expected count `area × density` is realized as its floor
/// plus a Bernoulli draw on the remainder; points are placed by uniform
/// barycentric sampling. Deterministic per seed.
pub fn sample_mesh(mesh: &TriangleMesh, density: f64, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for f in &mesh.faces {
        let v0 = mesh.vertices[f[0] as usize];
        let v1 = mesh.vertices[f[1] as usize];
        let v2 = mesh.vertices[f[2] as usize];
        let e1 = v1 - v0;
        let e2 = v2 - v0;
        let area = e1.cross(&e2).norm() * 0.5;
        if area <= 0.0 {
            continue;
        }
        let expected = area * density;
        let mut count = expected.floor() as usize;
        if rng.random::<f64>() < expected - expected.floor() {
            count += 1;
        }
        for _ in 0..count {
            let mut r1: f64 = rng.random();
            let mut r2: f64 = rng.random();
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            out.push(v0 + e1 * r1 + e2 * r2);
        }
    }
    out
}

/// Exact threshold-distance queries via a uniform grid of bucket size `d`.
struct NeighborGrid<'a> {
    points: &'a [Point3],
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
    d: f64,
}

impl<'a> NeighborGrid<'a> {
    fn build(points: &'a [Point3], d: f64) -> Self {
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = (
                (p.x / d).floor() as i64,
                (p.y / d).floor() as i64,
                (p.z / d).floor() as i64,
            );
            buckets.entry(key).or_default().push(i as u32);
        }
        NeighborGrid { points, buckets, d }
    }

    /// True when any indexed point lies within `d` of `p`.
    fn has_within(&self, p: &Point3) -> bool {
        let d2 = self.d * self.d;
        let kx = (p.x / self.d).floor() as i64;
        let ky = (p.y / self.d).floor() as i64;
        let kz = (p.z / self.d).floor() as i64;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &i in ids {
                            if (self.points[i as usize] - p).norm_squared() <= d2 {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct PrfResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub samples: usize,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Mesh accuracy/completeness against a ground-truth cloud at threshold `d`:
/// precision is the share of mesh samples within `d` of the ground truth,
/// recall the share of ground-truth points within `d` of the samples, and F1
/// their harmonic mean. All in percent. Nearest-neighbor tests are exact.
pub fn mesh_prf(
    mesh: &TriangleMesh,
    gt_cloud: &[Point3],
    d: f64,
    density: f64,
    seed: u64,
) -> Result<PrfResult> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyInput("mesh has no faces".into()));
    }
    if gt_cloud.is_empty() {
        return Err(Error::EmptyInput("ground-truth cloud is empty".into()));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidParam(format!("threshold d must be > 0, got {d}")));
    }
    let samples = sample_mesh(mesh, density, seed);
    if samples.is_empty() {
        return Err(Error::EmptyInput(
            "mesh sampling produced no points (density too low?)".into(),
        ));
    }

    let gt_grid = NeighborGrid::build(gt_cloud, d);
    let near_gt = samples
        .par_iter()
        .map(|p| gt_grid.has_within(p) as usize)
        .sum::<usize>();
    let precision = 100.0 * near_gt as f64 / samples.len() as f64;

    let sample_grid = NeighborGrid::build(&samples, d);
    let near_mesh = gt_cloud
        .par_iter()
        .map(|p| sample_grid.has_within(p) as usize)
        .sum::<usize>();
    let recall = 100.0 * near_mesh as f64 / gt_cloud.len() as f64;

    Ok(PrfResult {
        precision,
        recall,
        f1: f1_score(precision, recall),
        samples: samples.len(),
    })
}
