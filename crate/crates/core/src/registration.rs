//! Point-to-mesh registration: location-keyed association with cross-cell
//! query, per-layer constraint combination, and Levenberg–Marquardt on SE3
//! with the analytic Jacobian.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose, Twist};
use crate::gp::{self, GpConfig, Layer, LayerKey};
use crate::io::{self, RawScan};
use crate::map::MeshMap;
use crate::mesh::{self, LayerNormals};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RegistrationConfig {
    /// Cross-cell query length per outer iteration, in cells.
    pub query_schedule: Vec<i64>,
    pub lm_max_iters: usize,
    /// Stop when the parameter update norm falls below this.
    pub lm_tolerance: f64,
    /// Combine correspondences per layer before solving.
    pub combine: bool,
    pub sigma_match_sq: f64,
    /// Weight each combined constraint by its correspondence count.
    pub count_weighting: bool,
    /// Optional Huber loss scale in meters.
    pub huber_scale: Option<f64>,
    /// Query length for the one retry after an empty association.
    pub fallback_query_length: i64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            query_schedule: vec![2, 0],
            lm_max_iters: 20,
            lm_tolerance: 1e-6,
            combine: true,
            sigma_match_sq: 0.5,
            count_weighting: false,
            huber_scale: None,
            fallback_query_length: 3,
        }
    }
}

/// A scan vertex paired with a map vertex and its smoothed normal.
#[derive(Clone, Debug)]
pub struct Correspondence {
    /// Reconstructed scan vertex, world frame, before the correction.
    pub scan_point: Point3,
    pub map_point: Point3,
    /// Unit normal at the map vertex, oriented toward the sensor.
    pub normal: Vector3<f64>,
    /// Scan layer this correspondence belongs to.
    pub layer_id: LayerKey,
}

/// Signed point-to-mesh distance `n̄ᵀ(T·v_p − v_q)` in meters.
pub fn residual(c: &Correspondence, pose: &Pose) -> f64 {
    c.normal.dot(&(pose.transform_point(&c.scan_point) - c.map_point))
}

/// Derivative of the residual w.r.t. a left-multiplied twist, ordered
/// (rotation xyz, translation xyz): `[−n̄ᵀ·(R·v_p + t)ₓ , n̄ᵀ]`.
pub fn residual_jacobian(c: &Correspondence, pose: &Pose) -> Vector6<f64> {
    let x = pose.transform_point(&c.scan_point);
    let rot = -c.normal.cross(&x);
    Vector6::new(rot.x, rot.y, rot.z, c.normal.x, c.normal.y, c.normal.z)
}

/// One layer's correspondences reduced to a single averaged constraint.
///
/// Carries the sufficient statistics to evaluate the exact mean residual
/// and mean Jacobian of its members at any pose.
#[derive(Clone, Debug)]
pub struct CombinedConstraint {
    pub layer_id: LayerKey,
    pub count: usize,
    pub mean_scan_point: Vector3<f64>,
    pub mean_normal: Vector3<f64>,
    /// Mean of `n̄ᵀ v_q`.
    pub mean_normal_dot_map: f64,
    /// Mean of the outer product `n̄ · v_pᵀ`.
    cross_stat: Matrix3<f64>,
}

impl CombinedConstraint {
    fn evaluate(&self, pose: &Pose) -> (f64, Vector6<f64>) {
        let r = &pose.rotation;
        let t = &pose.translation;
        // mean(n̄ᵀ R v_p) = ⟨R, mean(n̄ v_pᵀ)⟩_F
        let e = r.dot(&self.cross_stat) + self.mean_normal.dot(t) - self.mean_normal_dot_map;
        // mean(n̄ × R v_p) from the antisymmetric part of C·Rᵀ.
        let b = self.cross_stat * r.transpose();
        let w = Vector3::new(
            b[(1, 2)] - b[(2, 1)],
            b[(2, 0)] - b[(0, 2)],
            b[(0, 1)] - b[(1, 0)],
        );
        let rot = -(w + self.mean_normal.cross(t));
        (
            e,
            Vector6::new(
                rot.x,
                rot.y,
                rot.z,
                self.mean_normal.x,
                self.mean_normal.y,
                self.mean_normal.z,
            ),
        )
    }
}

/// Averages all correspondences of each layer into one constraint.
pub fn combine_constraints(corrs: &[Correspondence]) -> Vec<CombinedConstraint> {
    struct Acc {
        n: usize,
        sum_vp: Vector3<f64>,
        sum_normal: Vector3<f64>,
        sum_ndotq: f64,
        sum_cross: Matrix3<f64>,
    }
    let mut groups: BTreeMap<LayerKey, Acc> = BTreeMap::new();
    for c in corrs {
        let acc = groups.entry(c.layer_id).or_insert_with(|| Acc {
            n: 0,
            sum_vp: Vector3::zeros(),
            sum_normal: Vector3::zeros(),
            sum_ndotq: 0.0,
            sum_cross: Matrix3::zeros(),
        });
        acc.n += 1;
        acc.sum_vp += c.scan_point;
        acc.sum_normal += c.normal;
        acc.sum_ndotq += c.normal.dot(&c.map_point);
        acc.sum_cross += c.normal * c.scan_point.transpose();
    }
    groups
        .into_iter()
        .map(|(layer_id, acc)| {
            let inv = 1.0 / acc.n as f64;
            CombinedConstraint {
                layer_id,
                count: acc.n,
                mean_scan_point: acc.sum_vp * inv,
                mean_normal: acc.sum_normal * inv,
                mean_normal_dot_map: acc.sum_ndotq * inv,
                cross_stat: acc.sum_cross * inv,
            }
        })
        .collect()
}

/// A scalar least-squares row the LM solver can evaluate at any pose.
pub trait Constraint: Sync {
    fn evaluate(&self, pose: &Pose) -> (f64, Vector6<f64>);
    /// Correspondence count backing this row (for optional weighting).
    fn count(&self) -> f64 {
        1.0
    }
}

impl Constraint for Correspondence {
    fn evaluate(&self, pose: &Pose) -> (f64, Vector6<f64>) {
        (residual(self, pose), residual_jacobian(self, pose))
    }
}

impl Constraint for CombinedConstraint {
    fn evaluate(&self, pose: &Pose) -> (f64, Vector6<f64>) {
        CombinedConstraint::evaluate(self, pose)
    }
    fn count(&self) -> f64 {
        self.count as f64
    }
}

#[derive(Clone, Debug, Default)]
pub struct LmStats {
    pub iterations: usize,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Minimizes the sum of squared constraint residuals over SE3 by damped
/// normal equations. λ starts at 1e-4, shrinks ×0.1 on accepted steps and
/// grows ×10 on rejected ones.
pub fn solve_lm<C: Constraint>(
    constraints: &[C],
    t_init: &Pose,
    cfg: &RegistrationConfig,
) -> Result<(Pose, LmStats)> {
    if constraints.len() < 6 {
        return Err(Error::DegenerateProblem(format!(
            "{} constraints (< 6)",
            constraints.len()
        )));
    }

    let weight = |c: &C, e: f64| -> f64 {
        let mut w = if cfg.count_weighting { c.count() } else { 1.0 };
        if let Some(scale) = cfg.huber_scale {
            if e.abs() > scale {
                w *= scale / e.abs();
            }
        }
        w
    };

    let linearize = |pose: &Pose| -> (Matrix6<f64>, Vector6<f64>, f64) {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        let mut cost = 0.0;
        for c in constraints {
            let (e, j) = c.evaluate(pose);
            let w = weight(c, e);
            h.syger(w, &j, &j, 1.0);
            g += j * (w * e);
            cost += w * e * e;
        }
        h.fill_upper_triangle_with_lower_triangle();
        (h, g, cost)
    };

    let cost_at = |pose: &Pose| -> f64 {
        constraints
            .iter()
            .map(|c| {
                let (e, _) = c.evaluate(pose);
                weight(c, e) * e * e
            })
            .sum()
    };

    let mut pose = *t_init;
    let mut lambda = 1e-4;
    let mut stats = LmStats::default();
    let mut checked_rank = false;

    let mut iter = 0;
    let mut converged = false;
    'outer: while iter < cfg.lm_max_iters && !converged {
        let (h, g, cost) = linearize(&pose);
        if stats.cost_history.is_empty() {
            stats.cost_history.push(cost);
        }
        if !checked_rank {
            let eig = h.symmetric_eigenvalues();
            let max_eig = eig.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let min_eig = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
            if !(max_eig > 0.0) || min_eig <= 1e-9 * max_eig {
                return Err(Error::DegenerateProblem(format!(
                    "rank-deficient normal matrix (eig {min_eig:.3e} vs {max_eig:.3e})"
                )));
            }
            checked_rank = true;
        }

        // Damping attempts against the same linearization until a step is
        // accepted or λ saturates.
        loop {
            if iter >= cfg.lm_max_iters {
                break 'outer;
            }
            iter += 1;
            let mut damped = h;
            for d in 0..6 {
                damped[(d, d)] += lambda * h[(d, d)];
            }
            let delta = match damped.cholesky() {
                Some(chol) => chol.solve(&(-g)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        return Err(Error::DegenerateProblem(
                            "damping saturated without a solvable system".into(),
                        ));
                    }
                    continue;
                }
            };
            let twist = Twist::new(
                Vector3::new(delta[0], delta[1], delta[2]),
                Vector3::new(delta[3], delta[4], delta[5]),
            );
            let candidate = Pose::exp(&twist).compose(&pose);
            let new_cost = cost_at(&candidate);
            if new_cost <= cost {
                pose = candidate;
                lambda = (lambda * 0.1).max(1e-12);
                stats.cost_history.push(new_cost);
                if twist.norm() < cfg.lm_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break 'outer;
            }
        }
    }

    stats.iterations = iter;
    stats.final_cost = *stats.cost_history.last().unwrap_or(&0.0);
    if pose.ortho_drift() > 1e-9 {
        pose.reorthonormalize();
    }
    Ok((pose, stats))
}

/// Finds, for every valid scan vertex, the map vertex at the identical grid
/// location in the same cell or in cells offset up to ±`b` along the
/// prediction axis. Among candidate layers the nearest along the prediction
/// axis wins. The map vertex must be valid and carry at least one valid
/// incident face; its smoothed normal is oriented toward `sensor`.
pub fn associate(
    scan_layers: &[Layer],
    map: &MeshMap,
    b: i64,
    cfg: &RegistrationConfig,
    sensor: &Point3,
) -> Result<Vec<Correspondence>> {
    // Offsets ordered 0, +1, −1, ... so the nearest cell wins exact ties.
    let mut offsets = vec![0i64];
    for k in 1..=b {
        offsets.push(k);
        offsets.push(-k);
    }

    let mut wanted: BTreeSet<LayerKey> = BTreeSet::new();
    for layer in scan_layers {
        for &k in &offsets {
            wanted.insert((layer.cell.offset(layer.axis, k), layer.axis));
        }
    }
    let present: Vec<LayerKey> = wanted
        .into_iter()
        .filter(|key| map.layer(key).is_some())
        .collect();
    let normal_cache: HashMap<LayerKey, LayerNormals> = present
        .par_iter()
        .map(|key| {
            let layer = map.layer(key).expect("filtered to present keys");
            (*key, mesh::layer_normals(layer, cfg.sigma_match_sq))
        })
        .collect();

    let per_layer: Vec<Vec<Correspondence>> = scan_layers
        .par_iter()
        .map(|scan_layer| {
            let mut out = Vec::new();
            let axis = scan_layer.axis;
            for j in 0..scan_layer.grid.len() {
                if !scan_layer.is_valid(j, cfg.sigma_match_sq) {
                    continue;
                }
                let scan_pred = scan_layer.predictions[j];
                let mut best: Option<(f64, &Layer, &LayerNormals)> = None;
                for &k in &offsets {
                    let key = (scan_layer.cell.offset(axis, k), axis);
                    let Some(normals) = normal_cache.get(&key) else {
                        continue;
                    };
                    let map_layer = map.layer(&key).expect("cached layers exist");
                    if !map_layer.is_valid(j, cfg.sigma_match_sq) || normals.counts[j] == 0 {
                        continue;
                    }
                    let dist = (scan_pred - map_layer.predictions[j]).abs();
                    if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
                        best = Some((dist, map_layer, normals));
                    }
                }
                if let Some((_, map_layer, normals)) = best {
                    let normal = mesh::smoothed_normal(map_layer, j, normals, sensor)
                        .expect("candidates have incident faces");
                    out.push(Correspondence {
                        scan_point: scan_layer.vertex_position(j),
                        map_point: map_layer.vertex_position(j),
                        normal,
                        layer_id: scan_layer.key(),
                    });
                }
            }
            out
        })
        .collect();

    let corrs: Vec<Correspondence> = per_layer.into_iter().flatten().collect();
    if corrs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(corrs)
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct OuterIterationStats {
    pub query_length: i64,
    pub raw_correspondences: usize,
    pub combined_constraints: usize,
    pub lm_iterations: usize,
    pub final_cost: f64,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct RegistrationStats {
    pub iterations: Vec<OuterIterationStats>,
    pub reconstruct_ms: f64,
    pub associate_ms: f64,
    pub solve_ms: f64,
}

impl RegistrationStats {
    pub fn raw_correspondences(&self) -> usize {
        self.iterations.last().map_or(0, |s| s.raw_correspondences)
    }
    pub fn combined_constraints(&self) -> usize {
        self.iterations.last().map_or(0, |s| s.combined_constraints)
    }
}

/// Result of registering one scan, including the last reconstruction so the
/// caller can reuse it when no point changed cells.
#[derive(Clone, Debug)]
pub struct RegistrationOutcome {
    pub pose: Pose,
    pub stats: RegistrationStats,
    pub last_layers: Vec<Layer>,
    /// Cell of each scan point at the pose the last reconstruction used.
    pub last_point_cells: Vec<crate::io::CellIndex>,
    /// Correction solved after the last reconstruction.
    pub last_correction: Pose,
}

/// Aligns a scan to the map: per entry of the query schedule, transform the
/// scan by the current estimate, reconstruct it, associate with the given
/// query length, optionally combine, and solve. An empty association is
/// retried once at the fallback query length before reporting `NoOverlap`.
pub fn register_scan(
    scan: &RawScan,
    map: &MeshMap,
    t_guess: &Pose,
    cfg: &RegistrationConfig,
    gp_cfg: &GpConfig,
) -> Result<RegistrationOutcome> {
    if map.is_empty() {
        return Err(Error::NoOverlap);
    }
    if cfg.query_schedule.is_empty() {
        return Err(Error::InvalidParam("query schedule is empty".into()));
    }

    let cell_size = map.cell_size;
    let mut pose = *t_guess;
    let mut stats = RegistrationStats::default();
    let mut last_layers = Vec::new();
    let mut last_point_cells = Vec::new();
    let mut last_correction = Pose::identity();

    for &b in &cfg.query_schedule {
        let t0 = Instant::now();
        let world: Vec<Point3> = scan.points.iter().map(|p| pose.transform_point(p)).collect();
        let buckets = io::assign_to_cells(&world, cell_size)?;
        let scan_layers = gp::reconstruct_cells(&buckets, gp_cfg, cell_size)?;
        stats.reconstruct_ms += t0.elapsed().as_secs_f64() * 1e3;
        if scan_layers.is_empty() {
            return Err(Error::NoOverlap);
        }

        let t1 = Instant::now();
        let corrs = match associate(&scan_layers, map, b, cfg, &pose.translation) {
            Ok(c) => c,
            Err(Error::NoOverlap) => {
                associate(&scan_layers, map, cfg.fallback_query_length, cfg, &pose.translation)?
            }
            Err(e) => return Err(e),
        };
        stats.associate_ms += t1.elapsed().as_secs_f64() * 1e3;

        let t2 = Instant::now();
        let (correction, lm, combined_count) = if cfg.combine {
            let combined = combine_constraints(&corrs);
            let n = combined.len();
            let (p, s) = solve_lm(&combined, &Pose::identity(), cfg)?;
            (p, s, n)
        } else {
            let (p, s) = solve_lm(&corrs, &Pose::identity(), cfg)?;
            (p, s, corrs.len())
        };
        stats.solve_ms += t2.elapsed().as_secs_f64() * 1e3;

        stats.iterations.push(OuterIterationStats {
            query_length: b,
            raw_correspondences: corrs.len(),
            combined_constraints: combined_count,
            lm_iterations: lm.iterations,
            final_cost: lm.final_cost,
        });

        pose = correction.compose(&pose);
        last_correction = correction;
        last_point_cells = world
            .iter()
            .map(|p| crate::io::CellIndex::of_point(p, cell_size))
            .collect();
        last_layers = scan_layers;
    }

    Ok(RegistrationOutcome {
        pose,
        stats,
        last_layers,
        last_point_cells,
        last_correction,
    })
}
