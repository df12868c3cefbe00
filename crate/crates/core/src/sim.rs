//! Synthetic scenes and a ray-cast LiDAR simulator for ground-truth tests.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Point3, Pose};
use crate::io::RawScan;

const RAY_EPS: f64 = 1e-9;

/// Finite rectangular patch of a plane.
#[derive(Clone, Debug)]
pub struct RectPlane {
    pub center: Point3,
    pub normal: Vector3<f64>,
    /// In-plane direction of the first extent, unit length.
    pub u_axis: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
}

impl RectPlane {
    pub fn new(
        center: Point3,
        normal: Vector3<f64>,
        u_axis: Vector3<f64>,
        half_u: f64,
        half_v: f64,
    ) -> Self {
        RectPlane {
            center,
            normal: normal.normalize(),
            u_axis: u_axis.normalize(),
            half_u,
            half_v,
        }
    }

    fn v_axis(&self) -> Vector3<f64> {
        self.normal.cross(&self.u_axis)
    }

    fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let denom = dir.dot(&self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - origin).dot(&self.normal) / denom;
        if t <= RAY_EPS {
            return None;
        }
        let p = origin + dir * t;
        let rel = p - self.center;
        if rel.dot(&self.u_axis).abs() <= self.half_u && rel.dot(&self.v_axis()).abs() <= self.half_v
        {
            Some(t)
        } else {
            None
        }
    }

    /// Uniform grid of surface points with the given spacing.
    pub fn surface_points(&self, spacing: f64) -> Vec<Point3> {
        let v_axis = self.v_axis();
        let nu = ((2.0 * self.half_u / spacing).ceil() as usize).max(1);
        let nv = ((2.0 * self.half_v / spacing).ceil() as usize).max(1);
        let mut out = Vec::with_capacity((nu + 1) * (nv + 1));
        for iu in 0..=nu {
            for iv in 0..=nv {
                let du = -self.half_u + 2.0 * self.half_u * iu as f64 / nu as f64;
                let dv = -self.half_v + 2.0 * self.half_v * iv as f64 / nv as f64;
                out.push(self.center + self.u_axis * du + v_axis * dv);
            }
        }
        out
    }
}

/// Axis-aligned box obstacle.
#[derive(Clone, Debug)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (t0, t1) = {
                let t0 = (self.min[a] - origin[a]) * inv;
                let t1 = (self.max[a] - origin[a]) * inv;
                if t0 <= t1 {
                    (t0, t1)
                } else {
                    (t1, t0)
                }
            };
            t_min = t_min.max(t0);
            t_max = t_max.min(t1);
            if t_min > t_max {
                return None;
            }
        }
        if t_min > RAY_EPS {
            Some(t_min)
        } else if t_max > RAY_EPS {
            // Origin inside the box: the exit face is the visible surface.
            Some(t_max)
        } else {
            None
        }
    }

    /// Surface points on all six faces with the given spacing.
    pub fn surface_points(&self, spacing: f64) -> Vec<Point3> {
        let c = (self.min + self.max) * 0.5;
        let h = (self.max - self.min) * 0.5;
        let faces = [
            RectPlane::new(
                Point3::new(self.min.x, c.y, c.z),
                -Vector3::x(),
                Vector3::y(),
                h.y,
                h.z,
            ),
            RectPlane::new(
                Point3::new(self.max.x, c.y, c.z),
                Vector3::x(),
                Vector3::y(),
                h.y,
                h.z,
            ),
            RectPlane::new(
                Point3::new(c.x, self.min.y, c.z),
                -Vector3::y(),
                Vector3::z(),
                h.z,
                h.x,
            ),
            RectPlane::new(
                Point3::new(c.x, self.max.y, c.z),
                Vector3::y(),
                Vector3::z(),
                h.z,
                h.x,
            ),
            RectPlane::new(
                Point3::new(c.x, c.y, self.min.z),
                -Vector3::z(),
                Vector3::x(),
                h.x,
                h.y,
            ),
            RectPlane::new(
                Point3::new(c.x, c.y, self.max.z),
                Vector3::z(),
                Vector3::x(),
                h.x,
                h.y,
            ),
        ];
        faces.iter().flat_map(|f| f.surface_points(spacing)).collect()
    }
}

#[derive(Clone, Debug)]
pub enum Primitive {
    Rect(RectPlane),
    Box(Aabb),
}

impl Primitive {
    fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Rect(r) => r.intersect(origin, dir),
            Primitive::Box(b) => b.intersect(origin, dir),
        }
    }

    pub fn surface_points(&self, spacing: f64) -> Vec<Point3> {
        match self {
            Primitive::Rect(r) => r.surface_points(spacing),
            Primitive::Box(b) => b.surface_points(spacing),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

impl Scene {
    /// Distance to the nearest primitive along the ray, if any.
    pub fn raycast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for prim in &self.primitives {
            if let Some(t) = prim.intersect(origin, dir) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    /// A straight corridor along +x: floor, two walls, end caps, and
    /// alternating barrier fins that pin down the along-corridor direction.
    /// All surfaces project single-valued onto some axis, and every surface
    /// is observable from a sweep along the centerline.
    pub fn corridor(length: f64) -> Scene {
        let half_len = length / 2.0;
        let width = 16.0;
        let wall_h = 1.6;
        let mut primitives = vec![
            // Floor.
            Primitive::Rect(RectPlane::new(
                Point3::new(half_len, 0.0, 0.0),
                Vector3::z(),
                Vector3::x(),
                half_len,
                width / 2.0,
            )),
            // Side walls.
            Primitive::Rect(RectPlane::new(
                Point3::new(half_len, width / 2.0, wall_h / 2.0),
                -Vector3::y(),
                Vector3::x(),
                half_len,
                wall_h / 2.0,
            )),
            Primitive::Rect(RectPlane::new(
                Point3::new(half_len, -width / 2.0, wall_h / 2.0),
                Vector3::y(),
                Vector3::x(),
                half_len,
                wall_h / 2.0,
            )),
            // End caps.
            Primitive::Rect(RectPlane::new(
                Point3::new(0.0, 0.0, wall_h / 2.0),
                Vector3::x(),
                Vector3::y(),
                width / 2.0,
                wall_h / 2.0,
            )),
            Primitive::Rect(RectPlane::new(
                Point3::new(length, 0.0, wall_h / 2.0),
                -Vector3::x(),
                Vector3::y(),
                width / 2.0,
                wall_h / 2.0,
            )),
        ];
        // Thin barrier fins perpendicular to the corridor every 6 m,
        // alternating sides, standing clear of walls and centerline.
        let mut x = 6.0;
        let mut side = 1.0;
        while x < length - 4.0 {
            let y_center = side * 4.4;
            primitives.push(Primitive::Rect(RectPlane::new(
                Point3::new(x, y_center, wall_h / 2.0),
                Vector3::x(),
                Vector3::y(),
                0.8,
                wall_h / 2.0,
            )));
            side = -side;
            x += 6.0;
        }
        Scene { primitives }
    }

    /// A walled yard with scattered boxes of varying sizes.
    pub fn boxes() -> Scene {
        let size = 40.0;
        let half = size / 2.0;
        let wall_h = 3.0;
        let mut primitives = vec![Primitive::Rect(RectPlane::new(
            Point3::new(0.0, 0.0, 0.0),
            Vector3::z(),
            Vector3::x(),
            half,
            half,
        ))];
        for (nx, ny) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let n = Vector3::new(nx, ny, 0.0);
            let u = Vector3::new(-ny, nx, 0.0);
            primitives.push(Primitive::Rect(RectPlane::new(
                Point3::new(nx * half, ny * half, wall_h / 2.0),
                -n,
                u,
                half,
                wall_h / 2.0,
            )));
        }
        let specs = [
            (-12.0, -10.0, 1.5, 2.0),
            (-5.0, 8.0, 2.0, 1.2),
            (3.0, -6.0, 1.0, 2.5),
            (9.0, 5.0, 2.5, 1.8),
            (14.0, -12.0, 1.2, 1.0),
            (-14.0, 12.0, 1.8, 2.2),
            (0.0, 14.0, 1.4, 1.6),
            (7.0, -14.0, 2.2, 1.4),
        ];
        for (cx, cy, half_side, height) in specs {
            primitives.push(Primitive::Box(Aabb {
                min: Point3::new(cx - half_side, cy - half_side, 0.0),
                max: Point3::new(cx + half_side, cy + half_side, height),
            }));
        }
        Scene { primitives }
    }

    /// Flat approach, a 15° ramp, and an upper plateau between side walls.
    pub fn ramp() -> Scene {
        let width = 10.0;
        let angle = 15f64.to_radians();
        let ramp_len = 10.0;
        let rise = ramp_len * angle.tan();
        let mut primitives = vec![
            Primitive::Rect(RectPlane::new(
                Point3::new(5.0, 0.0, 0.0),
                Vector3::z(),
                Vector3::x(),
                5.0,
                width / 2.0,
            )),
            Primitive::Rect(RectPlane::new(
                Point3::new(10.0 + ramp_len / 2.0, 0.0, rise / 2.0),
                Vector3::new(-angle.sin(), 0.0, angle.cos()),
                Vector3::new(angle.cos(), 0.0, angle.sin()),
                ramp_len / 2.0 / angle.cos(),
                width / 2.0,
            )),
            Primitive::Rect(RectPlane::new(
                Point3::new(25.0, 0.0, rise),
                Vector3::z(),
                Vector3::x(),
                5.0,
                width / 2.0,
            )),
            Primitive::Rect(RectPlane::new(
                Point3::new(30.0, 0.0, rise + 1.5),
                -Vector3::x(),
                Vector3::y(),
                width / 2.0,
                1.5,
            )),
        ];
        for side in [-1.0, 1.0] {
            primitives.push(Primitive::Rect(RectPlane::new(
                Point3::new(15.0, side * width / 2.0, rise / 2.0 + 1.0),
                Vector3::new(0.0, -side, 0.0),
                Vector3::x(),
                15.0,
                rise / 2.0 + 1.0,
            )));
        }
        Scene { primitives }
    }

    /// Uniform analytic samples of every primitive surface.
    pub fn surface_cloud(&self, spacing: f64) -> Vec<Point3> {
        self.primitives
            .iter()
            .flat_map(|p| p.surface_points(spacing))
            .collect()
    }

    /// Closed axis-aligned room; every ray from inside hits a wall.
    pub fn closed_box(half: f64) -> Scene {
        Scene {
            primitives: vec![Primitive::Box(Aabb {
                min: Point3::new(-half, -half, -half),
                max: Point3::new(half, half, half),
            })],
        }
    }

    /// Dense noise-free surface cloud of everything visible from the given
    /// sensor poses (union of ideal scans, voxel-thinned).
    pub fn visible_surface_cloud(
        &self,
        poses: &[Pose],
        pattern: &BeamPattern,
        spacing: f64,
    ) -> Vec<Point3> {
        let ideal = BeamPattern {
            noise_sigma: 0.0,
            ..pattern.clone()
        };
        let mut all = Vec::new();
        for pose in poses {
            let scan = simulate_scan(self, pose, &ideal, 0);
            all.extend(scan.points.iter().map(|p| pose.transform_point(p)));
        }
        let scan = RawScan::new(all);
        crate::io::downsample(&scan, spacing)
            .expect("positive spacing")
            .points
    }
}

/// LiDAR beam geometry and range noise.
#[derive(Clone, Debug)]
pub struct BeamPattern {
    /// Vertical (elevation) angles in radians, sorted ascending.
    pub vertical_angles: Vec<f64>,
    /// Horizontal angular step in radians.
    pub horizontal_step: f64,
    pub max_range: f64,
    /// Std-dev of Gaussian range noise in meters.
    pub noise_sigma: f64,
}

impl Default for BeamPattern {
    fn default() -> Self {
        // 64 beams evenly spaced in [−24.8°, +2°], 0.2° horizontal steps.
        BeamPattern::velodyne_like(64, 0.2)
    }
}

impl BeamPattern {
    pub fn velodyne_like(beams: usize, horizontal_step_deg: f64) -> Self {
        let lo = -24.8f64.to_radians();
        let hi = 2.0f64.to_radians();
        let vertical_angles = (0..beams)
            .map(|i| lo + (hi - lo) * i as f64 / (beams - 1).max(1) as f64)
            .collect();
        BeamPattern {
            vertical_angles,
            horizontal_step: horizontal_step_deg.to_radians(),
            max_range: 100.0,
            noise_sigma: 0.02,
        }
    }

    pub fn columns(&self) -> usize {
        (std::f64::consts::TAU / self.horizontal_step).round() as usize
    }

    pub fn ray_count(&self) -> usize {
        self.vertical_angles.len() * self.columns()
    }
}

/// Casts the full sweep from `sensor_pose` and returns hits in the sensor
/// frame, ranges perturbed by seeded Gaussian noise. Misses are omitted.
/// Bitwise deterministic for a fixed seed.
pub fn simulate_scan(scene: &Scene, sensor_pose: &Pose, pattern: &BeamPattern, seed: u64) -> RawScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = if pattern.noise_sigma > 0.0 {
        Some(Normal::new(0.0, pattern.noise_sigma).expect("valid sigma"))
    } else {
        None
    };
    let origin = sensor_pose.translation;
    let columns = pattern.columns();
    let mut points = Vec::new();
    for &elev in &pattern.vertical_angles {
        let (se, ce) = elev.sin_cos();
        for col in 0..columns {
            let azim = col as f64 * pattern.horizontal_step;
            let (sa, ca) = azim.sin_cos();
            let dir_local = Vector3::new(ce * ca, ce * sa, se);
            let dir_world = sensor_pose.rotation * dir_local;
            if let Some(t) = scene.raycast(&origin, &dir_world) {
                if t <= pattern.max_range {
                    let r = match &normal {
                        Some(n) => t + n.sample(&mut rng),
                        None => t,
                    };
                    points.push(dir_local * r);
                }
            }
        }
    }
    RawScan::new(points)
}
