//! Shared fixtures for integration tests: simulated corridor sequences with
//! ground truth.

use nalgebra::{Matrix3, Vector3};
use slamesh_core::geometry::{Point3, Pose};
use slamesh_core::io::RawScan;
use slamesh_core::sim::{simulate_scan, BeamPattern, Scene};

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Ground-truth corridor trajectory: 0.5 m steps along the heading, with a
/// slow yaw oscillation bounded well under 1° between frames. The sensor
/// height of 1.7 m puts the floor 0.1 m below a cell boundary in the
/// estimate frame, so floor and vertical structure separate cleanly into
/// cell slabs.
pub fn corridor_trajectory(frames: usize, step: f64, yaw_amp_deg: f64) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(frames);
    let mut position = Point3::new(4.0, 0.0, 1.7);
    for k in 0..frames {
        let yaw = yaw_amp_deg.to_radians() * (k as f64 / 8.0).sin();
        let pose = Pose::new(rot_z(yaw), position);
        poses.push(pose);
        position += pose.rotation * Vector3::new(step, 0.0, 0.0);
    }
    poses
}

pub struct CorridorFixture {
    pub scene: Scene,
    /// World-frame sensor poses used for simulation.
    pub gt_trajectory: Vec<Pose>,
    pub scans: Vec<RawScan>,
    pub pattern: BeamPattern,
}

impl CorridorFixture {
    /// Ground truth in the estimate's frame: first pose at identity.
    pub fn gt_aligned(&self) -> Vec<Pose> {
        slamesh_core::metrics::align_to_first(&self.gt_trajectory)
    }
}

/// Simulated corridor sequence: `frames` scans with 0.5 m inter-frame
/// motion, ≤1° yaw rate, and σ = 0.02 m range noise.
pub fn corridor_sequence(frames: usize, seed: u64) -> CorridorFixture {
    let length = 4.0 + frames as f64 * 0.5 + 16.0;
    let scene = Scene::corridor(length);
    let gt_trajectory = corridor_trajectory(frames, 0.5, 3.0);
    let beams: usize = std::env::var("DIAG_BEAMS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(32);
    let hstep: f64 = std::env::var("DIAG_HSTEP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1.0);
    let pattern = BeamPattern::velodyne_like(beams, hstep);
    let scans = gt_trajectory
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut scan = simulate_scan(&scene, pose, &pattern, seed.wrapping_add(i as u64));
            scan.frame_index = i;
            scan
        })
        .collect();
    CorridorFixture {
        scene,
        gt_trajectory,
        scans,
        pattern,
    }
}

/// The scene's analytic surface cloud, expressed in the first sensor frame
/// (the estimate's world frame).
pub fn corridor_gt_cloud(fixture: &CorridorFixture, spacing: f64) -> Vec<Point3> {
    let world = fixture.scene.surface_cloud(spacing);
    let to_first = fixture.gt_trajectory[0].inverse();
    world.iter().map(|p| to_first.transform_point(p)).collect()
}
