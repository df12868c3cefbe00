//! Trajectory files: KITTI 12-number pose lines, optional TUM format.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// One line per pose: the 12 row-major entries of the upper 3×4 of `[R|t]`,
/// space-separated. Values use the shortest decimal form that parses back
/// to the identical double.
pub fn write_trajectory_kitti(poses: &[Pose], path: &Path) -> Result<()> {
    let mut out = String::new();
    for pose in poses {
        let r = &pose.rotation;
        let t = &pose.translation;
        let row = [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_kitti(path: &Path) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        if vals.len() != 12 {
            return Err(Error::Format(format!(
                "{}:{}: expected 12 values, got {}",
                path.display(),
                lineno + 1,
                vals.len()
            )));
        }
        let rotation = Matrix3::new(
            vals[0], vals[1], vals[2], //
            vals[4], vals[5], vals[6], //
            vals[8], vals[9], vals[10],
        );
        let translation = nalgebra::Vector3::new(vals[3], vals[7], vals[11]);
        let mut pose = Pose::new(rotation, translation);
        if pose.ortho_drift() > 1e-9 {
            pose.reorthonormalize();
        }
        poses.push(pose);
    }
    Ok(poses)
}

/// TUM format: `timestamp tx ty tz qx qy qz qw`, one pose per line.
/// Frame index is used as the timestamp when none is supplied.
pub fn write_trajectory_tum(
    poses: &[Pose],
    timestamps: Option<&[f64]>,
    path: &Path,
) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        let stamp = timestamps
            .and_then(|ts| ts.get(i).copied())
            .unwrap_or(i as f64);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            pose.rotation,
        ));
        let t = &pose.translation;
        writeln!(
            out,
            "{stamp} {} {} {} {} {} {} {}",
            t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )
        .expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn rot_z(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn identity_line_is_plain() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        write_trajectory_kitti(&[Pose::identity()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "1 0 0 0 0 1 0 0 0 0 1 0");
    }

    #[test]
    fn pure_translation_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let pose = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        write_trajectory_kitti(&[pose], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "1 0 0 1 0 1 0 2 0 0 1 3");
    }

    #[test]
    fn round_trip_random_poses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let poses: Vec<Pose> = (0..20)
            .map(|i| {
                Pose::new(
                    rot_z(0.37 * i as f64),
                    Vector3::new(1.7 * i as f64, -0.3 * i as f64, 0.01 * i as f64),
                )
            })
            .collect();
        write_trajectory_kitti(&poses, &path).unwrap();
        let back = read_trajectory_kitti(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.rotation - b.rotation).norm() < 1e-12);
            assert!((a.translation - b.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn tum_lines_have_eight_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tum.txt");
        let poses = vec![Pose::identity(), Pose::from_translation(Vector3::x())];
        write_trajectory_tum(&poses, None, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines() {
            assert_eq!(line.split_whitespace().count(), 8);
        }
        // Identity quaternion is (0,0,0,1).
        assert_eq!(text.lines().next().unwrap(), "0 0 0 0 0 0 0 1");
    }

    #[test]
    fn malformed_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "1 0 0 0 0 1 0 0 0 0 1\n").unwrap();
        assert!(matches!(
            read_trajectory_kitti(&path),
            Err(Error::Format(_))
        ));
    }
}
