//! SE3 poses, points, and the small linear-algebra kernels used everywhere.

use nalgebra::{Matrix3, Vector3};

/// A 3-D point or vector in meters.
pub type Point3 = Vector3<f64>;

/// Orthonormality drift above this triggers re-orthonormalization.
const ORTHO_DRIFT: f64 = 1e-9;

/// Angles below this use the Taylor expansion of the rotation exponential.
const SMALL_ANGLE: f64 = 1e-8;

/// Rigid transform in SE3: rotation matrix plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Applies `self` to a point: `R·p + t`.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Composition: the result applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut out = Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        if out.ortho_drift() > ORTHO_DRIFT {
            out.rotation = orthonormalize(&out.rotation);
        }
        out
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// SE3 exponential of a twist, left-multiplication convention.
    pub fn exp(twist: &Twist) -> Pose {
        let omega = twist.rotation;
        let theta = omega.norm();
        let k = skew(&omega);
        let k2 = k * k;
        let (rot, v) = if theta < SMALL_ANGLE {
            // Second-order Taylor series; avoids dividing by a vanishing angle.
            let rot = Matrix3::identity() + k + k2 * 0.5;
            let v = Matrix3::identity() + k * 0.5 + k2 * (1.0 / 6.0);
            (rot, v)
        } else {
            let t2 = theta * theta;
            let rot = Matrix3::identity() + k * (theta.sin() / theta)
                + k2 * ((1.0 - theta.cos()) / t2);
            let v = Matrix3::identity() + k * ((1.0 - theta.cos()) / t2)
                + k2 * ((theta - theta.sin()) / (t2 * theta));
            (rot, v)
        };
        Pose {
            rotation: rot,
            translation: v * twist.translation,
        }
    }

    /// Max |entry| of `RᵀR − I`.
    pub fn ortho_drift(&self) -> f64 {
        let d = self.rotation.transpose() * self.rotation - Matrix3::identity();
        d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_valid(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.ortho_drift() <= ORTHO_DRIFT
            && (self.rotation.determinant() - 1.0).abs() <= ORTHO_DRIFT
    }

    /// Rotation angle in radians, in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        let c = (self.rotation.trace() - 1.0) * 0.5;
        c.clamp(-1.0, 1.0).acos()
    }

    pub fn reorthonormalize(&mut self) {
        self.rotation = orthonormalize(&self.rotation);
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// 6-D local update: rotational part in radians, translational part in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Twist {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Twist {
            rotation,
            translation,
        }
    }

    pub fn from_slice(v: &[f64; 6]) -> Self {
        Twist {
            rotation: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.rotation.norm_squared() + self.translation.norm_squared()).sqrt()
    }
}

/// Skew-symmetric matrix of `v`, so that `skew(v)·w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Nearest rotation matrix in the Frobenius sense, via SVD with sign fix.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // Flip the singular direction associated with the smallest value.
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

/// Extrapolates the last relative motion: `prev ∘ (prev2⁻¹ ∘ prev)`.
pub fn constant_velocity_guess(prev: &Pose, prev2: &Pose) -> Pose {
    prev.compose(&prev2.inverse().compose(prev))
}
