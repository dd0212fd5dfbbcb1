//! Rigid-body pose algebra.
//!
//! Frames follow the KITTI camera convention: x right, y down, z forward.
//! Orientation targets are Euler angles `phi = (phi_x, phi_y, phi_z)` in
//! radians with `R = Rz(phi_z) * Ry(phi_y) * Rx(phi_x)`, i.e. extrinsic
//! rotations about x, then y, then z.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Largest orthonormality violation accepted by [`rotation_to_euler`].
pub const EULER_INPUT_TOLERANCE: f64 = 1e-6;

/// `|cos(phi_y)|` below this is treated as gimbal lock.
pub const GIMBAL_LOCK_THRESHOLD: f64 = 1e-6;

/// Rigid transform: maps points from its own frame into the parent frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Six-number pose: position in meters, then Euler angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose6 {
    pub p: Vector3<f64>,
    pub phi: Vector3<f64>,
}

/// Maximum absolute entry of `R^T R - I`, combined with `|det R - 1|`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.abs().max().max((r.determinant() - 1.0).abs())
}

/// Closest rotation in the Frobenius sense (polar factor via SVD).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn euler_to_rotation(phi: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(phi.z) * rot_y(phi.y) * rot_x(phi.x)
}

/// Inverse of [`euler_to_rotation`] on the principal branch: `phi_x, phi_z`
/// in `(-pi, pi]`, `phi_y` in `[-pi/2, pi/2]`. At gimbal lock `phi_x` is 0
/// and `phi_z` absorbs the remaining rotation.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let err = orthonormality_error(r);
    if err > EULER_INPUT_TOLERANCE {
        return Err(Error::invalid(
            "rotation_to_euler",
            format!("matrix is not a rotation (orthonormality error {err:.3e})"),
        ));
    }
    let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let y = sy.asin();
    let cy = (r[(2, 1)].powi(2) + r[(2, 2)].powi(2)).sqrt();
    let (x, z) = if cy < GIMBAL_LOCK_THRESHOLD {
        // With phi_x = 0: R = [[0, -sz, .], [0, cz, .], [.., 0, 0]] for either sign of pitch.
        (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
    } else {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    };
    Ok(Vector3::new(principal(x), y, principal(z)))
}

// Maps atan2's -pi onto +pi so angles lie in (-pi, pi].
fn principal(a: f64) -> f64 {
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Rotation angle in `[0, pi]` from the trace and the skew-symmetric part.
/// Unlike `acos` of the trace alone this stays accurate near zero, and a
/// symmetric matrix such as `R^T R` gives exactly 0.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    (0.5 * skew.norm()).atan2(0.5 * (r.trace() - 1.0))
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking the rotation is orthonormal within `tolerance`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, tolerance: f64) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if !(err <= tolerance) {
            return Err(Error::invalid(
                "pose",
                format!("rotation violates orthonormality by {err:.3e} (tolerance {tolerance:.1e})"),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "pose" });
        }
        Ok(PoseSE3 {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        PoseSE3 {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &PoseSE3) -> Self {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Row-major `[R | t]`, the twelve numbers of a KITTI pose line.
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let (r, t) = (&self.rotation, &self.translation);
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;

    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

impl Mul for &PoseSE3 {
    type Output = PoseSE3;

    fn mul(self, rhs: &PoseSE3) -> PoseSE3 {
        self.compose(rhs)
    }
}

impl Pose6 {
    pub fn zero() -> Self {
        Pose6 {
            p: Vector3::zeros(),
            phi: Vector3::zeros(),
        }
    }

    pub fn new(p: [f64; 3], phi: [f64; 3]) -> Self {
        Pose6 {
            p: Vector3::from(p),
            phi: Vector3::from(phi),
        }
    }

    /// Layout used by the network head: `[px, py, pz, phi_x, phi_y, phi_z]`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.p.x, self.p.y, self.p.z, self.phi.x, self.phi.y, self.phi.z]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 6, "pose vector must have 6 entries");
        Pose6::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn from_se3(pose: &PoseSE3) -> Result<Self> {
        Ok(Pose6 {
            p: pose.translation,
            phi: rotation_to_euler(&pose.rotation)?,
        })
    }

    pub fn to_se3(&self) -> PoseSE3 {
        PoseSE3 {
            rotation: euler_to_rotation(&self.phi),
            translation: self.p,
        }
    }
}

/// `a⁻¹ ∘ b`: pose of `b` expressed in the frame of `a`.
pub fn relative_pose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    let rt = a.rotation.transpose();
    PoseSE3 {
        rotation: rt * b.rotation,
        translation: rt * (b.translation - a.translation),
    }
}

/// Chains relative motions onto `start`. The result includes `start`, so it
/// has one more pose than `relatives`.
pub fn compose_trajectory(relatives: &[Pose6], start: &PoseSE3) -> Vec<PoseSE3> {
    let mut out = Vec::with_capacity(relatives.len() + 1);
    out.push(*start);
    let mut current = *start;
    for rel in relatives {
        current = current.compose(&rel.to_se3());
        out.push(current);
    }
    out
}

/// Per-step relative motions of an absolute trajectory, as regression targets.
pub fn relative_motions(poses: &[PoseSE3]) -> Result<Vec<Pose6>> {
    poses
        .windows(2)
        .map(|w| Pose6::from_se3(&relative_pose(&w[0], &w[1])))
        .collect()
}
