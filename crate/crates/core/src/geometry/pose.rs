use nalgebra::{Matrix3, Point3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform `p' = R p + t` (rotation then translation), meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::from_parts(Rotation3::identity(), t)
    }

    /// Rotation given as an axis-angle vector (radians).
    pub fn from_axis_angle(rotvec: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::from_parts(Rotation3::new(rotvec), translation)
    }

    /// Builds a pose from a raw 3x3 matrix, checking it is a proper rotation within `1e-9`.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let rtr = rotation.transpose() * rotation;
        let orth_err = (rtr - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if orth_err > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!(
                "rotation is not orthonormal (|RᵀR − I| = {orth_err:.3e}, det = {det})"
            )));
        }
        Ok(Self::from_parts(
            Rotation3::from_matrix_unchecked(rotation),
            translation,
        ))
    }

    /// Projects a nearly-orthonormal matrix (e.g. one printed with a few decimals) onto SO(3).
    pub fn from_matrix_orthonormalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || rotation.determinant() <= 0.0 {
            return Err(Error::param("matrix is not close to a proper rotation"));
        }
        let rot = Rotation3::from_matrix_eps(&rotation, 1e-15, 1000, Rotation3::identity());
        Ok(Self::from_parts(rot, translation))
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -(rinv * self.translation),
        }
    }

    /// Left-multiplied tangent update: `(R(ω)·R, R(ω)·t + δt)` for `delta = (δt, ω)`.
    ///
    /// Every pose derivative in the crate is taken with respect to this perturbation at zero.
    pub fn perturbed(&self, delta: &Vector6<f64>) -> Pose {
        let dt = Vector3::new(delta[0], delta[1], delta[2]);
        let w = Vector3::new(delta[3], delta[4], delta[5]);
        Pose::from_parts(Rotation3::new(w), dt).compose(self)
    }

    /// `(tx, ty, tz, rx, ry, rz)` with the rotation as an axis-angle vector.
    pub fn to_vector(&self) -> Vector6<f64> {
        let r = self.rotation.scaled_axis();
        let t = self.translation;
        Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Pose {
        Pose::from_axis_angle(Vector3::new(v[3], v[4], v[5]), Vector3::new(v[0], v[1], v[2]))
    }

    /// Largest absolute entry difference of the 3x4 matrices.
    pub fn distance(&self, other: &Pose) -> f64 {
        let dr = (self.rotation.matrix() - other.rotation.matrix()).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }
}

/// Serialized pose: row-major 3x3 rotation and translation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoseRecord {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let m = p.rotation.matrix();
        let mut rotation = [[0.0; 3]; 3];
        for (r, row) in rotation.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)];
            }
        }
        let t = p.translation;
        Self {
            rotation,
            translation: [t.x, t.y, t.z],
        }
    }
}

impl TryFrom<&PoseRecord> for Pose {
    type Error = Error;

    fn try_from(r: &PoseRecord) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Pose::from_matrix_orthonormalized(m, Vector3::from(r.translation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_pose() -> Pose {
        Pose::from_axis_angle(Vector3::new(0.1, -0.3, 0.2), Vector3::new(0.5, -1.0, 2.0))
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = sample_pose();
        assert!(p.compose(&p.inverse()).distance(&Pose::identity()) < 1e-9);
        assert!(p.inverse().compose(&p).distance(&Pose::identity()) < 1e-9);
    }

    #[test]
    fn composition_is_associative() {
        let a = sample_pose();
        let b = Pose::from_axis_angle(Vector3::new(-0.2, 0.05, 0.4), Vector3::new(0.0, 1.0, -0.5));
        let c = Pose::from_axis_angle(Vector3::new(0.3, 0.3, -0.1), Vector3::new(2.0, 0.0, 0.1));
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        assert!(l.distance(&r) < 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal_matrix() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::from_matrix(m, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::from_matrix(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let p = sample_pose();
        assert!(Pose::from_vector(&p.to_vector()).distance(&p) < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let p = sample_pose();
        let back = Pose::try_from(&PoseRecord::from(&p)).unwrap();
        assert!(back.distance(&p) < 1e-12);
    }
}
