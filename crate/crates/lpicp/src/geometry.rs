//! Core geometric types: points, clouds, and the 6-DOF pose parameterization.
//!
//! Rotations are parameterized by three Euler angles `(alpha, beta, gamma)`
//! applied as `R = Rz(gamma) * Ry(beta) * Rx(alpha)` (roll about x first,
//! then pitch about y, then yaw about z). This order is locked in by the
//! finite-difference regression tests in the residual module: the analytic
//! rotation Jacobians are exact derivatives under this convention.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};
use thiserror::Error;

/// A 3-D point in meters. Alias kept distinct from direction vectors by use.
pub type Point3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// Euler extraction is undefined when |cos(beta)| falls below 1e-9.
    #[error("gimbal lock: |cos(beta)| = {cos_beta:.3e} < 1e-9, Euler angles not recoverable")]
    GimbalLock { cos_beta: f64 },
    #[error("non-finite pose component")]
    NonFinite,
}

/// Rigid-body pose: three Euler angles (radians) and a translation (meters).
///
/// Angles are stored unwrapped; optimization treats them as unconstrained
/// reals and any wrapping happens only when reports are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6D {
    /// Rotation about the x axis (roll), radians.
    pub alpha: f64,
    /// Rotation about the y axis (pitch), radians.
    pub beta: f64,
    /// Rotation about the z axis (yaw), radians.
    pub gamma: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Pose6D {
    pub const IDENTITY: Pose6D = Pose6D {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        tx: 0.0,
        ty: 0.0,
        tz: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64, tx: f64, ty: f64, tz: f64) -> Self {
        Pose6D {
            alpha,
            beta,
            gamma,
            tx,
            ty,
            tz,
        }
    }

    /// State vector ordered `(alpha, beta, gamma, tx, ty, tz)`: rotation
    /// block first, translation block second.
    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(self.alpha, self.beta, self.gamma, self.tx, self.ty, self.tz)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Pose6D::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn rotation_angles(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, self.gamma)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }

    pub fn is_finite(&self) -> bool {
        self.as_vector().iter().all(|c| c.is_finite())
    }

    /// Rotation matrix for this pose, `R = Rz(gamma) * Ry(beta) * Rx(alpha)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        euler_to_rotation(self.alpha, self.beta, self.gamma)
    }

    /// Applies the rigid transform: `R * p + t`.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation() * p + self.translation()
    }

    /// Homogeneous 4x4 matrix form.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation());
        m
    }

    /// Pose composition `self * other` (apply `other` first, then `self`).
    ///
    /// Fails only when the composed rotation sits in gimbal lock and the
    /// Euler angles cannot be extracted.
    pub fn compose(&self, other: &Pose6D) -> Result<Pose6D, GeometryError> {
        let r = self.rotation() * other.rotation();
        let t = self.rotation() * other.translation() + self.translation();
        Pose6D::from_rotation_translation(&r, &t)
    }

    /// Inverse pose: `[R^T | -R^T t]`.
    pub fn inverse(&self) -> Result<Pose6D, GeometryError> {
        let rt = self.rotation().transpose();
        let t = -rt * self.translation();
        Pose6D::from_rotation_translation(&rt, &t)
    }

    /// Recovers Euler angles from a rotation matrix plus a translation.
    pub fn from_rotation_translation(
        r: &Matrix3<f64>,
        t: &Vector3<f64>,
    ) -> Result<Pose6D, GeometryError> {
        let (alpha, beta, gamma) = euler_from_rotation(r)?;
        Ok(Pose6D::new(alpha, beta, gamma, t[0], t[1], t[2]))
    }

    /// Additive state update used by the Gauss-Newton iterations.
    pub fn plus(&self, delta: &Vector6<f64>) -> Pose6D {
        Pose6D::from_vector(&(self.as_vector() + delta))
    }
}

/// Builds `R = Rz(gamma) * Ry(beta) * Rx(alpha)`.
pub fn euler_to_rotation(alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
    let (sx, cx) = alpha.sin_cos();
    let (sy, cy) = beta.sin_cos();
    let (sz, cz) = gamma.sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Extracts `(alpha, beta, gamma)` such that
/// `euler_to_rotation(alpha, beta, gamma)` reproduces `r`.
///
/// Returns `GimbalLock` when `|cos(beta)| < 1e-9`; every rotation matrix
/// remains usable, only the Euler decomposition is undefined there.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<(f64, f64, f64), GeometryError> {
    let cos_beta = (r[(2, 1)] * r[(2, 1)] + r[(2, 2)] * r[(2, 2)]).sqrt();
    if cos_beta < 1e-9 {
        return Err(GeometryError::GimbalLock { cos_beta });
    }
    let beta = (-r[(2, 0)]).atan2(cos_beta);
    let alpha = r[(2, 1)].atan2(r[(2, 2)]);
    let gamma = r[(1, 0)].atan2(r[(0, 0)]);
    Ok((alpha, beta, gamma))
}

/// An infinite line through `anchor` with unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    pub anchor: Point3,
    pub direction: Vector3<f64>,
}

/// An infinite plane through `anchor` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub anchor: Point3,
    pub normal: Vector3<f64>,
}

/// Unit component of `v` perpendicular to the unit vector `axis`.
///
/// Returns `None` when `v` is within 1e-9 of the axis (the perpendicular
/// direction is undefined there).
pub fn unit_rejection(v: &Vector3<f64>, axis: &Vector3<f64>) -> Option<Vector3<f64>> {
    let w = v - v.dot(axis) * axis;
    let n = w.norm();
    if n < 1e-9 {
        None
    } else {
        Some(w / n)
    }
}

/// Wraps an angle to `(-pi, pi]`. Applied only when emitting reports.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// An ordered set of 3-D points with optional per-point scan-line indices.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Scan-line (ring) index per point; when present, covers every point.
    pub ring: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points, ring: None }
    }

    pub fn with_rings(points: Vec<Point3>, ring: Vec<u32>) -> Self {
        assert_eq!(points.len(), ring.len(), "ring indices must cover every point");
        PointCloud {
            points,
            ring: Some(ring),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose6D) -> PointCloud {
        let r = pose.rotation();
        let t = pose.translation();
        PointCloud {
            points: self.points.iter().map(|p| r * p + t).collect(),
            ring: self.ring.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_pose(rng: &mut StdRng) -> Pose6D {
        Pose6D::new(
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        )
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = euler_to_rotation(0.0, 0.0, 0.0);
        assert!((r - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_x() {
        let r = euler_to_rotation(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        // x axis fixed, y maps to z.
        assert!((r * Vector3::x() - Vector3::x()).norm() < 1e-12);
        assert!((r * Vector3::y() - Vector3::z()).norm() < 1e-12);
        let gram = r.transpose() * r;
        assert!((gram - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn rotation_is_orthonormal_with_unit_determinant() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let p = random_pose(&mut rng);
            let r = p.rotation();
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_matches_homogeneous_matrix_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let p = Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let direct = pose.transform_point(&p);
            let h = pose.to_matrix() * p.push(1.0);
            assert!((direct - h.xyz()).norm() < 1e-12);
        }
    }

    #[test]
    fn transform_point_is_affine_linear() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let p1 = Vector3::new(rng.gen(), rng.gen(), rng.gen());
            let p2 = Vector3::new(rng.gen(), rng.gen(), rng.gen());
            let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = pose.transform_point(&(a * p1 + b * p2));
            let rhs = a * pose.transform_point(&p1) + b * pose.transform_point(&p2)
                - (a + b - 1.0) * pose.translation();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_composition_and_involution() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let ab = Pose6D::IDENTITY.compose(&b).unwrap();
            assert!((ab.as_vector() - b.as_vector()).amax() < 1e-12);
            let back = a.inverse().unwrap().inverse().unwrap();
            assert!((back.to_matrix() - a.to_matrix()).abs().max() < 1e-9);
            let should_be_identity = a.compose(&a.inverse().unwrap()).unwrap();
            assert!((should_be_identity.to_matrix() - Matrix4::identity()).abs().max() < 1e-9);
            let composed = a.compose(&b).unwrap();
            assert!((composed.to_matrix() - a.to_matrix() * b.to_matrix()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn euler_round_trip_away_from_gimbal_lock() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..500 {
            let pose = random_pose(&mut rng);
            let r = pose.rotation();
            let (a, b, g) = euler_from_rotation(&r).unwrap();
            let r2 = euler_to_rotation(a, b, g);
            assert!((r - r2).abs().max() < 1e-9);
        }
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let r = euler_to_rotation(0.3, std::f64::consts::FRAC_PI_2, -0.7);
        match euler_from_rotation(&r) {
            Err(GeometryError::GimbalLock { .. }) => {}
            other => panic!("expected gimbal lock, got {other:?}"),
        }
    }

    #[test]
    fn wrap_angle_stays_in_range() {
        for k in -20..20 {
            let a = 0.37 + k as f64 * std::f64::consts::PI;
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
            assert!((w.sin() - a.sin()).abs() < 1e-12);
            assert!((w.cos() - a.cos()).abs() < 1e-12);
        }
    }
}
