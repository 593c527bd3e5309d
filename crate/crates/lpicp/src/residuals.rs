//! Point-to-line and point-to-plane residuals with analytic Jacobians.
//!
//! The rotation Jacobians come in two flavors: the Euler-angle rows used by
//! the main pipeline (derivatives w.r.t. `(alpha, beta, gamma)` under
//! `R = Rz(gamma) * Ry(beta) * Rx(alpha)`) and a Lie-algebra alternative
//! (right body-frame perturbation). Every row is checked against central
//! finite differences in the test suites.

use nalgebra::{Vector3, Vector6};

use crate::features::Correspondence;
use crate::geometry::{unit_rejection, LineModel, PlaneModel, Point3, Pose6D};

/// Which rotation parameterization the Jacobian rows differentiate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum JacobianConvention {
    #[default]
    EulerAngles,
    LieAlgebra,
}

/// One residual with its 1x3 rotation and translation Jacobian rows.
#[derive(Debug, Clone, Copy)]
pub struct ResidualEval {
    pub value: f64,
    /// Row of partials w.r.t. the rotation block (stored as a vector).
    pub j_rot: Vector3<f64>,
    /// Row of partials w.r.t. the translation block.
    pub j_trans: Vector3<f64>,
    pub is_edge: bool,
}

impl ResidualEval {
    /// Full 1x6 row, rotation components first.
    pub fn full_row(&self) -> Vector6<f64> {
        Vector6::new(
            self.j_rot[0],
            self.j_rot[1],
            self.j_rot[2],
            self.j_trans[0],
            self.j_trans[1],
            self.j_trans[2],
        )
    }
}

/// Perpendicular distance from the transformed point to the line:
/// `|| (R p + t - q) x l ||`.
pub fn residual_line(pose: &Pose6D, p_scan: &Point3, line: &LineModel) -> f64 {
    let e = pose.transform_point(p_scan) - line.anchor;
    e.cross(&line.direction).norm()
}

/// Signed distance from the transformed point to the plane:
/// `(R p + t - q) . n`.
pub fn residual_plane(pose: &Pose6D, p_scan: &Point3, plane: &PlaneModel) -> f64 {
    (pose.transform_point(p_scan) - plane.anchor).dot(&plane.normal)
}

/// Translation Jacobian of the line residual: the unit distance vector
/// from the line to the transformed point, as a row.
pub fn jacobian_line_translation(dist_dir: &Vector3<f64>) -> Vector3<f64> {
    *dist_dir
}

/// Translation Jacobian of the plane residual: the unit plane normal.
pub fn jacobian_plane_translation(normal: &Vector3<f64>) -> Vector3<f64> {
    *normal
}

/// Euler rotation Jacobian row shared by both residual types.
///
/// `u` is the residual's gradient direction in the map frame: the unit
/// distance vector for edge points, the unit plane normal for planar
/// points. Component k is `u . (dR/d theta_k * p)`.
///
/// The z component carries no `u.z` term: the third row of `dR/d gamma`
/// vanishes identically under this rotation order.
pub fn rotation_jacobian_euler(pose: &Pose6D, p: &Point3, u: &Vector3<f64>) -> Vector3<f64> {
    let (sx, cx) = pose.alpha.sin_cos();
    let (sy, cy) = pose.beta.sin_cos();
    let (sz, cz) = pose.gamma.sin_cos();

    let jx = ((sz * sx + cz * sy * cx) * p.y + (sz * cx - cz * sy * sx) * p.z) * u.x
        + ((-cz * sx + sz * sy * cx) * p.y + (-cz * cx - sz * sy * sx) * p.z) * u.y
        + (cy * cx * p.y - cy * sx * p.z) * u.z;

    let jy = (-cz * sy * p.x + cz * cy * sx * p.y + cz * cy * cx * p.z) * u.x
        + (-sz * sy * p.x + sz * cy * sx * p.y + sz * cy * cx * p.z) * u.y
        + (-cy * p.x - sy * sx * p.y - sy * cx * p.z) * u.z;

    let jz = (-sz * cy * p.x + (-cz * cx - sz * sy * sx) * p.y + (cz * sx - sz * sy * cx) * p.z)
        * u.x
        + (cz * cy * p.x + (-sz * cx + cz * sy * sx) * p.y + (sz * sx + cz * sy * cx) * p.z) * u.y;

    Vector3::new(jx, jy, jz)
}

/// Lie-algebra rotation Jacobian row: `(p x u^L)^T` with `u^L = R^T u`,
/// the gradient direction expressed in the scan frame. Derivative w.r.t. a
/// right-multiplied body-frame perturbation `R * Exp(phi)`.
pub fn rotation_jacobian_lie(pose: &Pose6D, p: &Point3, u: &Vector3<f64>) -> Vector3<f64> {
    let u_scan = pose.rotation().transpose() * u;
    p.cross(&u_scan)
}

/// Caps the rotation row at unit norm so rotation and translation
/// contributions share a scale; rows already at or below unit norm pass
/// through unchanged.
pub fn normalize_rotation_jacobian(j_rot: &Vector3<f64>) -> Vector3<f64> {
    let n = j_rot.norm();
    if n > 1.0 {
        j_rot / n
    } else {
        *j_rot
    }
}

/// Evaluates one correspondence at the given pose.
///
/// Returns `None` for an edge point lying on its matched line (within
/// 1e-9 m): the residual is zero there and its gradient direction is
/// undefined, so the term is dropped for this evaluation.
pub fn evaluate(
    pose: &Pose6D,
    corr: &Correspondence,
    convention: JacobianConvention,
) -> Option<ResidualEval> {
    match corr {
        Correspondence::Edge(edge) => {
            let p_map = pose.transform_point(&edge.p_scan);
            let dist_dir = unit_rejection(&(p_map - edge.line.anchor), &edge.line.direction)?;
            let value = residual_line(pose, &edge.p_scan, &edge.line);
            let j_rot = match convention {
                JacobianConvention::EulerAngles => {
                    rotation_jacobian_euler(pose, &edge.p_scan, &dist_dir)
                }
                JacobianConvention::LieAlgebra => {
                    rotation_jacobian_lie(pose, &edge.p_scan, &dist_dir)
                }
            };
            Some(ResidualEval {
                value,
                j_rot,
                j_trans: jacobian_line_translation(&dist_dir),
                is_edge: true,
            })
        }
        Correspondence::Planar(planar) => {
            let value = residual_plane(pose, &planar.p_scan, &planar.plane);
            let n = planar.plane.normal;
            let j_rot = match convention {
                JacobianConvention::EulerAngles => {
                    rotation_jacobian_euler(pose, &planar.p_scan, &n)
                }
                JacobianConvention::LieAlgebra => rotation_jacobian_lie(pose, &planar.p_scan, &n),
            };
            Some(ResidualEval {
                value,
                j_rot,
                j_trans: jacobian_plane_translation(&n),
                is_edge: false,
            })
        }
    }
}

/// Evaluates a batch of correspondences, preserving input order. Terms with
/// undefined gradients (see [`evaluate`]) are skipped together with their
/// correspondence index.
pub fn evaluate_all(
    pose: &Pose6D,
    corrs: &[Correspondence],
    convention: JacobianConvention,
) -> Vec<ResidualEval> {
    corrs
        .iter()
        .filter_map(|c| evaluate(pose, c, convention))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn line(anchor: [f64; 3], dir: [f64; 3]) -> LineModel {
        LineModel {
            anchor: Vector3::from(anchor),
            direction: Vector3::from(dir).normalize(),
        }
    }

    fn plane(anchor: [f64; 3], n: [f64; 3]) -> PlaneModel {
        PlaneModel {
            anchor: Vector3::from(anchor),
            normal: Vector3::from(n).normalize(),
        }
    }

    #[test]
    fn line_residual_trivia() {
        let l = line([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let on_line = Vector3::new(3.0, 0.0, 0.0);
        assert!(residual_line(&Pose6D::IDENTITY, &on_line, &l).abs() < 1e-15);
        let above = Vector3::new(0.0, 0.0, 2.0);
        assert!((residual_line(&Pose6D::IDENTITY, &above, &l) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn line_residual_matches_parametric_minimization() {
        // Independent oracle: minimize ||p - (q + t l)|| over t by golden
        // section inside a wide bracket.
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let l = line(
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)],
            );
            let pose = Pose6D::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let p = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let p_map = pose.transform_point(&p);
            let dist = |t: f64| (p_map - (l.anchor + t * l.direction)).norm();
            let (mut a, mut b) = (-100.0_f64, 100.0_f64);
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - phi * (b - a);
                let d = a + phi * (b - a);
                if dist(c) < dist(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let oracle = dist(0.5 * (a + b));
            let got = residual_line(&pose, &p, &l);
            assert!((got - oracle).abs() < 1e-10, "got {got}, oracle {oracle}");
        }
    }

    #[test]
    fn plane_residual_trivia_and_sign() {
        let pl = plane([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert!(residual_plane(&Pose6D::IDENTITY, &Vector3::new(1.0, -2.0, 0.0), &pl).abs() < 1e-15);
        let p = Vector3::new(3.0, 4.0, 1.5);
        assert!((residual_plane(&Pose6D::IDENTITY, &p, &pl) - 1.5).abs() < 1e-15);
        let flipped = plane([0.0, 0.0, 0.0], [0.0, 0.0, -1.0]);
        assert!((residual_plane(&Pose6D::IDENTITY, &p, &flipped) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn translation_rows_are_direct_transcriptions() {
        let d = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(jacobian_line_translation(&d), d);
        assert_eq!(jacobian_line_translation(&-d), -d);
        let n = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(jacobian_plane_translation(&n), n);
        assert_eq!(jacobian_plane_translation(&-n), -n);
    }

    #[test]
    fn euler_row_at_zero_angles_reduces_to_cross_product() {
        // At zero angles each component collapses to (p x u) . e_k.
        let p = Vector3::new(1.0, 0.0, 0.0);
        let u = Vector3::new(0.0, 1.0, 0.0);
        let row = rotation_jacobian_euler(&Pose6D::IDENTITY, &p, &u);
        assert!((row - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);

        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..100 {
            let p = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let u = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let row = rotation_jacobian_euler(&Pose6D::IDENTITY, &p, &u);
            assert!((row - p.cross(&u)).norm() < 1e-14);
        }
    }

    #[test]
    fn euler_row_vanishes_for_point_at_origin() {
        let pose = Pose6D::new(0.4, -0.3, 0.9, 1.0, 2.0, 3.0);
        let row = rotation_jacobian_euler(&pose, &Vector3::zeros(), &Vector3::new(0.3, -0.5, 0.8));
        assert!(row.norm() < 1e-15);
    }

    #[test]
    fn lie_row_cross_product_cases() {
        // Parallel vectors null the row.
        let p = Vector3::new(2.0, -1.0, 0.5);
        let row = rotation_jacobian_lie(&Pose6D::IDENTITY, &p, &p.normalize());
        assert!(row.norm() < 1e-12);
        // Canonical cross product at identity.
        let row = rotation_jacobian_lie(
            &Pose6D::IDENTITY,
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, 1.0, 0.0),
        );
        assert!((row - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn normalization_caps_at_unit_norm() {
        let capped = normalize_rotation_jacobian(&Vector3::new(3.0, 0.0, 0.0));
        assert!((capped - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let small = Vector3::new(0.2, 0.1, 0.0);
        assert_eq!(normalize_rotation_jacobian(&small), small);
        assert_eq!(normalize_rotation_jacobian(&Vector3::zeros()), Vector3::zeros());
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..200 {
            let j = Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            assert!(normalize_rotation_jacobian(&j).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn edge_evaluation_drops_on_line_points() {
        let l = line([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let corr = Correspondence::Edge(crate::features::EdgeCorrespondence {
            p_scan: Vector3::new(4.0, 0.0, 0.0),
            p_map: Vector3::new(4.0, 0.0, 0.0),
            line: l,
            dist_dir: Vector3::new(0.0, 0.0, 1.0),
        });
        assert!(evaluate(&Pose6D::IDENTITY, &corr, JacobianConvention::EulerAngles).is_none());
    }
}
