//! Least-squares line and plane fits over small neighbor sets, with
//! validity tests that reject degenerate configurations.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::geometry::{LineModel, PlaneModel, Point3};

use super::FeatureError;

/// Neighbor centroid and covariance (population form).
fn centroid_covariance(points: &[Point3]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    (centroid, cov / n)
}

/// Eigen pairs of a symmetric 3x3, sorted by descending eigenvalue with
/// tiny negative values (rounding) clamped to zero.
pub(crate) fn sorted_symmetric_eigen(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector3::new(
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    );
    let vectors = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    (values, vectors)
}

/// Fits a line through the neighbors: direction is the principal
/// eigenvector of the covariance, anchored at the centroid. Accepted only
/// when the spread is sufficiently one-dimensional
/// (`lambda1 >= ratio * lambda2`).
pub fn fit_line(points: &[Point3], min_points: usize, ratio: f64) -> Result<LineModel, FeatureError> {
    if points.len() < min_points {
        return Err(FeatureError::TooFewPoints {
            requested: min_points,
            available: points.len(),
        });
    }
    let (centroid, cov) = centroid_covariance(points);
    let (values, vectors) = sorted_symmetric_eigen(&cov);
    if values[0] <= 0.0 || values[0] < ratio * values[1] {
        return Err(FeatureError::DegenerateFit {
            what: "line eigenvalue ratio below threshold",
        });
    }
    Ok(LineModel {
        anchor: centroid,
        direction: vectors.column(0).normalize(),
    })
}

/// Fits a plane through the neighbors: normal is the minor eigenvector of
/// the covariance, anchored at the centroid. Accepted only when the
/// neighbor spread is genuinely two-dimensional and every neighbor lies
/// within `tol` meters of the fitted plane. Quasi-collinear sets leave
/// the normal direction unconstrained and are rejected.
pub fn fit_plane(points: &[Point3], min_points: usize, tol: f64) -> Result<PlaneModel, FeatureError> {
    if points.len() < min_points {
        return Err(FeatureError::TooFewPoints {
            requested: min_points,
            available: points.len(),
        });
    }
    let (centroid, cov) = centroid_covariance(points);
    let (values, vectors) = sorted_symmetric_eigen(&cov);
    if values[0] <= 0.0 || values[1] < 1e-2 * values[0] {
        return Err(FeatureError::DegenerateFit {
            what: "neighbor spread is not two-dimensional",
        });
    }
    let normal = vectors.column(2).normalize();
    for p in points {
        if (p - centroid).dot(&normal).abs() > tol {
            return Err(FeatureError::DegenerateFit {
                what: "neighbor outside plane tolerance",
            });
        }
    }
    Ok(PlaneModel {
        anchor: centroid,
        normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    // Closed-form eigenvalues of a symmetric 3x3 via the trigonometric
    // solution of the characteristic cubic; independent of SymmetricEigen.
    fn eigenvalues_cubic(m: &Matrix3<f64>) -> [f64; 3] {
        let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        let q = m.trace() / 3.0;
        if p1.abs() < 1e-30 {
            let mut d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
            d.sort_by(|a, b| b.total_cmp(a));
            return d;
        }
        let p2 = (m[(0, 0)] - q).powi(2)
            + (m[(1, 1)] - q).powi(2)
            + (m[(2, 2)] - q).powi(2)
            + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (m - Matrix3::identity() * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn collinear_points_fit_the_axis() {
        let pts: Vec<Point3> = (0..5).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let line = fit_line(&pts, 5, 3.0).unwrap();
        assert!(line.direction.dot(&Vector3::x()).abs() > 1.0 - 1e-12);
        assert!(line.anchor.y.abs() < 1e-12 && line.anchor.z.abs() < 1e-12);
    }

    #[test]
    fn coplanar_spread_rejects_line_fit() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.5, 0.5, 0.0),
        ];
        assert!(matches!(
            fit_line(&pts, 5, 3.0),
            Err(FeatureError::DegenerateFit { .. })
        ));
    }

    #[test]
    fn noisy_collinear_points_still_accepted() {
        let mut rng = StdRng::seed_from_u64(41);
        let noise = Normal::new(0.0, 1e-4).unwrap();
        let pts: Vec<Point3> = (0..5)
            .map(|i| {
                Vector3::new(
                    i as f64 * 0.1 + noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                )
            })
            .collect();
        let line = fit_line(&pts, 5, 3.0).unwrap();
        assert!(line.direction.dot(&Vector3::x()).abs() > 0.999);
    }

    #[test]
    fn plane_fit_recovers_z_normal() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-1.0, 0.3, 0.0),
            Vector3::new(0.2, -0.8, 0.0),
        ];
        let plane = fit_plane(&pts, 5, 0.2).unwrap();
        assert!(plane.normal.dot(&Vector3::z()).abs() > 1.0 - 1e-12);
    }

    #[test]
    fn outlier_beyond_tolerance_rejects_plane() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.5, 0.5, 1.0),
        ];
        assert!(matches!(
            fit_plane(&pts, 5, 0.2),
            Err(FeatureError::DegenerateFit { .. })
        ));
    }

    #[test]
    fn noisy_plane_accepted_with_accurate_normal() {
        let mut rng = StdRng::seed_from_u64(43);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pts: Vec<Point3> = (0..30)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    noise.sample(&mut rng),
                )
            })
            .collect();
        let plane = fit_plane(&pts, 5, 0.2).unwrap();
        assert!(plane.normal.dot(&Vector3::z()).abs() > 0.999);
    }

    #[test]
    fn covariance_eigenvalues_match_cubic_oracle() {
        let mut rng = StdRng::seed_from_u64(47);
        for _ in 0..200 {
            let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let m = a * a.transpose();
            let (values, vectors) = sorted_symmetric_eigen(&m);
            let oracle = eigenvalues_cubic(&m);
            for i in 0..3 {
                assert!(
                    (values[i] - oracle[i]).abs() < 1e-8 * m.norm().max(1.0),
                    "eigenvalue {i}: {} vs {}",
                    values[i],
                    oracle[i]
                );
            }
            // Reconstruction check.
            let lam = Matrix3::from_diagonal(&values);
            assert!((vectors * lam * vectors.transpose() - m).abs().max() < 1e-8 * m.norm().max(1.0));
        }
    }

    #[test]
    fn too_few_neighbors_rejected() {
        let pts = vec![Vector3::zeros(); 3];
        assert!(matches!(
            fit_line(&pts, 5, 3.0),
            Err(FeatureError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_plane(&pts, 5, 0.2),
            Err(FeatureError::TooFewPoints { .. })
        ));
    }
}
