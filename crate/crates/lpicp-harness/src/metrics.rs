//! Trajectory containers and the absolute trajectory error metric.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use lpicp::geometry::Pose6D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("timestamps must be strictly increasing (offender at index {index})")]
    NonMonotonicTimestamps { index: usize },
    #[error("no timestamp associations within tolerance")]
    NoAssociations,
    #[error("alignment window {align_n} exceeds {available} associated poses")]
    AlignWindowTooLarge { align_n: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose6D,
}

/// Timestamped pose sequence with strictly increasing timestamps.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, MetricsError> {
        for i in 1..samples.len() {
            if samples[i].t <= samples[i - 1].t {
                return Err(MetricsError::NonMonotonicTimestamps { index: i });
            }
        }
        Ok(Trajectory { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.pose.translation()).collect()
    }
}

/// Pairs samples whose timestamps agree within `tol`, in time order.
pub fn associate(est: &Trajectory, gt: &Trajectory, tol: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut j = 0;
    for (i, e) in est.samples.iter().enumerate() {
        while j < gt.samples.len() && gt.samples[j].t < e.t - tol {
            j += 1;
        }
        if j < gt.samples.len() && (gt.samples[j].t - e.t).abs() <= tol {
            pairs.push((i, j));
            j += 1;
        }
    }
    pairs
}

/// Closed-form least-squares rigid alignment (rotation + translation)
/// mapping `src` onto `dst`.
pub fn rigid_align(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let c_src: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let c_dst: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cross = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        cross += (b - c_dst) * (a - c_src).transpose();
    }
    let svd = cross.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rot = u * s * v_t;
    let t = c_dst - rot * c_src;
    (rot, t)
}

/// Full ATE evaluation products.
#[derive(Debug, Clone)]
pub struct AteReport {
    /// RMSE of translational residuals after alignment, meters.
    pub rmse: f64,
    pub n_associated: usize,
    /// Per-axis RMSE of the aligned residuals.
    pub per_axis: [f64; 3],
}

/// Absolute trajectory error: associates by timestamp, rigidly aligns the
/// estimate onto the ground truth using the first `align_n` associated
/// poses, and reports the RMSE of the translational residuals over all
/// associated poses.
pub fn ate_report(
    est: &Trajectory,
    gt: &Trajectory,
    align_n: usize,
    assoc_tol: f64,
) -> Result<AteReport, MetricsError> {
    if est.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyTrajectory);
    }
    let pairs = associate(est, gt, assoc_tol);
    if pairs.is_empty() {
        return Err(MetricsError::NoAssociations);
    }
    if align_n > pairs.len() {
        return Err(MetricsError::AlignWindowTooLarge {
            align_n,
            available: pairs.len(),
        });
    }
    let src: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(i, _)| est.samples[i].pose.translation())
        .collect();
    let dst: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| gt.samples[j].pose.translation())
        .collect();
    let (rot, t) = rigid_align(&src[..align_n], &dst[..align_n]);

    let mut sq_sum = 0.0;
    let mut axis_sq = [0.0; 3];
    for (a, b) in src.iter().zip(&dst) {
        let r = rot * a + t - b;
        sq_sum += r.norm_squared();
        for k in 0..3 {
            axis_sq[k] += r[k] * r[k];
        }
    }
    let n = src.len() as f64;
    Ok(AteReport {
        rmse: (sq_sum / n).sqrt(),
        n_associated: src.len(),
        per_axis: [
            (axis_sq[0] / n).sqrt(),
            (axis_sq[1] / n).sqrt(),
            (axis_sq[2] / n).sqrt(),
        ],
    })
}

/// Convenience wrapper returning only the scalar RMSE.
pub fn ate_rmse(
    est: &Trajectory,
    gt: &Trajectory,
    align_n: usize,
    assoc_tol: f64,
) -> Result<f64, MetricsError> {
    ate_report(est, gt, align_n, assoc_tol).map(|r| r.rmse)
}

/// Per-axis RMSE of the raw (unaligned) translation errors; used for
/// along-axis versus cross-axis drift analysis on axis-aligned scenes.
pub fn axis_rmse_unaligned(est: &Trajectory, gt: &Trajectory, assoc_tol: f64) -> [f64; 3] {
    let pairs = associate(est, gt, assoc_tol);
    let mut axis_sq = [0.0; 3];
    for &(i, j) in &pairs {
        let r = est.samples[i].pose.translation() - gt.samples[j].pose.translation();
        for k in 0..3 {
            axis_sq[k] += r[k] * r[k];
        }
    }
    let n = (pairs.len() as f64).max(1.0);
    [
        (axis_sq[0] / n).sqrt(),
        (axis_sq[1] / n).sqrt(),
        (axis_sq[2] / n).sqrt(),
    ]
}
