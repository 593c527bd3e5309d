//! Localizability detection: eigenspace analysis of the rotation and
//! translation Hessian blocks, per-correspondence contribution vectors,
//! noise filtering, and the ternary Full/Partial/None categorization.
//!
//! Also hosts the eigenvalue-threshold degeneracy baseline over the full
//! 6x6 Hessian used by the solution-remapping method.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::residuals::{normalize_rotation_jacobian, ResidualEval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizabilityError {
    #[error("no residual terms to analyze")]
    EmptyConstraintSet,
    #[error("invalid detection config: {what}")]
    InvalidConfig { what: &'static str },
}

/// Which per-direction contribution metric to use: squared projections
/// (column sums reproduce the block eigenvalues exactly) or absolute
/// projections (the scale used by the point-to-plane-only variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ContributionMetric {
    #[default]
    Squared,
    Absolute,
}

/// Thresholds for filtering and categorization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Contributions below this are treated as noise and zeroed.
    pub h_f: f64,
    /// Contributions at or above this count as high-quality constraints.
    pub h_u: f64,
    /// Full when the moderate sum reaches this...
    pub t1: f64,
    /// ...or the high sum reaches this.
    pub t2: f64,
    /// Partial needs the moderate sum at this...
    pub t3: f64,
    /// ...and the high sum at this.
    pub t4: f64,
    pub metric: ContributionMetric,
    /// Re-run detection on every iteration instead of caching the first
    /// iteration's result (study mode).
    pub detect_every_iteration: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            h_f: 0.03,
            h_u: 0.4998,
            t1: 50.0,
            t2: 30.0,
            t3: 15.0,
            t4: 9.0,
            metric: ContributionMetric::Squared,
            detect_every_iteration: false,
        }
    }
}

impl DetectionConfig {
    /// Preset for the absolute-projection metric. The absolute scale sums
    /// |J v| instead of (J v)^2, so both the entry thresholds and the
    /// category thresholds differ from the squared defaults.
    pub fn absolute_metric() -> Self {
        DetectionConfig {
            h_f: 0.1732,
            h_u: 0.707,
            t1: 90.0,
            t2: 50.0,
            t3: 35.0,
            t4: 20.0,
            metric: ContributionMetric::Absolute,
            detect_every_iteration: false,
        }
    }

    pub fn validate(&self) -> Result<(), LocalizabilityError> {
        if !(0.0 <= self.h_f && self.h_f <= self.h_u) {
            return Err(LocalizabilityError::InvalidConfig {
                what: "need 0 <= h_f <= h_u",
            });
        }
        if self.t3 > self.t1 {
            return Err(LocalizabilityError::InvalidConfig { what: "need t3 <= t1" });
        }
        if self.t4 > self.t2 {
            return Err(LocalizabilityError::InvalidConfig { what: "need t4 <= t2" });
        }
        Ok(())
    }
}

/// Which half of the state a direction lives in. Directions are indexed
/// 0..6 as (r1, r2, r3, t1, t2, t3), eigenvalues descending per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Rotation,
    Translation,
}

pub fn block_of(direction: usize) -> Block {
    if direction < 3 {
        Block::Rotation
    } else {
        Block::Translation
    }
}

/// Eigen decompositions of the two 3x3 Hessian blocks.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    /// Rotation-block eigenvalues, descending.
    pub rot_values: Vector3<f64>,
    /// Rotation-block eigenvectors as columns, matching `rot_values`.
    pub rot_vectors: Matrix3<f64>,
    pub trans_values: Vector3<f64>,
    pub trans_vectors: Matrix3<f64>,
}

impl EigenBasis {
    /// Eigenvector for direction index 0..6.
    pub fn vector(&self, direction: usize) -> Vector3<f64> {
        match block_of(direction) {
            Block::Rotation => self.rot_vectors.column(direction).into_owned(),
            Block::Translation => self.trans_vectors.column(direction - 3).into_owned(),
        }
    }

    pub fn eigenvalue(&self, direction: usize) -> f64 {
        match block_of(direction) {
            Block::Rotation => self.rot_values[direction],
            Block::Translation => self.trans_values[direction - 3],
        }
    }
}

/// N x 6 nonnegative contribution matrix; row i holds the contributions of
/// correspondence i along (r1, r2, r3, t1, t2, t3).
#[derive(Debug, Clone, Default)]
pub struct ContributionMatrix {
    pub rows: Vec<[f64; 6]>,
}

impl ContributionMatrix {
    pub fn column_sum(&self, j: usize) -> f64 {
        self.rows.iter().map(|r| r[j]).sum()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Ternary localizability category of one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    None,
    Partial,
    Full,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Category::Full => write!(f, "Full"),
            Category::Partial => write!(f, "Partial"),
            Category::None => write!(f, "None"),
        }
    }
}

/// Everything the detection pass produces for one registration.
#[derive(Debug, Clone)]
pub struct LocalizabilityReport {
    pub basis: EigenBasis,
    /// Unfiltered contribution matrix F.
    pub contributions: ContributionMatrix,
    /// Per-direction sums of moderate contributions (noise filtered).
    pub l_f: [f64; 6],
    /// Per-direction sums of high contributions.
    pub l_u: [f64; 6],
    pub categories: [Category; 6],
    /// Rows with a moderate contribution per direction (>= h_f).
    pub moderate_idx: [Vec<usize>; 6],
    /// Rows with a high contribution per direction (>= h_u).
    pub high_idx: [Vec<usize>; 6],
    /// Frobenius norm of the rotation/translation coupling block;
    /// reported as a diagnostic, never used in the analysis.
    pub coupling_norm: f64,
    /// Threshold snapshot the categories were computed with.
    pub config: DetectionConfig,
}

/// Builds the 3x3 rotation and translation Hessian blocks from the
/// residual rows. Rotation rows are norm-capped first so both blocks share
/// a scale; the same capped rows feed the contribution vectors, which
/// keeps the column-sum/eigenvalue identity intact.
pub fn build_hessian_blocks(
    evals: &[ResidualEval],
) -> Result<(Matrix3<f64>, Matrix3<f64>), LocalizabilityError> {
    if evals.is_empty() {
        return Err(LocalizabilityError::EmptyConstraintSet);
    }
    let mut h_r = Matrix3::zeros();
    let mut h_t = Matrix3::zeros();
    for e in evals {
        let jr = normalize_rotation_jacobian(&e.j_rot);
        h_r += jr * jr.transpose();
        h_t += e.j_trans * e.j_trans.transpose();
    }
    Ok((h_r, h_t))
}

/// Eigen decomposition of a symmetric PSD 3x3, eigenvalues descending,
/// each eigenvector's largest-magnitude component made positive.
pub fn eigendecompose(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let cols: Vec<Vector3<f64>> = order
        .iter()
        .map(|&k| canonical_sign3(&eig.eigenvectors.column(k).into_owned()))
        .collect();
    (values, Matrix3::from_columns(&cols))
}

fn canonical_sign3(v: &Vector3<f64>) -> Vector3<f64> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        *v
    }
}

fn canonical_sign6(v: &Vector6<f64>) -> Vector6<f64> {
    let mut k = 0;
    for i in 1..6 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        *v
    }
}

/// Contribution of one correspondence along all six eigen directions.
pub fn contribution_vector(
    eval: &ResidualEval,
    basis: &EigenBasis,
    metric: ContributionMetric,
) -> [f64; 6] {
    let jr = normalize_rotation_jacobian(&eval.j_rot);
    let jt = eval.j_trans;
    let mut out = [0.0; 6];
    for j in 0..3 {
        let pr = jr.dot(&basis.rot_vectors.column(j));
        let pt = jt.dot(&basis.trans_vectors.column(j));
        match metric {
            ContributionMetric::Squared => {
                out[j] = pr * pr;
                out[j + 3] = pt * pt;
            }
            ContributionMetric::Absolute => {
                out[j] = pr.abs();
                out[j + 3] = pt.abs();
            }
        }
    }
    out
}

/// Output of the filtering/aggregation stage.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// F with sub-threshold entries zeroed (moderate contributions).
    pub f_moderate: ContributionMatrix,
    /// F restricted to entries at or above the high threshold.
    pub f_high: ContributionMatrix,
    pub l_f: [f64; 6],
    pub l_u: [f64; 6],
    pub moderate_idx: [Vec<usize>; 6],
    pub high_idx: [Vec<usize>; 6],
}

/// Zeroes noise entries (`F(i,j) < h_f`), extracts high entries
/// (`F(i,j) >= h_u`), and sums both per direction.
pub fn filter_and_aggregate(f: &ContributionMatrix, cfg: &DetectionConfig) -> FilterOutcome {
    let mut f_moderate = ContributionMatrix {
        rows: Vec::with_capacity(f.len()),
    };
    let mut f_high = ContributionMatrix {
        rows: Vec::with_capacity(f.len()),
    };
    let mut l_f = [0.0; 6];
    let mut l_u = [0.0; 6];
    let mut moderate_idx: [Vec<usize>; 6] = Default::default();
    let mut high_idx: [Vec<usize>; 6] = Default::default();
    for (i, row) in f.rows.iter().enumerate() {
        let mut mrow = [0.0; 6];
        let mut hrow = [0.0; 6];
        for j in 0..6 {
            if row[j] >= cfg.h_f {
                mrow[j] = row[j];
                l_f[j] += row[j];
                moderate_idx[j].push(i);
            }
            if row[j] >= cfg.h_u {
                hrow[j] = row[j];
                l_u[j] += row[j];
                high_idx[j].push(i);
            }
        }
        f_moderate.rows.push(mrow);
        f_high.rows.push(hrow);
    }
    FilterOutcome {
        f_moderate,
        f_high,
        l_f,
        l_u,
        moderate_idx,
        high_idx,
    }
}

/// Ternary rule, evaluated top-down:
/// Full when `L_f >= T1` or `L_u >= T2`;
/// Partial when `L_f >= T3` and `L_u >= T4`;
/// None otherwise.
pub fn categorize(l_f: &[f64; 6], l_u: &[f64; 6], cfg: &DetectionConfig) -> [Category; 6] {
    std::array::from_fn(|j| {
        if l_f[j] >= cfg.t1 || l_u[j] >= cfg.t2 {
            Category::Full
        } else if l_f[j] >= cfg.t3 && l_u[j] >= cfg.t4 {
            Category::Partial
        } else {
            Category::None
        }
    })
}

/// Full detection pass: Hessian blocks, eigen decomposition, contribution
/// matrix, filtering, categorization. Deterministic for a fixed input
/// order.
pub fn detect(
    evals: &[ResidualEval],
    cfg: &DetectionConfig,
) -> Result<LocalizabilityReport, LocalizabilityError> {
    cfg.validate()?;
    let (h_r, h_t) = build_hessian_blocks(evals)?;
    let (rot_values, rot_vectors) = eigendecompose(&h_r);
    let (trans_values, trans_vectors) = eigendecompose(&h_t);
    let basis = EigenBasis {
        rot_values,
        rot_vectors,
        trans_values,
        trans_vectors,
    };

    let mut coupling = Matrix3::zeros();
    for e in evals {
        let jr = normalize_rotation_jacobian(&e.j_rot);
        coupling += jr * e.j_trans.transpose();
    }

    let contributions = ContributionMatrix {
        rows: evals
            .iter()
            .map(|e| contribution_vector(e, &basis, cfg.metric))
            .collect(),
    };
    let outcome = filter_and_aggregate(&contributions, cfg);
    let categories = categorize(&outcome.l_f, &outcome.l_u, cfg);
    Ok(LocalizabilityReport {
        basis,
        contributions,
        l_f: outcome.l_f,
        l_u: outcome.l_u,
        categories,
        moderate_idx: outcome.moderate_idx,
        high_idx: outcome.high_idx,
        coupling_norm: coupling.norm(),
        config: *cfg,
    })
}

/// Eigenvalue-threshold degeneracy analysis of the full 6x6 Hessian.
#[derive(Debug, Clone)]
pub struct ZhangAnalysis {
    /// Eigenvalues, descending.
    pub eigenvalues: Vector6<f64>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: Matrix6<f64>,
    /// Direction j is degenerate when `eigenvalues[j] < threshold`.
    pub degenerate: [bool; 6],
    pub threshold: f64,
}

/// Flags directions whose Hessian eigenvalue falls below the threshold.
pub fn zhang_degeneracy(h: &Matrix6<f64>, threshold: f64) -> ZhangAnalysis {
    let eig = SymmetricEigen::new(*h);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vector6::zeros();
    let mut eigenvectors = Matrix6::zeros();
    for (slot, &k) in order.iter().enumerate() {
        eigenvalues[slot] = eig.eigenvalues[k];
        eigenvectors
            .column_mut(slot)
            .copy_from(&canonical_sign6(&eig.eigenvectors.column(k).into_owned()));
    }
    let degenerate = std::array::from_fn(|j| eigenvalues[j] < threshold);
    ZhangAnalysis {
        eigenvalues,
        eigenvectors,
        degenerate,
        threshold,
    }
}

/// One line-oriented record per registration, consumed by the experiment
/// harness. Field order is the emission order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizabilityRecord {
    pub scan: usize,
    pub eig_rot: [f64; 3],
    pub eig_trans: [f64; 3],
    pub l_f: [f64; 6],
    pub l_u: [f64; 6],
    pub categories: [String; 6],
}

impl LocalizabilityRecord {
    pub fn from_report(scan: usize, report: &LocalizabilityReport) -> Self {
        LocalizabilityRecord {
            scan,
            eig_rot: [
                report.basis.rot_values[0],
                report.basis.rot_values[1],
                report.basis.rot_values[2],
            ],
            eig_trans: [
                report.basis.trans_values[0],
                report.basis.trans_values[1],
                report.basis.trans_values[2],
            ],
            l_f: report.l_f,
            l_u: report.l_u,
            categories: std::array::from_fn(|j| report.categories[j].to_string()),
        }
    }
}
