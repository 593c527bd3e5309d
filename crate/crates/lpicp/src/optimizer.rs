//! Constrained Gauss-Newton registration.
//!
//! The outer loop re-matches correspondences, evaluates residual rows, and
//! solves for the pose update. On the first iteration the localizability
//! categories are computed and turned into constraints: partially
//! localizable directions get a weighted soft constraint whose target
//! comes from a small block-restricted ICP over their moderate
//! contributors, non-localizable directions get a hard zero-update
//! constraint enforced through Lagrange multipliers. The baseline
//! eigenvalue-threshold method with solution remapping shares the loop.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{find_correspondences, Correspondence, FeatureCloud, FeatureConfig, MapIndex};
use crate::geometry::Pose6D;
use crate::localizability::{
    block_of, detect, zhang_degeneracy, Block, Category, DetectionConfig, LocalizabilityError,
    LocalizabilityReport, ZhangAnalysis,
};
use crate::residuals::{evaluate, JacobianConvention, ResidualEval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("KKT system is singular")]
    SingularKkt,
    #[error("block Hessian rank deficient (condition number {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("constraint subset is empty")]
    EmptySubset,
    #[error(transparent)]
    Localizability(#[from] LocalizabilityError),
    #[error("invalid solver config: {what}")]
    InvalidConfig { what: &'static str },
}

/// Degeneracy-handling strategy for one registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Localizability detection with soft and hard constraints.
    #[default]
    LpIcp,
    /// Eigenvalue threshold on the full Hessian plus solution remapping.
    Zhang,
    /// Same pipeline as `LpIcp` with the absolute contribution metric.
    XIcpMetric,
    /// Plain Gauss-Newton, no degeneracy handling.
    NoHandling,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lpicp" => Ok(Method::LpIcp),
            "zhang" => Ok(Method::Zhang),
            "xicp" => Ok(Method::XIcpMetric),
            "none" => Ok(Method::NoHandling),
            other => Err(format!("unknown method '{other}' (expected lpicp|zhang|xicp|none)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::LpIcp => write!(f, "lpicp"),
            Method::Zhang => write!(f, "zhang"),
            Method::XIcpMetric => write!(f, "xicp"),
            Method::NoHandling => write!(f, "none"),
        }
    }
}

/// Solver tunables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Soft-constraint weight when the high-contribution sum is small.
    pub mu_low: f64,
    /// Soft-constraint weight when the high-contribution sum reaches `t5`.
    pub mu_high: f64,
    pub t5: f64,
    pub max_outer_iters: usize,
    /// Convergence threshold on the rotation step norm (rad).
    pub step_tol_rot: f64,
    /// Convergence threshold on the translation step norm (m).
    pub step_tol_trans: f64,
    /// Inner Gauss-Newton iterations for the constraint-value estimate.
    pub local_icp_iters: usize,
    /// Condition-number limit for the local 3x3 solves.
    pub local_cond_limit: f64,
    /// Condition-number limit above which uncovered weak directions of the
    /// full system are promoted to hard constraints.
    pub global_cond_limit: f64,
    /// Eigenvalue threshold for the baseline degeneracy flags.
    pub zhang_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu_low: 2.0,
            mu_high: 5.0,
            t5: 15.0,
            max_outer_iters: 30,
            step_tol_rot: 1e-4,
            step_tol_trans: 1e-4,
            local_icp_iters: 10,
            local_cond_limit: 1e8,
            global_cond_limit: 1e10,
            zhang_threshold: 50.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.mu_low > self.mu_high {
            return Err(OptimizerError::InvalidConfig {
                what: "mu_low must not exceed mu_high",
            });
        }
        if self.step_tol_rot <= 0.0 || self.step_tol_trans <= 0.0 {
            return Err(OptimizerError::InvalidConfig {
                what: "step tolerances must be positive",
            });
        }
        Ok(())
    }
}

/// Full registration configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub detection: DetectionConfig,
    pub solver: SolverConfig,
    pub convention: JacobianConvention,
    pub method: Method,
}

impl PipelineConfig {
    /// Detection and solver defaults appropriate for the chosen method.
    pub fn for_method(method: Method) -> Self {
        let detection = match method {
            Method::XIcpMetric => DetectionConfig::absolute_metric(),
            _ => DetectionConfig::default(),
        };
        PipelineConfig {
            method,
            detection,
            ..PipelineConfig::default()
        }
    }
}

/// A weighted penalty pulling the update's projection along `direction`
/// toward the projection of `target`.
#[derive(Debug, Clone)]
pub struct SoftConstraint {
    /// Lifted unit eigenvector; one 3-block is zero.
    pub direction: Vector6<f64>,
    /// Lifted constraint value (absolute target for the cumulative update
    /// relative to the initial estimate).
    pub target: Vector6<f64>,
    pub weight: f64,
    /// Which of the six directions this constraint came from.
    pub source: usize,
}

/// Events worth surfacing in the registration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConstraintEvent {
    /// A partial direction's local solve failed; direction demoted to a
    /// hard constraint.
    PartialDemoted { direction: usize, reason: String },
    /// A weak direction of the full system was not covered by the hard
    /// constraints and was promoted.
    WeakDirectionPromoted { direction: usize },
}

/// Embeds a 3-vector into the 6-D state: rotation block first.
pub fn lift(v: &Vector3<f64>, block: Block) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    match block {
        Block::Rotation => out.fixed_rows_mut::<3>(0).copy_from(v),
        Block::Translation => out.fixed_rows_mut::<3>(3).copy_from(v),
    }
    out
}

fn pose_block(pose: &Pose6D, block: Block) -> Vector3<f64> {
    match block {
        Block::Rotation => pose.rotation_angles(),
        Block::Translation => pose.translation(),
    }
}

fn add_to_block(pose: &Pose6D, block: Block, delta: &Vector3<f64>) -> Pose6D {
    let mut v = pose.as_vector();
    match block {
        Block::Rotation => {
            v[0] += delta[0];
            v[1] += delta[1];
            v[2] += delta[2];
        }
        Block::Translation => {
            v[3] += delta[0];
            v[4] += delta[1];
            v[5] += delta[2];
        }
    }
    Pose6D::from_vector(&v)
}

/// Gauss-Newton over a single 3-DOF block (rotation or translation) using
/// only the given correspondence subset. Returns the cumulative block
/// update from the starting pose; the caller projects it onto the
/// direction of interest.
pub fn local_icp(
    corrs: &[Correspondence],
    subset: &[usize],
    start: &Pose6D,
    block: Block,
    cfg: &SolverConfig,
    convention: JacobianConvention,
) -> Result<Vector3<f64>, OptimizerError> {
    if subset.is_empty() {
        return Err(OptimizerError::EmptySubset);
    }
    let mut pose = *start;
    for _ in 0..cfg.local_icp_iters {
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        let mut n_terms = 0usize;
        for &i in subset {
            let Some(e) = evaluate(&pose, &corrs[i], convention) else {
                continue;
            };
            let j = match block {
                Block::Rotation => e.j_rot,
                Block::Translation => e.j_trans,
            };
            h += j * j.transpose();
            g += j * e.value;
            n_terms += 1;
        }
        if n_terms == 0 {
            return Err(OptimizerError::EmptySubset);
        }
        let eig = SymmetricEigen::new(h);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min <= 0.0 || max / min > cfg.local_cond_limit {
            return Err(OptimizerError::RankDeficient {
                cond: if min > 0.0 { max / min } else { f64::INFINITY },
            });
        }
        let delta = -h
            .cholesky()
            .ok_or(OptimizerError::RankDeficient { cond: max / min })?
            .solve(&g);
        pose = add_to_block(&pose, block, &delta);
        if delta.norm() < 1e-10 {
            break;
        }
    }
    Ok(pose_block(&pose, block) - pose_block(start, block))
}

/// Builds the soft and hard constraints from the detection report.
///
/// Partial directions whose local solve fails (rank-deficient block or
/// empty subset) are demoted to hard constraints and the event is logged.
pub fn assemble_constraints(
    report: &LocalizabilityReport,
    corrs: &[Correspondence],
    pose: &Pose6D,
    cfg: &SolverConfig,
    convention: JacobianConvention,
) -> (Vec<SoftConstraint>, Vec<Vector6<f64>>, Vec<ConstraintEvent>) {
    let mut soft = Vec::new();
    let mut hard = Vec::new();
    let mut events = Vec::new();
    for j in 0..6 {
        let block = block_of(j);
        let v = report.basis.vector(j);
        match report.categories[j] {
            Category::Full => {}
            Category::None => hard.push(lift(&v, block)),
            Category::Partial => {
                match local_icp(corrs, &report.moderate_idx[j], pose, block, cfg, convention) {
                    Ok(delta) => {
                        let weight = if report.l_u[j] >= cfg.t5 {
                            cfg.mu_high
                        } else {
                            cfg.mu_low
                        };
                        soft.push(SoftConstraint {
                            direction: lift(&v, block),
                            target: lift(&delta, block),
                            weight,
                            source: j,
                        });
                    }
                    Err(err) => {
                        events.push(ConstraintEvent::PartialDemoted {
                            direction: j,
                            reason: err.to_string(),
                        });
                        hard.push(lift(&v, block));
                    }
                }
            }
        }
    }
    (soft, hard, events)
}

/// Solves the equality-constrained normal equations through the bordered
/// Lagrangian system, factored by column-pivoted QR:
///
/// ```text
/// [ H'  D^T ] [ dx ]   [ b ]
/// [ D   0   ] [ l  ] = [ 0 ]
/// ```
///
/// With no constraint rows this reduces to the plain Gauss-Newton step
/// `H' dx = b`.
pub fn solve_kkt(
    h_prime: &Matrix6<f64>,
    b: &Vector6<f64>,
    hard_rows: &[Vector6<f64>],
) -> Result<(Vector6<f64>, DVector<f64>), OptimizerError> {
    let k = hard_rows.len();
    let n = 6 + k;
    let mut kkt = DMatrix::zeros(n, n);
    for r in 0..6 {
        for c in 0..6 {
            kkt[(r, c)] = h_prime[(r, c)];
        }
    }
    for (i, row) in hard_rows.iter().enumerate() {
        for c in 0..6 {
            kkt[(6 + i, c)] = row[c];
            kkt[(c, 6 + i)] = row[c];
        }
    }
    let mut rhs = DVector::zeros(n);
    for r in 0..6 {
        rhs[r] = b[r];
    }
    let qr = kkt.clone().col_piv_qr();
    let sol = qr.solve(&rhs).ok_or(OptimizerError::SingularKkt)?;
    if !sol.iter().all(|x| x.is_finite()) {
        return Err(OptimizerError::SingularKkt);
    }
    let residual = (&kkt * &sol - &rhs).amax();
    if residual > 1e-6 * (1.0 + rhs.amax()) {
        return Err(OptimizerError::SingularKkt);
    }
    let dx = Vector6::from_iterator(sol.iter().take(6).copied());
    let lambda = DVector::from_iterator(k, sol.iter().skip(6).copied());
    Ok((dx, lambda))
}

/// Minimum-norm least-squares solve used by the remapping baseline; safe
/// on rank-deficient systems.
fn ls_solve(h: &Matrix6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    h.svd(true, true).solve(b, 1e-12).unwrap_or_else(|_| Vector6::zeros())
}

/// Projects the update onto the span of non-degenerate eigenvectors.
pub fn solution_remap(analysis: &ZhangAnalysis, dx: &Vector6<f64>) -> Vector6<f64> {
    let mut projector = Matrix6::zeros();
    for j in 0..6 {
        if !analysis.degenerate[j] {
            let v = analysis.eigenvectors.column(j);
            projector += v * v.transpose();
        }
    }
    projector * dx
}

/// Why a registration returned early.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RegisterFailure {
    /// Every feature failed to match; pose left at the initial estimate.
    NoCorrespondences,
    /// The constrained system could not be factored.
    SingularKkt,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub n_correspondences: usize,
    /// Data cost plus soft-constraint penalty, evaluated before the step.
    pub cost: f64,
    pub residual_rms: f64,
    pub step_rot: f64,
    pub step_trans: f64,
    pub categories: Option<[Category; 6]>,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub pose: Pose6D,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterationTrace>,
    pub report: Option<LocalizabilityReport>,
    pub zhang: Option<ZhangAnalysis>,
    /// Number of soft-constrained (partial) directions.
    pub n_soft: usize,
    /// Number of hard-constrained rows.
    pub n_hard: usize,
    /// Worst hard-constraint violation across accepted steps.
    pub max_constraint_violation: f64,
    pub events: Vec<ConstraintEvent>,
    pub failure: Option<RegisterFailure>,
}

/// Scan-to-map registration: iterates matching, evaluation, (first
/// iteration) localizability detection and constraint assembly, and the
/// constrained Gauss-Newton step until the step norms drop below the
/// configured tolerances.
pub fn register(
    features: &FeatureCloud,
    map: &MapIndex,
    x0: &Pose6D,
    cfg: &PipelineConfig,
) -> Result<RegistrationResult, OptimizerError> {
    cfg.solver.validate()?;
    cfg.detection.validate()?;

    let mut x = *x0;
    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut events: Vec<ConstraintEvent> = Vec::new();
    let mut soft: Vec<SoftConstraint> = Vec::new();
    let mut hard: Vec<Vector6<f64>> = Vec::new();
    let mut report: Option<LocalizabilityReport> = None;
    let mut zhang: Option<ZhangAnalysis> = None;
    let mut converged = false;
    let mut failure = None;
    let mut max_violation = 0.0_f64;

    for iteration in 0..cfg.solver.max_outer_iters {
        let all_corrs = find_correspondences(features, map, &x, &cfg.features);
        let mut corrs = Vec::with_capacity(all_corrs.len());
        let mut evals: Vec<ResidualEval> = Vec::with_capacity(all_corrs.len());
        for c in all_corrs {
            if let Some(e) = evaluate(&x, &c, cfg.convention) {
                corrs.push(c);
                evals.push(e);
            }
        }
        if evals.is_empty() {
            if iteration == 0 {
                x = *x0;
            }
            failure = Some(RegisterFailure::NoCorrespondences);
            break;
        }

        let mut h_data = Matrix6::zeros();
        let mut g_data = Vector6::zeros();
        let mut cost_data = 0.0;
        for e in &evals {
            let row = e.full_row();
            h_data += row * row.transpose();
            g_data += row * e.value;
            cost_data += e.value * e.value;
        }

        let detect_now = iteration == 0 || cfg.detection.detect_every_iteration;
        if detect_now {
            match cfg.method {
                Method::LpIcp | Method::XIcpMetric => {
                    let rep = detect(&evals, &cfg.detection)?;
                    let (s, mut h, ev) =
                        assemble_constraints(&rep, &corrs, &x, &cfg.solver, cfg.convention);
                    soft = s;
                    events.extend(ev);
                    promote_uncovered_weak_directions(
                        &h_data,
                        &soft,
                        &mut h,
                        cfg.solver.global_cond_limit,
                        &mut events,
                    );
                    hard = h;
                    report = Some(rep);
                }
                Method::Zhang => {
                    zhang = Some(zhang_degeneracy(&h_data, cfg.solver.zhang_threshold));
                }
                Method::NoHandling => {}
            }
        }

        let cumulative = x.as_vector() - x0.as_vector();
        let mut h_prime = 2.0 * h_data;
        let mut b = -2.0 * g_data;
        let mut cost_soft = 0.0;
        for sc in &soft {
            let outer = sc.direction * sc.direction.transpose();
            h_prime += 2.0 * sc.weight * outer;
            // The stored target is absolute w.r.t. x0; each iteration aims
            // at what remains of it.
            let remaining = sc.target - cumulative;
            b += 2.0 * sc.weight * outer * remaining;
            let gap = sc.direction.dot(&cumulative) - sc.direction.dot(&sc.target);
            cost_soft += sc.weight * gap * gap;
        }

        let dx = match cfg.method {
            Method::Zhang => {
                let unconstrained = ls_solve(&h_prime, &b);
                match &zhang {
                    Some(analysis) => solution_remap(analysis, &unconstrained),
                    None => unconstrained,
                }
            }
            _ => match solve_kkt(&h_prime, &b, &hard) {
                Ok((dx, _)) => dx,
                Err(OptimizerError::SingularKkt) => {
                    failure = Some(RegisterFailure::SingularKkt);
                    break;
                }
                Err(other) => return Err(other),
            },
        };

        for row in &hard {
            max_violation = max_violation.max(row.dot(&dx).abs());
        }

        x = x.plus(&dx);
        let step_rot = dx.fixed_rows::<3>(0).norm();
        let step_trans = dx.fixed_rows::<3>(3).norm();
        trace.push(IterationTrace {
            iteration,
            n_correspondences: evals.len(),
            cost: cost_data + cost_soft,
            residual_rms: (cost_data / evals.len() as f64).sqrt(),
            step_rot,
            step_trans,
            categories: report.as_ref().map(|r| r.categories),
        });

        if step_rot < cfg.solver.step_tol_rot && step_trans < cfg.solver.step_tol_trans {
            converged = true;
            break;
        }
    }

    Ok(RegistrationResult {
        pose: x,
        converged,
        iterations: trace.len(),
        trace,
        report,
        zhang,
        n_soft: soft.len(),
        n_hard: hard.len(),
        max_constraint_violation: max_violation,
        events,
        failure,
    })
}

/// Weak directions of the soft-augmented system that are not already
/// spanned by the hard rows get promoted to hard constraints; prevents
/// numerically meaningless steps when thresholds misclassify.
fn promote_uncovered_weak_directions(
    h_data: &Matrix6<f64>,
    soft: &[SoftConstraint],
    hard: &mut Vec<Vector6<f64>>,
    cond_limit: f64,
    events: &mut Vec<ConstraintEvent>,
) {
    let mut h_prime = 2.0 * h_data;
    for sc in soft {
        h_prime += 2.0 * sc.weight * (sc.direction * sc.direction.transpose());
    }
    let eig = SymmetricEigen::new(h_prime);
    let max = eig.eigenvalues.max();
    if max <= 0.0 {
        return;
    }
    for j in 0..6 {
        if eig.eigenvalues[j] >= max / cond_limit {
            continue;
        }
        let w = eig.eigenvectors.column(j).into_owned();
        // Residual of w against the span of the current hard rows.
        let mut residual = w;
        for row in hard.iter() {
            residual -= row.dot(&residual) * row;
        }
        if residual.norm() > 0.5 {
            hard.push(residual.normalize());
            events.push(ConstraintEvent::WeakDirectionPromoted { direction: j });
        }
    }
}
