//! Feature extraction (edge / planar points) and scan-to-map
//! correspondence search.
//!
//! Organized scans (with ring indices) are classified by a smoothness
//! metric over ring neighborhoods; unorganized clouds fall back to
//! covariance shape analysis of k-NN neighborhoods. Correspondences match
//! edge points to lines fitted in the edge map and planar points to planes
//! fitted in the planar map.

mod fitting;
mod kdtree;

pub use fitting::{fit_line, fit_plane};
pub use kdtree::{Neighbor, SpatialIndex};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unit_rejection, LineModel, PlaneModel, Point3, PointCloud, Pose6D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("scan cloud is empty")]
    EmptyScan,
    #[error("map cloud is empty")]
    EmptyMap,
    #[error("requested {requested} points but only {available} available")]
    TooFewPoints { requested: usize, available: usize },
    #[error("degenerate fit: {what}")]
    DegenerateFit { what: &'static str },
    #[error("cloud has no ring indices and unorganized-cloud mode is disabled")]
    UnorganizedUnsupported,
    #[error("invalid feature config: {what}")]
    InvalidConfig { what: &'static str },
}

/// Tunables for extraction, fitting and matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Ring-mode smoothness window: neighbors taken on each side.
    pub curvature_half_window: usize,
    /// Ring-mode curvature at or above which a point is an edge candidate.
    pub edge_curvature_min: f64,
    /// Ring-mode curvature at or below which a point is a planar candidate.
    pub planar_curvature_max: f64,
    /// Azimuth sectors per ring used to spread picked features.
    pub sectors_per_ring: usize,
    pub max_edge_per_sector: usize,
    pub max_planar_per_sector: usize,
    /// Neighbors on each side suppressed around a picked feature. Kept at
    /// the window size so curvature spill-over from a crease kink cannot
    /// promote its window tails to extra edge picks.
    pub picked_neighbor_gap: usize,
    /// Consecutive ring samples farther apart than this fraction of the
    /// local range start a new segment; curvature windows never span
    /// segment breaks (range discontinuities at surface borders).
    pub ring_break_rel: f64,
    /// Candidates whose local polyline direction is closer to the beam
    /// direction than this cosine are on near-grazing surfaces and are
    /// discarded; their apparent curvature is a sampling artifact.
    pub grazing_cos_max: f64,
    /// Permit classification of clouds without ring metadata.
    pub allow_unorganized: bool,
    /// Cross-check ring-mode planar candidates with the covariance
    /// planarity test; rejects crease-adjacent points whose ring runs
    /// parallel to the fold and therefore looks smooth.
    pub planar_variation_gate: bool,
    /// Neighborhood size for covariance-based classification.
    pub knn_classify: usize,
    /// Surface variation (min eigenvalue / trace) at or above which an
    /// unorganized point is an edge candidate.
    pub edge_variation_min: f64,
    /// Surface variation at or below which it is a planar candidate.
    pub planar_variation_max: f64,
    /// Neighborhood linearity `(l1 - l2) / l1` at or above which an
    /// unorganized point is an edge candidate regardless of variation;
    /// catches samples lying along fold lines.
    pub edge_linearity_min: f64,
    /// Neighbors used for line fits.
    pub k_line: usize,
    /// Principal/secondary eigenvalue ratio required to accept a line.
    pub line_ratio: f64,
    /// Neighbors used for plane fits.
    pub k_plane: usize,
    /// Max out-of-plane distance (m) tolerated by a plane fit.
    pub plane_tol: f64,
    /// Max nearest-neighbor distance (m) for a valid correspondence.
    pub max_corr_dist: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            curvature_half_window: 5,
            edge_curvature_min: 0.012,
            planar_curvature_max: 0.005,
            sectors_per_ring: 6,
            max_edge_per_sector: 4,
            max_planar_per_sector: 10,
            picked_neighbor_gap: 5,
            ring_break_rel: 0.1,
            grazing_cos_max: 0.85,
            allow_unorganized: true,
            planar_variation_gate: true,
            knn_classify: 12,
            edge_variation_min: 0.03,
            planar_variation_max: 0.01,
            edge_linearity_min: 0.9,
            k_line: 5,
            line_ratio: 3.0,
            k_plane: 5,
            plane_tol: 0.2,
            max_corr_dist: 1.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.edge_curvature_min <= self.planar_curvature_max {
            return Err(FeatureError::InvalidConfig {
                what: "edge_curvature_min must exceed planar_curvature_max",
            });
        }
        if self.edge_variation_min <= self.planar_variation_max {
            return Err(FeatureError::InvalidConfig {
                what: "edge_variation_min must exceed planar_variation_max",
            });
        }
        if self.curvature_half_window == 0 || self.sectors_per_ring == 0 {
            return Err(FeatureError::InvalidConfig {
                what: "window and sector counts must be positive",
            });
        }
        if self.k_line < 2 || self.k_plane < 3 {
            return Err(FeatureError::InvalidConfig {
                what: "fit neighbor counts too small",
            });
        }
        Ok(())
    }
}

/// Extracted feature points, in scan-frame coordinates.
#[derive(Debug, Clone, Default)]
pub struct FeatureCloud {
    pub edge_points: Vec<Point3>,
    pub planar_points: Vec<Point3>,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.edge_points.len() + self.planar_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An edge point matched to a map line.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCorrespondence {
    /// Feature point in the scan frame.
    pub p_scan: Point3,
    /// The same point transformed into the map frame at match time.
    pub p_map: Point3,
    pub line: LineModel,
    /// Unit vector from the line to `p_map` (perpendicular to the line).
    pub dist_dir: Vector3<f64>,
}

/// A planar point matched to a map plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarCorrespondence {
    pub p_scan: Point3,
    pub p_map: Point3,
    pub plane: PlaneModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Correspondence {
    Edge(EdgeCorrespondence),
    Planar(PlanarCorrespondence),
}

impl Correspondence {
    pub fn p_scan(&self) -> &Point3 {
        match self {
            Correspondence::Edge(e) => &e.p_scan,
            Correspondence::Planar(p) => &p.p_scan,
        }
    }

    pub fn is_edge(&self) -> bool {
        matches!(self, Correspondence::Edge(_))
    }
}

/// Classifies every scan point as edge, planar, or discarded.
///
/// Clouds with ring metadata use the ring smoothness path; other clouds
/// use k-NN covariance shape analysis when `allow_unorganized` is set.
pub fn extract_features(scan: &PointCloud, cfg: &FeatureConfig) -> Result<FeatureCloud, FeatureError> {
    if scan.is_empty() {
        return Err(FeatureError::EmptyScan);
    }
    cfg.validate()?;
    match &scan.ring {
        Some(rings) => Ok(extract_ring_mode(&scan.points, rings, cfg)),
        None if cfg.allow_unorganized => extract_unorganized(&scan.points, cfg),
        None => Err(FeatureError::UnorganizedUnsupported),
    }
}

/// k-NN covariance shape descriptors: surface variation (smallest
/// eigenvalue over the trace) and linearity (`(l1 - l2) / l1`).
fn neighborhood_shape(index: &SpatialIndex, p: &Point3, k: usize) -> Option<(f64, f64)> {
    let neighbors = index.knn(p, k).ok()?;
    let n = neighbors.len() as f64;
    if neighbors.len() < 4 {
        return None;
    }
    let mut centroid = Vector3::zeros();
    for nb in &neighbors {
        centroid += index.point(nb.index);
    }
    centroid /= n;
    let mut cov = nalgebra::Matrix3::zeros();
    for nb in &neighbors {
        let d = index.point(nb.index) - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let (values, _) = fitting::sorted_symmetric_eigen(&cov);
    let trace = values.sum();
    if trace <= 1e-18 || values[0] <= 0.0 {
        return None;
    }
    Some((values[2] / trace, (values[0] - values[1]) / values[0]))
}

/// Smoothness window curvature: `||sum_w (p_j - p_i)|| / (|w| * ||p_i||)`.
/// High curvature marks low local smoothness (edges); low curvature marks
/// smooth surface patches (planar points). The window must lie entirely
/// inside one contiguous segment.
fn ring_curvature(
    points: &[Point3],
    ring: &[usize],
    segment: &[u32],
    pos: usize,
    half: usize,
) -> Option<f64> {
    if pos < half || pos + half >= ring.len() {
        return None;
    }
    if segment[pos - half] != segment[pos + half] {
        return None;
    }
    let p_i = points[ring[pos]];
    let range = p_i.norm();
    if range < 1e-9 {
        return None;
    }
    let mut acc = Vector3::zeros();
    for k in 1..=half {
        acc += points[ring[pos - k]] - p_i;
        acc += points[ring[pos + k]] - p_i;
    }
    Some(acc.norm() / ((2 * half) as f64 * range))
}

/// True when the local polyline direction at `pos` nearly coincides with
/// the viewing ray: the beam grazes the surface and neighboring samples
/// slide along the ray, which fakes curvature.
fn is_grazing(
    points: &[Point3],
    ring: &[usize],
    segment: &[u32],
    pos: usize,
    cos_max: f64,
) -> bool {
    if pos == 0 || pos + 1 >= ring.len() || segment[pos - 1] != segment[pos + 1] {
        return false;
    }
    let prev = points[ring[pos - 1]];
    let next = points[ring[pos + 1]];
    let p = points[ring[pos]];
    let dir = next - prev;
    let range = p.norm();
    if range < 1e-9 || dir.norm() < 1e-12 {
        return false;
    }
    (dir.normalize().dot(&(p / range))).abs() > cos_max
}

/// Splits a ring at range discontinuities: a gap between consecutive
/// samples larger than `rel` times the local range starts a new segment.
fn ring_segments(points: &[Point3], ring: &[usize], rel: f64) -> Vec<u32> {
    let mut segment = vec![0u32; ring.len()];
    let mut current = 0u32;
    for pos in 1..ring.len() {
        let a = points[ring[pos - 1]];
        let b = points[ring[pos]];
        let limit = rel * a.norm().min(b.norm()).max(1e-9);
        if (b - a).norm() > limit {
            current += 1;
        }
        segment[pos] = current;
    }
    segment
}

fn extract_ring_mode(points: &[Point3], rings: &[u32], cfg: &FeatureConfig) -> FeatureCloud {
    let max_ring = rings.iter().copied().max().unwrap_or(0) as usize;
    let mut by_ring: Vec<Vec<usize>> = vec![Vec::new(); max_ring + 1];
    for (i, &r) in rings.iter().enumerate() {
        by_ring[r as usize].push(i);
    }

    // Lazily built full-scan index for the planarity cross-check.
    let gate_index = if cfg.planar_variation_gate && points.len() >= cfg.knn_classify.max(4) {
        SpatialIndex::build(&PointCloud::new(points.to_vec())).ok()
    } else {
        None
    };
    let planar_ok = |p: &Point3| -> bool {
        match &gate_index {
            Some(index) => neighborhood_shape(index, p, cfg.knn_classify)
                .map(|(variation, _)| variation <= cfg.planar_variation_max)
                .unwrap_or(true),
            None => true,
        }
    };

    let mut edges = Vec::new();
    let mut planars = Vec::new();
    for ring in &by_ring {
        let half = cfg.curvature_half_window;
        if ring.len() < 2 * half + 1 {
            continue; // too few neighbors anywhere on this ring
        }
        let segment = ring_segments(points, ring, cfg.ring_break_rel);
        let curvature: Vec<Option<f64>> = (0..ring.len())
            .map(|pos| {
                let c = ring_curvature(points, ring, &segment, pos, half)?;
                if is_grazing(points, ring, &segment, pos, cfg.grazing_cos_max) {
                    return None;
                }
                Some(c)
            })
            .collect();

        let sectors = cfg.sectors_per_ring;
        let mut suppressed = vec![false; ring.len()];
        for s in 0..sectors {
            let lo = s * ring.len() / sectors;
            let hi = (s + 1) * ring.len() / sectors;
            let mut candidates: Vec<usize> =
                (lo..hi).filter(|&pos| curvature[pos].is_some()).collect();

            // Edge picks: highest curvature first.
            candidates.sort_by(|&a, &b| {
                curvature[b]
                    .unwrap()
                    .total_cmp(&curvature[a].unwrap())
                    .then(a.cmp(&b))
            });
            let mut picked_edges = 0;
            for &pos in &candidates {
                if picked_edges >= cfg.max_edge_per_sector {
                    break;
                }
                let c = curvature[pos].unwrap();
                if c < cfg.edge_curvature_min {
                    break;
                }
                if suppressed[pos] {
                    continue;
                }
                edges.push(points[ring[pos]]);
                picked_edges += 1;
                mark_suppressed(&mut suppressed, pos, cfg.picked_neighbor_gap);
            }

            // Planar picks: lowest curvature first.
            candidates.reverse();
            let mut picked_planar = 0;
            for &pos in &candidates {
                if picked_planar >= cfg.max_planar_per_sector {
                    break;
                }
                let c = curvature[pos].unwrap();
                if c > cfg.planar_curvature_max {
                    break;
                }
                if suppressed[pos] {
                    continue;
                }
                if !planar_ok(&points[ring[pos]]) {
                    continue;
                }
                planars.push(points[ring[pos]]);
                picked_planar += 1;
                mark_suppressed(&mut suppressed, pos, cfg.picked_neighbor_gap);
            }
        }
    }
    FeatureCloud {
        edge_points: edges,
        planar_points: planars,
    }
}

fn mark_suppressed(suppressed: &mut [bool], pos: usize, gap: usize) {
    let lo = pos.saturating_sub(gap);
    let hi = (pos + gap).min(suppressed.len() - 1);
    for s in suppressed.iter_mut().take(hi + 1).skip(lo) {
        *s = true;
    }
}

/// Unorganized clouds: surface variation (smallest covariance eigenvalue
/// over the trace) of the k-NN neighborhood separates creases from flats.
fn extract_unorganized(points: &[Point3], cfg: &FeatureConfig) -> Result<FeatureCloud, FeatureError> {
    let index = SpatialIndex::build(&PointCloud::new(points.to_vec()))
        .map_err(|_| FeatureError::EmptyScan)?;
    let k = cfg.knn_classify.min(points.len());
    let mut edges = Vec::new();
    let mut planars = Vec::new();
    if k < 4 {
        return Ok(FeatureCloud::default()); // nothing classifiable
    }
    for p in points {
        let Some((variation, linearity)) = neighborhood_shape(&index, p, k) else {
            continue;
        };
        if variation >= cfg.edge_variation_min || linearity >= cfg.edge_linearity_min {
            edges.push(*p);
        } else if variation <= cfg.planar_variation_max {
            planars.push(*p);
        }
    }
    Ok(FeatureCloud {
        edge_points: edges,
        planar_points: planars,
    })
}

/// Feature-split map indexes: edge points and planar points are indexed
/// separately so lines are fitted among edge points only and planes among
/// planar points only.
#[derive(Debug, Clone)]
pub struct MapIndex {
    pub edge: Option<SpatialIndex>,
    pub planar: Option<SpatialIndex>,
}

impl MapIndex {
    /// Classifies the map cloud and builds one index per feature class.
    pub fn build(map: &PointCloud, cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        if map.is_empty() {
            return Err(FeatureError::EmptyMap);
        }
        let features = extract_features(map, cfg)?;
        Ok(MapIndex::from_features(&features))
    }

    pub fn from_features(features: &FeatureCloud) -> Self {
        let edge = if features.edge_points.is_empty() {
            None
        } else {
            SpatialIndex::build(&PointCloud::new(features.edge_points.clone())).ok()
        };
        let planar = if features.planar_points.is_empty() {
            None
        } else {
            SpatialIndex::build(&PointCloud::new(features.planar_points.clone())).ok()
        };
        MapIndex { edge, planar }
    }
}

/// Matches every feature point against the map at the given pose.
///
/// A feature yields no correspondence when its nearest map neighbor is
/// farther than `max_corr_dist`, when the model fit is degenerate, or (edge
/// kind) when the transformed point lies on the fitted line and the
/// distance direction is undefined. A feature closer to the opposite
/// class's map points than to its own sits in the ambiguous band around a
/// fold and is skipped as well. Output order: edge correspondences in
/// input order, then planar correspondences in input order.
pub fn find_correspondences(
    features: &FeatureCloud,
    map: &MapIndex,
    pose: &Pose6D,
    cfg: &FeatureConfig,
) -> Vec<Correspondence> {
    let mut out = Vec::with_capacity(features.len());
    let max_d2 = cfg.max_corr_dist * cfg.max_corr_dist;
    let nearest_d2 = |index: &Option<SpatialIndex>, p: &Point3| -> Option<f64> {
        index
            .as_ref()
            .and_then(|i| i.knn(p, 1).ok())
            .map(|n| n[0].dist2)
    };

    if let Some(edge_index) = &map.edge {
        for p_scan in &features.edge_points {
            let p_map = pose.transform_point(p_scan);
            let Ok(neighbors) = edge_index.knn(&p_map, cfg.k_line) else {
                continue;
            };
            if neighbors[0].dist2 > max_d2 {
                continue;
            }
            if let Some(planar_d2) = nearest_d2(&map.planar, &p_map) {
                if planar_d2 < neighbors[0].dist2 {
                    continue;
                }
            }
            let pts: Vec<Point3> = neighbors.iter().map(|n| *edge_index.point(n.index)).collect();
            let Ok(line) = fit_line(&pts, cfg.k_line, cfg.line_ratio) else {
                continue;
            };
            let Some(dist_dir) = unit_rejection(&(p_map - line.anchor), &line.direction) else {
                continue; // zero-residual edge point: direction undefined
            };
            out.push(Correspondence::Edge(EdgeCorrespondence {
                p_scan: *p_scan,
                p_map,
                line,
                dist_dir,
            }));
        }
    }

    if let Some(planar_index) = &map.planar {
        for p_scan in &features.planar_points {
            let p_map = pose.transform_point(p_scan);
            let Ok(neighbors) = planar_index.knn(&p_map, cfg.k_plane) else {
                continue;
            };
            if neighbors[0].dist2 > max_d2 {
                continue;
            }
            if let Some(edge_d2) = nearest_d2(&map.edge, &p_map) {
                if edge_d2 < neighbors[0].dist2 {
                    continue;
                }
            }
            let pts: Vec<Point3> = neighbors
                .iter()
                .map(|n| *planar_index.point(n.index))
                .collect();
            let Ok(plane) = fit_plane(&pts, cfg.k_plane, cfg.plane_tol) else {
                continue;
            };
            out.push(Correspondence::Planar(PlanarCorrespondence {
                p_scan: *p_scan,
                p_map,
                plane,
            }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn flat_plane_cloud(n_side: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                pts.push(Vector3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn flat_plane_yields_no_edges() {
        let cloud = flat_plane_cloud(30, 0.1);
        let cfg = FeatureConfig::default();
        let features = extract_features(&cloud, &cfg).unwrap();
        assert!(features.edge_points.is_empty());
        assert!(!features.planar_points.is_empty());
    }

    #[test]
    fn dihedral_crease_concentrates_edges_near_the_fold() {
        // Two perpendicular half-planes meeting along the y axis.
        let mut pts = Vec::new();
        let spacing = 0.05;
        for i in 0..40 {
            for j in 0..40 {
                let (s, t) = (i as f64 * spacing, j as f64 * spacing);
                pts.push(Vector3::new(s, t, 0.0)); // floor
                pts.push(Vector3::new(0.0, t, s)); // wall, shares the crease x=0,z=0
            }
        }
        let cloud = PointCloud::new(pts);
        let cfg = FeatureConfig::default();
        let features = extract_features(&cloud, &cfg).unwrap();
        assert!(!features.edge_points.is_empty());
        // Analytic distance to the crease line (the y axis).
        let band = 4.0 * spacing;
        for e in &features.edge_points {
            let dist = (e.x * e.x + e.z * e.z).sqrt();
            assert!(dist <= band, "edge point {e:?} is {dist} m from the crease");
        }
        // Planar points exist on both faces away from the crease.
        assert!(features.planar_points.len() > 100);
    }

    #[test]
    fn collinear_ring_classifies_interior_as_planar() {
        // Ten collinear points with a five-point window (two per side),
        // seen broadside so the beam does not graze the line.
        let pts: Vec<Point3> = (0..10)
            .map(|i| Vector3::new(2.0, -0.25 + i as f64 * 0.05, 0.0))
            .collect();
        let cloud = PointCloud::with_rings(pts, vec![0; 10]);
        let cfg = FeatureConfig {
            curvature_half_window: 2,
            max_planar_per_sector: 10,
            picked_neighbor_gap: 0,
            sectors_per_ring: 1,
            ..FeatureConfig::default()
        };
        let features = extract_features(&cloud, &cfg).unwrap();
        assert!(features.edge_points.is_empty());
        assert_eq!(features.planar_points.len(), 6); // interior positions 2..=7
    }

    #[test]
    fn empty_scan_is_an_error() {
        assert!(matches!(
            extract_features(&PointCloud::default(), &FeatureConfig::default()),
            Err(FeatureError::EmptyScan)
        ));
    }

    #[test]
    fn unorganized_mode_gate() {
        let cloud = flat_plane_cloud(10, 0.1);
        let cfg = FeatureConfig {
            allow_unorganized: false,
            ..FeatureConfig::default()
        };
        assert!(matches!(
            extract_features(&cloud, &cfg),
            Err(FeatureError::UnorganizedUnsupported)
        ));
    }

    #[test]
    fn plane_scene_correspondences_have_z_normals() {
        let map = flat_plane_cloud(40, 0.1);
        let cfg = FeatureConfig::default();
        let index = MapIndex::build(&map, &cfg).unwrap();
        assert!(index.edge.is_none());
        let scan = FeatureCloud {
            edge_points: vec![],
            planar_points: vec![
                Vector3::new(1.0, 1.0, 0.02),
                Vector3::new(2.0, 1.5, -0.03),
                Vector3::new(1.3, 2.2, 0.0),
            ],
        };
        let corrs = find_correspondences(&scan, &index, &Pose6D::IDENTITY, &cfg);
        assert_eq!(corrs.len(), 3);
        for c in &corrs {
            match c {
                Correspondence::Planar(p) => {
                    assert!(p.plane.normal.dot(&Vector3::z()).abs() > 1.0 - 1e-9);
                }
                _ => panic!("expected planar correspondence"),
            }
        }
    }

    #[test]
    fn edge_point_on_map_line_is_skipped() {
        // Edge map: a dense straight line along x. A query point exactly on
        // the line has an undefined distance direction and must be dropped.
        let line_pts: Vec<Point3> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let index = MapIndex::from_features(&FeatureCloud {
            edge_points: line_pts,
            planar_points: vec![],
        });
        let cfg = FeatureConfig::default();
        let on_line = FeatureCloud {
            edge_points: vec![Vector3::new(2.05, 0.0, 0.0)],
            planar_points: vec![],
        };
        assert!(find_correspondences(&on_line, &index, &Pose6D::IDENTITY, &cfg).is_empty());
        let off_line = FeatureCloud {
            edge_points: vec![Vector3::new(2.05, 0.2, 0.0)],
            planar_points: vec![],
        };
        let corrs = find_correspondences(&off_line, &index, &Pose6D::IDENTITY, &cfg);
        assert_eq!(corrs.len(), 1);
        match &corrs[0] {
            Correspondence::Edge(e) => {
                assert!(e.dist_dir.dot(&e.line.direction).abs() < 1e-6);
                assert!((e.dist_dir.norm() - 1.0).abs() < 1e-9);
            }
            _ => panic!("expected edge correspondence"),
        }
    }

    #[test]
    fn matching_agrees_with_brute_force_matcher() {
        // Correspondence counts per wall must match an O(N*M) matcher that
        // rebuilds the same fits from brute-force neighbor sets.
        let mut rng = StdRng::seed_from_u64(53);
        let mut map_pts = Vec::new();
        for _ in 0..800 {
            // Two walls: y = 0 and y = 2.
            let wall = rng.gen_range(0..2);
            map_pts.push(Vector3::new(
                rng.gen_range(0.0..8.0),
                wall as f64 * 2.0,
                rng.gen_range(0.0..2.0),
            ));
        }
        let cfg = FeatureConfig::default();
        let features = FeatureCloud {
            edge_points: vec![],
            planar_points: map_pts.clone(),
        };
        let index = MapIndex::from_features(&features);
        let scan = FeatureCloud {
            edge_points: vec![],
            planar_points: (0..60)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(0.0..8.0),
                        if rng.gen_bool(0.5) { 0.05 } else { 1.95 },
                        rng.gen_range(0.0..2.0),
                    )
                })
                .collect(),
        };
        let fast = find_correspondences(&scan, &index, &Pose6D::IDENTITY, &cfg);

        // Brute-force reference path.
        let mut slow = 0usize;
        for p in &scan.planar_points {
            let mut neighbors: Vec<(usize, f64)> = map_pts
                .iter()
                .enumerate()
                .map(|(i, q)| (i, (p - q).norm_squared()))
                .collect();
            neighbors.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if neighbors[0].1 > cfg.max_corr_dist * cfg.max_corr_dist {
                continue;
            }
            let pts: Vec<Point3> = neighbors[..cfg.k_plane].iter().map(|&(i, _)| map_pts[i]).collect();
            if fit_plane(&pts, cfg.k_plane, cfg.plane_tol).is_ok() {
                slow += 1;
            }
        }
        assert_eq!(fast.len(), slow);
    }

    #[test]
    fn map_permutation_changes_nothing_but_tie_breaks() {
        let mut rng = StdRng::seed_from_u64(59);
        let pts: Vec<Point3> = (0..300)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(0.0..5.0),
                    rng.gen_range(0.0..5.0),
                    0.001 * rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let features = FeatureCloud {
            edge_points: vec![],
            planar_points: pts.clone(),
        };
        let index1 = MapIndex::from_features(&features);
        let mut shuffled = pts.clone();
        shuffled.reverse();
        let index2 = MapIndex::from_features(&FeatureCloud {
            edge_points: vec![],
            planar_points: shuffled,
        });
        let cfg = FeatureConfig::default();
        let scan = FeatureCloud {
            edge_points: vec![],
            planar_points: (0..30)
                .map(|_| Vector3::new(rng.gen_range(0.5..4.5), rng.gen_range(0.5..4.5), 0.0))
                .collect(),
        };
        let a = find_correspondences(&scan, &index1, &Pose6D::IDENTITY, &cfg);
        let b = find_correspondences(&scan, &index2, &Pose6D::IDENTITY, &cfg);
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.iter().zip(&b) {
            match (ca, cb) {
                (Correspondence::Planar(pa), Correspondence::Planar(pb)) => {
                    // Same fitted plane up to normal sign.
                    assert!((pa.plane.normal.dot(&pb.plane.normal)).abs() > 1.0 - 1e-9);
                    assert!((pa.plane.anchor - pb.plane.anchor).norm() < 1e-9);
                }
                _ => panic!("kind mismatch"),
            }
        }
    }
}
