//! Static k-d tree for exact k-nearest-neighbor queries on 3-D points.
//!
//! Built once over an immutable cloud; ties in distance are broken by the
//! lower point index so queries are fully deterministic.

use crate::geometry::{Point3, PointCloud};

use super::FeatureError;

/// Immutable spatial index over one point cloud.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    /// Point indices arranged so the median of every subrange is its root.
    tree: Vec<u32>,
}

/// One k-NN result: point index and squared distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self, FeatureError> {
        if cloud.is_empty() {
            return Err(FeatureError::EmptyMap);
        }
        let points = cloud.points.clone();
        let mut tree: Vec<u32> = (0..points.len() as u32).collect();
        build_range(&points, &mut tree, 0, 0);
        Ok(SpatialIndex { points, tree })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Point3 {
        &self.points[index]
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `k` nearest points to `query` by Euclidean distance, closest
    /// first; equal distances are ordered by point index.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<Neighbor>, FeatureError> {
        if k > self.points.len() {
            return Err(FeatureError::TooFewPoints {
                requested: k,
                available: self.points.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        self.search(query, k, 0, self.tree.len(), 0, &mut best);
        Ok(best)
    }

    fn search(
        &self,
        query: &Point3,
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Vec<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let index = self.tree[mid] as usize;
        let p = &self.points[index];
        let dist2 = (query - p).norm_squared();
        insert_candidate(best, k, Neighbor { index, dist2 });

        let axis = depth % 3;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, k, near.0, near.1, depth + 1, best);
        // The far half can still hold a winner when the splitting plane is
        // within (or exactly at, for index tie-breaks) the current worst.
        if best.len() < k || delta * delta <= best[best.len() - 1].dist2 {
            self.search(query, k, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_range(points: &[Point3], tree: &mut [u32], offset: usize, depth: usize) {
    let _ = offset;
    if tree.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = tree.len() / 2;
    tree.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, rest) = tree.split_at_mut(mid);
    build_range(points, left, offset, depth + 1);
    build_range(points, &mut rest[1..], offset + mid + 1, depth + 1);
}

fn insert_candidate(best: &mut Vec<Neighbor>, k: usize, cand: Neighbor) {
    let pos = best
        .binary_search_by(|n| {
            n.dist2
                .total_cmp(&cand.dist2)
                .then(n.index.cmp(&cand.index))
        })
        .unwrap_or_else(|e| e);
    if pos < k {
        best.insert(pos, cand);
        best.truncate(k);
    }
}
