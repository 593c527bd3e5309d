//! Localizability-aware point cloud registration.
//!
//! Scan-to-map ICP combining point-to-line and point-to-plane metrics,
//! with per-correspondence localizability analysis in the rotation and
//! translation eigenspaces and a Gauss-Newton solver that adds soft and
//! hard constraints along weakly constrained directions.

pub mod features;
pub mod geometry;
pub mod localizability;
pub mod optimizer;
pub mod residuals;

pub use features::{
    extract_features, find_correspondences, Correspondence, FeatureCloud, FeatureConfig,
    FeatureError, MapIndex, SpatialIndex,
};
pub use geometry::{Point3, PointCloud, Pose6D};
pub use localizability::{detect, Category, DetectionConfig, LocalizabilityReport};
pub use optimizer::{register, Method, PipelineConfig, RegistrationResult, SolverConfig};
pub use residuals::{JacobianConvention, ResidualEval};
