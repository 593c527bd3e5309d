//! Experiment harness for the registration library: synthetic scenes,
//! LiDAR scan simulation, trajectory runs with degraded priors, trajectory
//! error metrics, and deterministic report emission.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod reports;
pub mod scene;
pub mod sensor;

pub use config::HarnessConfig;
pub use experiment::{run_trajectory, ExperimentConfig, ExperimentReport, PriorCorruption, PriorModel};
pub use metrics::{ate_rmse, Trajectory, TrajectorySample};
pub use reports::emit_reports;
pub use scene::{generate_scene, Scene, SceneKind, SceneSpec};
pub use sensor::{simulate_scan, SensorModel};
