//! Structured text configuration mirroring the pipeline, sensor, and
//! prior settings. Every field has a default; a config file only needs
//! the keys it overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use lpicp::features::FeatureConfig;
use lpicp::localizability::{ContributionMetric, DetectionConfig};
use lpicp::optimizer::{Method, PipelineConfig, SolverConfig};
use lpicp::residuals::JacobianConvention;

use crate::experiment::{ExperimentConfig, PriorCorruption, PriorModel};
use crate::sensor::SensorModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config '{path}': {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub model: PriorModel,
    pub bias: [f64; 6],
    pub noise_sigma: [f64; 6],
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            model: PriorModel::GroundTruthRelative,
            bias: [0.0; 6],
            noise_sigma: [0.0; 6],
            seed: 0,
        }
    }
}

/// The full harness configuration, loadable from one TOML file.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HarnessConfig {
    pub features: FeatureConfig,
    pub detection: DetectionConfig,
    pub solver: SolverConfig,
    pub convention: JacobianConvention,
    pub sensor: SensorModel,
    pub prior: PriorConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Poses used for the rigid alignment before the trajectory error.
    pub align_n: usize,
    /// Timestamp association tolerance, seconds.
    pub assoc_tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            align_n: 50,
            assoc_tol: 1e-6,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Builds the registration pipeline for a method. When the method is
    /// the absolute-metric variant and the detection section still holds
    /// the squared-metric defaults, the absolute preset is substituted so
    /// the thresholds match the metric's scale.
    pub fn pipeline(&self, method: Method) -> PipelineConfig {
        let detection = if method == Method::XIcpMetric
            && self.detection.metric == ContributionMetric::Squared
        {
            DetectionConfig::absolute_metric()
        } else {
            self.detection
        };
        PipelineConfig {
            features: self.features.clone(),
            detection,
            solver: self.solver,
            convention: self.convention,
            method,
        }
    }

    pub fn experiment(&self, method: Method) -> ExperimentConfig {
        ExperimentConfig {
            pipeline: self.pipeline(method),
            sensor: self.sensor,
            prior: self.prior.model,
            corruption: PriorCorruption {
                bias: self.prior.bias,
                noise_sigma: self.prior.noise_sigma,
                seed: self.prior.seed,
            },
            align_n: self.eval.align_n,
        }
    }
}
