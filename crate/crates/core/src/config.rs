//! TOML experiment configuration. Every section is optional and every
//! field has a default, so an empty file runs the reference experiments.

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::SystemSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of every Monte-Carlo stream; the CLI flag overrides it.
    pub seed: Option<u64>,
    /// Plant for `verify-input-bound`.
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub theta_curve: ThetaCurveConfig,
    #[serde(default)]
    pub case_study: CaseStudyConfig,
    #[serde(default)]
    pub quadrotor: QuadrotorConfig,
    #[serde(default)]
    pub random_walk: RandomWalkConfig,
    #[serde(default)]
    pub input_bound: InputBoundConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaCurveConfig {
    pub k_max: u32,
    pub coarse_step: f64,
    pub max_theta: f64,
    pub fine_step: f64,
}

impl Default for ThetaCurveConfig {
    fn default() -> Self {
        Self {
            k_max: 5,
            coarse_step: 0.01,
            max_theta: 10.0,
            fine_step: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub t_max: usize,
    pub k: u32,
    /// Window half-width; optimized for `k` when absent.
    pub theta: Option<f64>,
    pub mean: Vec<f64>,
    /// Diagonal of the initial covariance.
    pub variances: Vec<f64>,
    pub cases: Vec<CaseSpec>,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        let diag = |x: f64, y: f64| vec![vec![x, 0.0], vec![0.0, y]];
        Self {
            t_max: 20,
            k: 3,
            theta: None,
            mean: vec![0.0, 0.0],
            variances: vec![2.0, 3.0],
            cases: vec![
                CaseSpec {
                    name: "sv_1.01_1".into(),
                    a: diag(1.01, 1.0),
                },
                CaseSpec {
                    name: "sv_1.5_0.5".into(),
                    a: diag(1.5, 0.5),
                },
                CaseSpec {
                    name: "sv_0.8_0.9".into(),
                    a: diag(0.8, 0.9),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorConfig {
    pub runs: usize,
    pub horizon: usize,
    pub sample_time: f64,
    pub bin_width: f64,
    /// Grid origin on every position axis.
    pub bin_origin: f64,
    pub state_weight: f64,
    /// Number of raw trajectories written to the dump.
    pub dump_runs: usize,
}

impl Default for QuadrotorConfig {
    fn default() -> Self {
        Self {
            runs: 100_000,
            horizon: 10,
            sample_time: 0.5,
            bin_width: 0.2,
            bin_origin: -0.1,
            state_weight: 10.0,
            dump_runs: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomWalkConfig {
    pub half_width: i64,
    pub horizons: Vec<usize>,
    pub steps: Vec<i64>,
}

impl Default for RandomWalkConfig {
    fn default() -> Self {
        Self {
            half_width: 1,
            horizons: vec![1, 2, 3, 4, 5, 6],
            steps: vec![-1, 0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBoundConfig {
    pub horizon: usize,
    pub samples: usize,
    /// Covariance of each input `U_t ~ N(0, R)`.
    pub input_cov: Vec<Vec<f64>>,
    /// Hold one draw of `U` over the whole horizon instead of drawing
    /// independently per step.
    pub constant_inputs: bool,
}

impl Default for InputBoundConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            samples: 100_000,
            input_cov: vec![vec![1.0]],
            constant_inputs: false,
        }
    }
}
