//! Experiment files.
//!
//! An experiment is a TOML document with a `[model]` table selected by its
//! `name` key, a `[run]` table holding the sampler settings, and a few
//! top-level keys:
//!
//! ```toml
//! replicates = 10
//! output_dir = "out/fig1"
//! split_seed = 0
//!
//! [model]
//! name = "toy"
//! d_x = 100
//! data_seed = 1
//!
//! [run]
//! algorithm = "pga"
//! h = 0.0196
//! n_particles = 10
//! n_steps = 300
//! burn_in = 150
//!
//! [emit]
//! cloud_samples = true
//! ```
//!
//! Unknown keys anywhere are rejected.

use crate::error::{CliError, CliResult};
use particle_em::data::{MNIST_IMAGES_FILE, MNIST_LABELS_FILE, WBC_FILE};
use particle_em::RunConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming the dataset directory.
pub const DATA_DIR_ENV: &str = "PEM_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data";

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed of the train/test split, kept apart from the sampler seed.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub emit: EmitFlags,
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitFlags {
    #[serde(default = "yes")]
    pub theta_trace: bool,
    #[serde(default)]
    pub cloud_samples: bool,
    #[serde(default = "yes")]
    pub metrics: bool,
    #[serde(default)]
    pub meanfield: bool,
    #[serde(default)]
    pub spectral: bool,
}

fn yes() -> bool {
    true
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            theta_trace: true,
            cloud_samples: false,
            metrics: true,
            meanfield: false,
            spectral: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Toy hierarchical model. Either `y` is given or it is drawn from
    /// `N(0, 1)` with `data_seed`.
    Toy {
        #[serde(default)]
        d_x: Option<usize>,
        #[serde(default)]
        y: Option<Vec<f64>>,
        #[serde(default)]
        data_seed: u64,
    },
    Logistic {
        source: LogisticSource,
        /// WBC file; defaults to the dataset directory.
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        synthetic: Option<SyntheticLogistic>,
    },
    Bnn {
        source: BnnSource,
        #[serde(default)]
        images: Option<PathBuf>,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default = "default_classes")]
        classes: [u8; 2],
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default)]
        synthetic: Option<SyntheticBnn>,
    },
}

fn default_classes() -> [u8; 2] {
    [4, 9]
}

fn default_count() -> usize {
    1000
}

fn default_hidden() -> usize {
    particle_em::models::bnn::DEFAULT_HIDDEN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogisticSource {
    Wbc,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnnSource {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLogistic {
    pub rows: usize,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Two Gaussian blobs separated along a random direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBnn {
    pub rows: usize,
    pub inputs: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    3.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.run.validate()?;
        if self.replicates == 0 {
            return Err(CliError::config("invalid configuration field `replicates`: must be at least 1"));
        }
        match &self.model {
            ModelConfig::Toy { d_x, y, .. } => match (d_x, y) {
                (None, None) => return Err(CliError::config("toy model needs `d_x` or `y`")),
                (Some(d), Some(y)) if *d != y.len() => {
                    return Err(CliError::config(format!("toy model: `d_x` = {d} but `y` has {} entries", y.len())))
                }
                (Some(0), _) => return Err(CliError::config("invalid configuration field `d_x`: must be positive")),
                _ => {}
            },
            ModelConfig::Logistic { source, synthetic, .. } => {
                if *source == LogisticSource::Synthetic && synthetic.is_none() {
                    return Err(CliError::config("logistic model: source = \"synthetic\" needs a [model.synthetic] table"));
                }
            }
            ModelConfig::Bnn { source, synthetic, hidden, count, classes, .. } => {
                if *source == BnnSource::Synthetic && synthetic.is_none() {
                    return Err(CliError::config("bnn model: source = \"synthetic\" needs a [model.synthetic] table"));
                }
                if *hidden == 0 {
                    return Err(CliError::config("invalid configuration field `hidden`: must be positive"));
                }
                if *count < 2 {
                    return Err(CliError::config("invalid configuration field `count`: must be at least 2"));
                }
                if classes[0] == classes[1] {
                    return Err(CliError::config("invalid configuration field `classes`: labels must differ"));
                }
            }
        }
        Ok(())
    }

    /// Seed used by replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        self.run.seed.wrapping_add(r as u64)
    }
}

impl ModelConfig {
    pub fn wbc_path(path: &Option<PathBuf>) -> PathBuf {
        path.clone().unwrap_or_else(|| data_dir().join(WBC_FILE))
    }

    pub fn mnist_paths(images: &Option<PathBuf>, labels: &Option<PathBuf>) -> (PathBuf, PathBuf) {
        (
            images.clone().unwrap_or_else(|| data_dir().join(MNIST_IMAGES_FILE)),
            labels.clone().unwrap_or_else(|| data_dir().join(MNIST_LABELS_FILE)),
        )
    }
}
