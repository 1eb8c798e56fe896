//! Experiment configuration: a TOML file of `key = value` lines grouped
//! under `[data]`, `[experiment]`, `[model]` and `[train]`.
//!
//! ```toml
//! [data]
//! manifest = "panel/manifest.txt"   # relative to this file
//! sample_size = 100                 # omit to use every asset
//! stride = 1
//!
//! [experiment]
//! thetas = [0.05, 0.01, 0.001]
//! methods = ["constant", "garch", "qr", "qcnn", "joint_qcnn"]
//! seed = 0
//! output = "report"                 # relative to this file
//! workers = 0                       # 0: all available cores
//! forecasts = true                  # per-asset forecast CSVs
//!
//! [model]
//! window = 128
//! hidden_layers = 6
//! filters = 8
//! kernel = 2
//! qr_lags = 4
//!
//! [train]
//! epochs = 128
//! batch_size = 128
//! rho = 0.95
//! epsilon = 1e-6
//! ```
//!
//! Every key is optional except `data.manifest`; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Method;
use crate::baselines::DEFAULT_LAGS;
use crate::conv::{Architecture, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub manifest: PathBuf,
    pub sample_size: Option<usize>,
    pub stride: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            sample_size: None,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub thetas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub output: PathBuf,
    pub workers: usize,
    pub forecasts: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            thetas: vec![0.05, 0.01, 0.001],
            methods: Method::ALL.to_vec(),
            seed: 0,
            output: PathBuf::from("report"),
            workers: 0,
            forecasts: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub window: usize,
    pub hidden_layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub qr_lags: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let arch = Architecture::default();
        Self {
            window: arch.window,
            hidden_layers: arch.hidden_layers,
            filters: arch.filters,
            kernel: arch.kernel,
            qr_lags: DEFAULT_LAGS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            rho: t.rho,
            epsilon: t.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl ExperimentConfig {
    /// Reads a config file; relative paths in it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.data.manifest = resolve(base, &cfg.data.manifest);
        cfg.experiment.output = resolve(base, &cfg.experiment.output);
        Ok(cfg)
    }

    /// Parses config text without touching paths.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            window: self.model.window,
            hidden_layers: self.model.hidden_layers,
            filters: self.model.filters,
            kernel: self.model.kernel,
        }
    }

    /// Training settings with the given seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed,
            rho: self.train.rho,
            epsilon: self.train.epsilon,
            architecture: self.architecture(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.thetas.is_empty() {
            return Err(Error::Config("at least one theta is required".into()));
        }
        if let Some(t) = e.thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {t}")));
        }
        if e.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.data.manifest.as_os_str().is_empty() {
            return Err(Error::Config("data.manifest is required".into()));
        }
        if self.data.stride == 0 {
            return Err(Error::Config("data.stride must be at least 1".into()));
        }
        if self.data.sample_size == Some(0) {
            return Err(Error::Config("data.sample_size must be at least 1".into()));
        }
        if self.model.qr_lags == 0 {
            return Err(Error::Config("model.qr_lags must be at least 1".into()));
        }
        self.train_config(0)
            .validate()
            .map_err(|err| Error::Config(err.to_string()))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
