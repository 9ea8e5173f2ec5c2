//! Experiment configuration.
//!
//! ```json
//! {
//!   "format": 1,
//!   "network": "diamond.json",
//!   "base_code": { "block_length": 2, "rate": 1.0, "attempts": 30 },
//!   "n_rep": 4,
//!   "epsilon": 1.0,
//!   "kappa_override": 0.25,
//!   "eta": 0.0,
//!   "seeds": { "search": 7, "prune": 3, "noise": 11, "bounds": 5 },
//!   "trials": 10000,
//!   "bound_samples": 100000,
//!   "method": "ml",
//!   "out": "out/diamond"
//! }
//! ```
//!
//! Relative paths resolve against the directory of the config file.
//! `kappa_override`, `eta`, `threshold_slack` and `batch_size` are optional.

use std::fs;
use std::path::{Path, PathBuf};

use relaylift::gaussian::DecodeMethod;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseCodeParams {
    pub block_length: usize,
    pub rate: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub search: u64,
    pub prune: u64,
    pub noise: u64,
    pub bounds: u64,
}

impl Seeds {
    /// Every stage seed derived from one master seed.
    pub fn from_master(master: u64) -> Self {
        let d = |stream| relaylift::seed::derive_seed(master, stream);
        Seeds { search: d(0), prune: d(1), noise: d(2), bounds: d(3) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Ml,
    Threshold,
}

fn default_slack() -> f64 {
    DecodeMethod::DEFAULT_THRESHOLD_SLACK
}

fn default_batch() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format: u32,
    pub network: PathBuf,
    pub base_code: BaseCodeParams,
    pub n_rep: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub kappa_override: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    pub seeds: Seeds,
    pub trials: u64,
    pub bound_samples: u64,
    pub method: MethodName,
    #[serde(default = "default_slack")]
    pub threshold_slack: f64,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Reads a config and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.network = base.join(&config.network);
        config.out = base.join(&config.out);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Invalid(msg));
        if self.format != CONFIG_FORMAT {
            return fail(format!("unsupported config format {} (expected {CONFIG_FORMAT})", self.format));
        }
        if self.base_code.block_length == 0 || self.base_code.attempts == 0 {
            return fail("base_code.block_length and base_code.attempts must be positive".into());
        }
        if !(self.base_code.rate.is_finite() && self.base_code.rate > 0.0) {
            return fail(format!("base_code.rate must be positive, got {}", self.base_code.rate));
        }
        if self.n_rep == 0 {
            return fail("n_rep must be positive".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        for (name, value) in [("kappa_override", self.kappa_override), ("eta", self.eta)] {
            if let Some(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return fail(format!("{name} must be a non-negative number, got {v}"));
                }
            }
        }
        if !(self.threshold_slack.is_finite() && self.threshold_slack >= 0.0) {
            return fail(format!("threshold_slack must be non-negative, got {}", self.threshold_slack));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !self.network.is_file() {
            return Err(CliError::Invalid(format!("network file {} does not exist", self.network.display())));
        }
        Ok(())
    }

    pub fn decode_method(&self) -> DecodeMethod {
        match self.method {
            MethodName::Ml => DecodeMethod::Ml,
            MethodName::Threshold => DecodeMethod::Threshold { slack: self.threshold_slack },
        }
    }
}

/// SHA-256 over the effective config (without paths, which vary between
/// checkouts) and the canonical network document.
pub fn config_hash(config: &ExperimentConfig, network_doc: &str) -> String {
    let mut portable = config.clone();
    portable.network = PathBuf::new();
    portable.out = PathBuf::new();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&portable).expect("config serializes"));
    hasher.update(b"\n");
    hasher.update(network_doc.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
