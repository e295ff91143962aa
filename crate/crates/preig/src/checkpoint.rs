//! Parameter checkpoints: versioned JSON holding dimensions, seed and the
//! flat parameter vector, plus a sidecar with the candidate's hyperparameters.

use std::path::{Path, PathBuf};

use preig_core::gru::{param_count, GruParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::write_json;

pub const FORMAT: &str = "preig-gru";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub seed: u64,
    pub theta: Vec<f64>,
}

/// Hyperparameters of the candidate a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub eta: f64,
    pub lambda2: f64,
    pub seed: u64,
    pub val_loss: f64,
}

impl Checkpoint {
    pub fn new(params: &GruParams, seed: u64) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            input_dim: params.input_dim(),
            hidden: params.hidden(),
            seed,
            theta: params.theta().to_vec(),
        }
    }

    pub fn params(&self) -> Result<GruParams> {
        Ok(GruParams::from_theta(self.input_dim, self.hidden, self.theta.clone())?)
    }

    /// Fail unless the checkpoint was built for `input_dim` features and
    /// `hidden` units.
    pub fn check_dims(&self, input_dim: usize, hidden: usize) -> Result<()> {
        if self.input_dim != input_dim || self.hidden != hidden {
            return Err(Error::Dimension {
                expected_d: input_dim,
                expected_h: hidden,
                found_d: self.input_dim,
                found_h: self.hidden,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let bad = |m: String| Err(Error::Data { path: path.into(), message: m });
        if ck.format != FORMAT {
            return bad(format!("unknown checkpoint format '{}'", ck.format));
        }
        if ck.version != VERSION {
            return bad(format!("unsupported checkpoint version {}", ck.version));
        }
        let expected = param_count(ck.input_dim, ck.hidden);
        if ck.theta.len() != expected {
            return bad(format!("theta has {} entries, D={} H={} needs {expected}", ck.theta.len(), ck.input_dim, ck.hidden));
        }
        if ck.theta.iter().any(|v| !v.is_finite()) {
            return bad("theta contains non-finite values".into());
        }
        Ok(ck)
    }
}

impl Sidecar {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// `model.json` -> `model.meta.json`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("meta.json")
}
