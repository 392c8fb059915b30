//! JSON model checkpoints.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "amd-forecast-checkpoint",
//!   "version": 1,
//!   "seed": <u64>,
//!   "scaler": { "columns": [ { "name", "kind", "min", "max" }, ... ] },
//!   "network": {
//!     "spec": { "variant", "window", "n_features", "hidden", "dense", "residual" },
//!     "encoder": null | { "w_forget": {rows, cols, data}, ..., "b_output": [...] },
//!     "decoder": null | { same as encoder },
//!     "layers": [ { "weights": {rows, cols, data}, "bias": [...], "activation" }, ... ]
//!   }
//! }
//! ```
//!
//! Matrices are row-major. Floats are written with shortest round-trip
//! formatting, so loading reproduces every weight bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::ingest::ScalerParams;

pub const FORMAT: &str = "amd-forecast-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub scaler: ScalerParams,
    pub network: Network,
}

impl Checkpoint {
    pub fn new(network: Network, scaler: ScalerParams, seed: u64) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            seed,
            scaler,
            network,
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.format != FORMAT || ck.version != VERSION {
        return Err(Error::VariantMismatch(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    ck.network.validate()?;
    if ck.scaler.columns.len() != ck.network.spec.n_features {
        return Err(Error::ColumnMismatch(format!(
            "checkpoint scaler has {} columns, model has {} features",
            ck.scaler.columns.len(),
            ck.network.spec.n_features
        )));
    }
    Ok(ck)
}
