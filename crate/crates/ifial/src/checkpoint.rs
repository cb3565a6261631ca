//! JSON checkpoints. Floats are written in shortest round-trip form and
//! parsed back exactly, so a save/load cycle is bit-exact.

use std::path::Path;

use ifial_core::baselines::FittedMethod;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    /// Target class names, in label order.
    pub classes: Vec<String>,
    pub fitted: FittedMethod,
}

impl Checkpoint {
    pub fn new(fitted: &FittedMethod, classes: &[String]) -> Self {
        let mut fitted = fitted.clone();
        for s in &mut fitted.sessions {
            s.wall_time_secs = None;
        }
        Self {
            version: CHECKPOINT_VERSION,
            classes: classes.to_vec(),
            fitted,
        }
    }

    /// Serializes without wall-clock fields.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Data(format!("invalid checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CliError::Data(format!(
                "checkpoint version {} is not supported",
                ckpt.version
            )));
        }
        if ckpt.classes.len() != ckpt.fitted.state.config.class_count {
            return Err(CliError::Data(format!(
                "checkpoint lists {} classes for a {}-class model",
                ckpt.classes.len(),
                ckpt.fitted.state.config.class_count
            )));
        }
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
