//! Versioned JSON checkpoint: field config, weights, EMA weights, optimizer
//! moments and step count. Floats are written in shortest round-trip form, so
//! a save/load cycle reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, ModelState, OptimizerState, VectorField};

pub const CHECKPOINT_FORMAT: &str = "nnflow-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub field: FieldConfig,
    pub state: ModelState,
    pub optimizer: OptimizerState,
    /// Free-form run metadata (e.g. the serialized run config).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(field: FieldConfig, state: ModelState, optimizer: OptimizerState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            field,
            state,
            optimizer,
            metadata: serde_json::Value::Null,
        }
    }

    /// Checks that the stored vectors fit the stored config.
    pub fn validate(&self) -> Result<VectorField> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let field = VectorField::new(self.field.clone())?;
        let n = field.n_params();
        let lens = [
            self.state.weights.len(),
            self.state.ema_weights.len(),
            self.optimizer.first_moment.len(),
            self.optimizer.second_moment.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Checkpoint(format!(
                "parameter vectors {lens:?} do not match the {n} parameters of the field"
            )));
        }
        if !self.state.is_finite() {
            return Err(Error::Checkpoint("non-finite weights".into()));
        }
        Ok(field)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    /// Writes through a temporary file so an interrupted save never replaces a
    /// good checkpoint with a partial one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AdamConfig;

    #[test]
    fn rejects_mismatched_vectors() {
        let cfg = FieldConfig {
            hidden_widths: vec![4],
            time_embed_dim: 2,
            ..Default::default()
        };
        let field = VectorField::new(cfg.clone()).unwrap();
        let mut state = field.init_state();
        state.weights.pop();
        let ck = Checkpoint::new(cfg, state, OptimizerState::new(AdamConfig::default(), field.n_params()));
        assert!(ck.validate().is_err());
    }

    #[test]
    fn rejects_unknown_version() {
        let cfg = FieldConfig {
            hidden_widths: vec![4],
            time_embed_dim: 2,
            ..Default::default()
        };
        let field = VectorField::new(cfg.clone()).unwrap();
        let mut ck = Checkpoint::new(
            cfg,
            field.init_state(),
            OptimizerState::new(AdamConfig::default(), field.n_params()),
        );
        ck.version = 99;
        let text = ck.to_json().unwrap();
        assert!(Checkpoint::from_json(&text).is_err());
    }
}
