use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::EncoderConfig;
use crate::autodiff::{AdamState, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "rtqa-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter arrays plus the configuration needed to rebuild the model
/// that owns them. `settings` carries model-specific configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: String,
    pub encoder: EncoderConfig,
    pub settings: serde_json::Value,
    pub step: u64,
    pub params: Vec<NamedArray>,
    #[serde(default)]
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn capture(
        kind: &str,
        encoder: EncoderConfig,
        settings: serde_json::Value,
        store: &ParamStore,
        step: u64,
        optimizer: Option<&AdamState>,
    ) -> Self {
        let params = store
            .iter()
            .map(|(_, name, t)| NamedArray {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: kind.to_string(),
            encoder,
            settings,
            step,
            params,
            optimizer: optimizer.cloned(),
        }
    }

    /// Copies the stored arrays into `store`, which must hold exactly the same
    /// names and shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        let values = self
            .params
            .iter()
            .map(|a| {
                Tensor::new(a.shape.clone(), a.data.clone())
                    .map(|t| (a.name.clone(), t))
                    .map_err(|e| Error::Compat(format!("array {}: {e}", a.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        store.load_values(&values)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Compat(format!(
                "checkpoint holds a {} model, expected {kind}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => {
                return Err(Error::Compat(format!(
                    "{}: unsupported checkpoint format {other:?}",
                    path.display()
                )))
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}
