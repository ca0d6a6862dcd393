//! Persisted model container: the trained model plus the schema it was
//! fitted on, versioned and hashed like every other artifact.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tripcast_core::features::FeatureSchema;
use tripcast_core::grid::TrainedModel;
use tripcast_core::Real;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub schema: FeatureSchema,
    pub model: TrainedModel<Real>,
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("missing upstream artifact {}", path.display()))?;
        let saved: SavedModel =
            serde_json::from_str(&text).with_context(|| format!("parsing model file {}", path.display()))?;
        if saved.version != MODEL_FORMAT_VERSION {
            bail!("unsupported model format version {} in {}", saved.version, path.display());
        }
        Ok(saved)
    }
}
