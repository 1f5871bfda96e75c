//! Versioned JSON model checkpoints shared by both architectures.
//!
//! The container holds the feature normalization and a payload tagged by
//! architecture:
//!
//! ```text
//! {"format":"d2d-qgnn-checkpoint","version":1,"norm":{...},
//!  "model":{"payload":"qgnn","shape":{"features":2,"layers":2,"depth":2,"k":2},"params":{...}}}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{Gcn, GcnShape};
use crate::graph::FeatureNorm;
use crate::qgnn::{Qgnn, QgnnParams, QgnnShape};
use crate::train::{Arch, Model};

pub const CHECKPOINT_FORMAT: &str = "d2d-qgnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "payload", rename_all = "lowercase")]
pub enum Payload {
    Qgnn { shape: QgnnShape, params: QgnnParams },
    Gcn { shape: GcnShape, params: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub norm: FeatureNorm,
    pub model: Payload,
}

impl Checkpoint {
    pub fn from_model(model: &Model, norm: FeatureNorm) -> Self {
        let payload = match model {
            Model::Qgnn(m) => Payload::Qgnn {
                shape: m.shape(),
                params: m.params.clone(),
            },
            Model::Gcn(m) => Payload::Gcn {
                shape: m.shape(),
                params: m.params.clone(),
            },
        };
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            norm,
            model: payload,
        }
    }

    pub fn arch(&self) -> Arch {
        match self.model {
            Payload::Qgnn { .. } => Arch::Qgnn,
            Payload::Gcn { .. } => Arch::Gcn,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        match &self.model {
            Payload::Qgnn { shape, params } => Ok(Model::Qgnn(Qgnn::with_params(*shape, params.clone())?)),
            Payload::Gcn { shape, params } => Ok(Model::Gcn(Gcn::with_params(*shape, params.clone())?)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "checkpoint",
            line: e.line(),
            msg: e.to_string(),
        })?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::CheckpointMismatch(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
