use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchitectureSpec;
use super::model::{NetworkModel, TargetStats};
use crate::container;
use crate::error::Result;
use crate::preprocess::{NormStats, PreprocessConfig};

pub const MODEL_KIND: &str = "multimodal_network";

#[derive(Serialize, Deserialize)]
struct Meta {
    architecture: ArchitectureSpec,
    preprocess: PreprocessConfig,
    norm_stats: NormStats,
    target_stats: TargetStats,
}

pub fn encode_model(model: &NetworkModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_value(Meta {
        architecture: model.architecture.clone(),
        preprocess: model.preprocess.clone(),
        norm_stats: model.norm_stats,
        target_stats: model.target_stats,
    })?;
    let tensors: Vec<_> = model
        .named_parameters()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    container::encode(MODEL_KIND, meta, &tensors)
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkModel> {
    let (meta, tensors) = container::decode(bytes, MODEL_KIND)?;
    let meta: Meta = serde_json::from_value(meta)?;
    NetworkModel::from_parts(
        meta.architecture,
        meta.preprocess,
        meta.norm_stats,
        meta.target_stats,
        tensors,
    )
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)?).map_err(|e| crate::Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    decode_model(&bytes)
}
