//! Model checkpoints: magic `SIGNA1`, a JSON header carrying the
//! configuration, label graph, embeddings and a tensor index, then every
//! parameter tensor as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use signa_core::attention::SignaConfig;
use signa_core::model::{BackboneConfig, Model, SemanticContext};
use signa_core::numerics::Tensor;
use signa_core::params::ParamStore;
use signa_core::rng::RngState;
use signa_core::semantics::{EmbeddingMatrix, LabelGraph, SemanticEncoder};

use crate::{container, fsutil, Error, Result};

const MAGIC: &[u8] = b"SIGNA1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub path: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub backbone: BackboneConfig,
    pub signa: Option<SignaConfig>,
    pub graph: Option<LabelGraph>,
    pub embeddings: Option<EmbeddingMatrix>,
    /// Free-form echo of the run configuration.
    pub config: serde_json::Value,
    pub epoch: usize,
    pub rng: Option<RngState>,
    pub tensors: Vec<TensorEntry>,
}

/// Everything in a checkpoint besides the model itself.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub config: serde_json::Value,
    pub epoch: usize,
    pub rng: Option<RngState>,
}

pub fn encode_checkpoint(model: &Model, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(model.params.len());
    let mut payload = Vec::with_capacity(model.params.numel() * 8);
    for (path, t) in model.params.iter() {
        tensors.push(TensorEntry { path: path.clone(), shape: t.shape().to_vec(), offset: payload.len() });
        payload.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    let semantic = model.semantic.as_ref();
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        backbone: model.backbone.clone(),
        signa: model.signa.clone(),
        graph: semantic.map(|s| s.graph.clone()),
        embeddings: semantic.map(|s| s.embeddings.clone()),
        config: meta.config.clone(),
        epoch: meta.epoch,
        rng: meta.rng.clone(),
        tensors,
    };
    container::encode(MAGIC, &header, &payload)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(Model, CheckpointMeta)> {
    let (header, payload): (CheckpointHeader, _) = container::decode(MAGIC, bytes, path)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::format(path, format!("checkpoint version {} not supported", header.version)));
    }
    let mut params = ParamStore::new();
    for entry in &header.tensors {
        let len = entry.shape.iter().product::<usize>();
        let bytes = entry
            .offset
            .checked_add(len * 8)
            .and_then(|end| payload.get(entry.offset..end))
            .ok_or_else(|| Error::format(path, format!("tensor {} runs past the payload", entry.path)))?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params.insert(entry.path.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    let semantic = match (&header.signa, header.graph, header.embeddings) {
        (None, _, _) => None,
        (Some(cfg), Some(graph), Some(embeddings)) => {
            let encoder = SemanticEncoder::new(cfg.gnn, embeddings.dim(), cfg.dim)?;
            Some(SemanticContext::new(graph, embeddings, encoder)?)
        }
        _ => return Err(Error::format(path, "attention block present without label graph or embeddings")),
    };
    let model = Model { backbone: header.backbone, signa: header.signa, semantic, params };
    Ok((model, CheckpointMeta { config: header.config, epoch: header.epoch, rng: header.rng }))
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    fsutil::write_bytes(path.as_ref(), &encode_checkpoint(model, meta)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, CheckpointMeta)> {
    let path = path.as_ref();
    decode_checkpoint(&fsutil::read_bytes(path)?, path)
}
