//! Model checkpoints: one JSON header line, then every parameter block as
//! little-endian `f64` in declared order.

use super::{Activation, EmbeddingFunction, EmbeddingModel, FeedForwardNet, HighOrderNet};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::output::atomic_write;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "tsee-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    /// `high-order` or `feedforward`.
    pub kind: String,
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub blocks: Vec<BlockInfo>,
}

impl CheckpointHeader {
    pub fn for_model<T: Real>(model: &EmbeddingModel<T>, seed: u64, method: Option<&str>) -> Self {
        let blocks = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, p)| BlockInfo {
                name,
                rows: p.rows(),
                cols: p.cols(),
            })
            .collect();
        let (order, layer_dims, activation) = match model {
            EmbeddingModel::HighOrder(m) => (Some(m.order), None, None),
            EmbeddingModel::FeedForward(m) => (None, Some(m.layer_dims.clone()), Some(m.activation)),
        };
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: VERSION,
            kind: model.kind().into(),
            input_dim: model.input_dim(),
            output_dim: model.output_dim(),
            order,
            layer_dims,
            activation,
            seed,
            method: method.map(str::to_owned),
            blocks,
        }
    }
}

/// Serialized checkpoint bytes.
pub fn encode_checkpoint<T: Real>(model: &EmbeddingModel<T>, seed: u64, method: Option<&str>) -> Vec<u8> {
    let header = CheckpointHeader::for_model(model, seed, method);
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for p in model.params() {
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_f64().unwrap().to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint<T: Real>(model: &EmbeddingModel<T>, seed: u64, method: Option<&str>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_checkpoint(model, seed, method);
    atomic_write(path, |w| w.write_all(&bytes))
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8], path: &Path) -> Result<(EmbeddingModel<T>, CheckpointHeader)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT || header.version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint {} v{}", header.format, header.version),
        ));
    }
    let mut body = &bytes[nl + 1..];
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for b in &header.blocks {
        let len = b.rows * b.cols;
        if body.len() < 8 * len {
            return Err(Error::format(path, format!("truncated block {}", b.name)));
        }
        let vals = body[..8 * len]
            .chunks_exact(8)
            .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())).unwrap())
            .collect();
        blocks.push(DenseMatrix::new(b.rows, b.cols, vals)?);
        body = &body[8 * len..];
    }
    if !body.is_empty() {
        return Err(Error::format(path, format!("{} trailing bytes", body.len())));
    }

    let model = match header.kind.as_str() {
        "high-order" => {
            let order = header.order.ok_or_else(|| Error::format(path, "missing order"))?;
            let [c, w, b, v]: [DenseMatrix<T>; 4] = blocks
                .try_into()
                .map_err(|_| Error::format(path, "high-order checkpoint needs 4 blocks"))?;
            EmbeddingModel::HighOrder(HighOrderNet::from_parts(c, w, b, v, order)?)
        }
        "feedforward" => {
            if blocks.len() % 2 != 0 {
                return Err(Error::format(path, "odd number of feedforward blocks"));
            }
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for (i, m) in blocks.into_iter().enumerate() {
                if i % 2 == 0 {
                    weights.push(m);
                } else {
                    biases.push(m);
                }
            }
            let act = header.activation.unwrap_or_default();
            EmbeddingModel::FeedForward(FeedForwardNet::from_parts(weights, biases, act)?)
        }
        other => return Err(Error::format(path, format!("unknown model kind {other:?}"))),
    };
    if model.input_dim() != header.input_dim || model.output_dim() != header.output_dim {
        return Err(Error::format(path, "header dimensions disagree with parameter blocks"));
    }
    Ok((model, header))
}

pub fn read_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(EmbeddingModel<T>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
