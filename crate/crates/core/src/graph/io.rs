//! Model file format: a UTF-8 JSON manifest plus a sidecar blob of
//! little-endian `f32` values. Offsets and lengths in the manifest count
//! floats, not bytes. The manifest carries the CRC-32 of the whole blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::{atomic_write, f32s_to_le, le_to_f32s, read};

use super::{LayerKind, LayerNode, ModelGraph, NodeId};

pub const MODEL_FORMAT: &str = "cswap-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    name: String,
    input_shape: Vec<usize>,
    num_classes: usize,
    blob: String,
    blob_floats: usize,
    crc32: u32,
    nodes: Vec<NodeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: NodeId,
    kind: LayerKind,
    out_channels: usize,
    inputs: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<BlobRef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobRef {
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

impl ModelGraph {
    /// Encodes the model as `(manifest JSON, blob bytes)`.
    pub fn to_parts(&self, blob_name: &str) -> (String, Vec<u8>) {
        let mut blob = Vec::with_capacity(self.param_count() * 4);
        let mut offset = 0usize;
        let mut push = |t: &Tensor, blob: &mut Vec<u8>| {
            let r = BlobRef { shape: t.shape().to_vec(), offset, len: t.len() };
            f32s_to_le(t.data().iter().copied(), blob);
            offset += t.len();
            r
        };
        let nodes = self
            .nodes()
            .iter()
            .map(|n| NodeEntry {
                id: n.id,
                kind: n.kind,
                out_channels: n.out_channels,
                inputs: n.inputs.clone(),
                weights: n.weights.as_ref().map(|t| push(t, &mut blob)),
                bias: n.bias.as_ref().map(|t| push(t, &mut blob)),
            })
            .collect();
        let manifest = Manifest {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            name: self.name().into(),
            input_shape: self.input_shape().to_vec(),
            num_classes: self.num_classes(),
            blob: blob_name.into(),
            blob_floats: blob.len() / 4,
            crc32: crc32fast::hash(&blob),
            nodes,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        (json, blob)
    }

    /// Decodes a model from manifest bytes and the blob it references.
    pub fn from_parts(manifest: &[u8], blob: &[u8]) -> Result<Self> {
        let m = parse_manifest(manifest)?;
        decode(m, blob)
    }
}

fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    let m: Manifest = serde_json::from_slice(bytes).map_err(|e| Error::format("model manifest", e.to_string()))?;
    if m.format != MODEL_FORMAT {
        return Err(Error::format("model manifest", format!("unknown format tag {:?}", m.format)));
    }
    if m.version != MODEL_VERSION {
        return Err(Error::format("model manifest", format!("unsupported version {}", m.version)));
    }
    Ok(m)
}

fn decode(m: Manifest, blob: &[u8]) -> Result<ModelGraph> {
    if blob.len() != m.blob_floats.saturating_mul(4) {
        return Err(Error::format(
            "model blob",
            format!("expected {} floats, blob holds {} bytes", m.blob_floats, blob.len()),
        ));
    }
    let actual = crc32fast::hash(blob);
    if actual != m.crc32 {
        return Err(Error::Checksum { expected: m.crc32, actual });
    }
    let tensor = |r: &BlobRef| -> Result<Tensor> {
        if r.shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)) != Some(r.len) {
            return Err(Error::format("model manifest", format!("shape {:?} does not hold {} values", r.shape, r.len)));
        }
        let data = le_to_f32s(blob, r.offset, r.len, "model manifest")?;
        Tensor::new(r.shape.clone(), data).map_err(|e| Error::format("model manifest", e.to_string()))
    };
    let mut nodes = Vec::with_capacity(m.nodes.len());
    for e in &m.nodes {
        let weights = e.weights.as_ref().map(tensor).transpose()?;
        let bias = e.bias.as_ref().map(tensor).transpose()?;
        if e.kind.is_parametric() && weights.is_none() {
            return Err(Error::format("model manifest", format!("{} node {} has no weights", e.kind.name(), e.id)));
        }
        nodes.push(LayerNode {
            id: e.id,
            kind: e.kind,
            weights,
            bias,
            out_channels: e.out_channels,
            inputs: e.inputs.clone(),
        });
    }
    let model = ModelGraph::new(m.name, m.input_shape, m.num_classes, nodes)?;
    if let Some(bad) = model.nodes().iter().zip(&m.nodes).find(|(n, e)| n.out_channels != e.out_channels) {
        return Err(Error::format(
            "model manifest",
            format!(
                "node {} declares {} channels, graph produces {}",
                bad.0.id, bad.1.out_channels, bad.0.out_channels
            ),
        ));
    }
    Ok(model)
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<path>` (manifest) and `<path stem>.bin` (blob), each atomically.
pub fn save_model(model: &ModelGraph, path: &Path) -> Result<()> {
    let blob_path = blob_path(path);
    let blob_name = blob_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let (json, blob) = model.to_parts(&blob_name);
    atomic_write(&blob_path, &blob)?;
    atomic_write(path, json.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    let m = parse_manifest(&read(path)?)?;
    if m.blob.contains('/') || m.blob.contains('\\') || m.blob.is_empty() {
        return Err(Error::format("model manifest", format!("blob name {:?} must be a plain file name", m.blob)));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&m.blob);
    let blob = read(&blob_path)?;
    decode(m, &blob)
}
