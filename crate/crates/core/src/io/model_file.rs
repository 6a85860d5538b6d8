//! Bit-exact model serialization.
//!
//! A model file is a single binary: an 8-byte little-endian manifest length,
//! the UTF-8 JSON manifest, then a raw blob of little-endian `f32` values
//! holding every weight tensor in layer order followed by every bias tensor
//! in layer order. The manifest indexes the blob with byte offsets that must
//! cover it exactly, with no gaps and no overlaps. The manifest is JSON so a
//! model can be inspected with ordinary tools; the blob is raw floats so a
//! save/load round trip reproduces weights bit-exactly.

use crate::error::{Error, Result};
use crate::net::{LayerSpec, Network};
use crate::prune::PruneMask;
use crate::tensor::{Shape, Tensor};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    seed: u64,
    protect_classifier: bool,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
    mask: PruneMask,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    layer: usize,
    param: ParamKind,
    shape: Vec<usize>,
    offset: u64,
    byte_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ParamKind {
    Weight,
    Bias,
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut push_tensor = |layer: usize, param: ParamKind, t: &Tensor, blob: &mut Vec<u8>| {
        let offset = blob.len() as u64;
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            layer,
            param,
            shape: t.shape().dims().to_vec(),
            offset,
            byte_len: (t.data().len() * 4) as u64,
        });
    };
    for i in 0..net.layers().len() {
        if let Some(w) = net.weight(i) {
            push_tensor(i, ParamKind::Weight, w, &mut blob);
        }
    }
    for i in 0..net.layers().len() {
        if let Some(b) = net.bias(i) {
            push_tensor(i, ParamKind::Bias, b, &mut blob);
        }
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        seed: net.seed(),
        protect_classifier: net.protect_classifier(),
        input_shape: net.input_shape().dims().to_vec(),
        layers: net.layers().to_vec(),
        tensors,
        mask: net.mask().clone(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&manifest_bytes)?;
    file.write_all(&blob)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Network> {
    let bytes = fs::read(path)?;
    decode_model(&bytes)
}

fn decode_model(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 8 {
        return Err(Error::Parse(
            "model file shorter than its length prefix".into(),
        ));
    }
    let manifest_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let manifest_end = 8usize
        .checked_add(manifest_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Parse("manifest length prefix exceeds file size".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[8..manifest_end])?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: manifest.version,
            supported: FORMAT_VERSION,
        });
    }

    let blob = &bytes[manifest_end..];
    // The tensor index must tile the blob exactly.
    let mut entries: Vec<&TensorEntry> = manifest.tensors.iter().collect();
    entries.sort_by_key(|e| e.offset);
    let mut cursor = 0u64;
    for e in &entries {
        if e.offset < cursor {
            return Err(Error::OffsetLayout(format!(
                "tensor at offset {} overlaps the previous tensor ending at {cursor}",
                e.offset
            )));
        }
        if e.offset > cursor {
            return Err(Error::OffsetLayout(format!(
                "gap in blob between byte {cursor} and tensor at offset {}",
                e.offset
            )));
        }
        cursor += e.byte_len;
    }
    if cursor != blob.len() as u64 {
        return Err(Error::TruncatedBlob {
            expected: cursor,
            found: blob.len() as u64,
        });
    }

    let mut weights: Vec<Option<Tensor>> = vec![None; manifest.layers.len()];
    let mut biases: Vec<Option<Tensor>> = vec![None; manifest.layers.len()];
    for e in &manifest.tensors {
        if e.byte_len % 4 != 0 {
            return Err(Error::OffsetLayout(format!(
                "tensor byte length {} is not a multiple of 4",
                e.byte_len
            )));
        }
        let start = e.offset as usize;
        let end = start + e.byte_len as usize;
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(Shape::new(e.shape.clone())?, data)?;
        let slot = match e.param {
            ParamKind::Weight => &mut weights,
            ParamKind::Bias => &mut biases,
        };
        let cell = slot
            .get_mut(e.layer)
            .ok_or_else(|| Error::Parse(format!("tensor entry names layer {}", e.layer)))?;
        if cell.is_some() {
            return Err(Error::OffsetLayout(format!(
                "layer {} has duplicate {:?} entries",
                e.layer, e.param
            )));
        }
        *cell = Some(tensor);
    }

    Network::from_parts(
        Shape::new(manifest.input_shape)?,
        manifest.layers,
        weights,
        biases,
        manifest.mask,
        manifest.protect_classifier,
        manifest.seed,
    )
}
