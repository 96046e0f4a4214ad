//! Checkpoint layout: the 8-byte magic `HJVALNET`, a little-endian u64
//! header length, a JSON header, then every weight matrix (row-major)
//! followed by its bias as little-endian f32. Training runs in f64, so a
//! save rounds parameters to single precision.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{Architecture, Layer, ValueNetwork, Variant};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HJVALNET";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    system: SystemSpec,
    variant: Variant,
    arch: Architecture,
    input_center: Vec<f64>,
    input_scale: Vec<f64>,
    seed: u64,
    layer_shapes: Vec<[usize; 2]>,
    dtype: String,
}

pub fn encode_checkpoint(net: &ValueNetwork) -> Result<Vec<u8>> {
    net.check_shapes()?;
    let header = Header {
        system: net.system.clone(),
        variant: net.variant,
        arch: net.arch.clone(),
        input_center: net.input_center.clone(),
        input_scale: net.input_scale.clone(),
        seed: net.seed,
        layer_shapes: net.layers.iter().map(|l| [l.weight.nrows(), l.weight.ncols()]).collect(),
        dtype: "f32le".into(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * net.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in &net.layers {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ValueNetwork> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::MalformedHeader("missing checkpoint magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if len > body.len() {
        return Err(Error::MalformedHeader(format!("header length {len} exceeds file size")));
    }
    let header: Header =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::MalformedHeader(format!("header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(Error::MalformedHeader(format!("unsupported dtype {:?}", header.dtype)));
    }
    let count: usize = header.layer_shapes.iter().map(|[o, i]| o * i + o).sum();
    let blob = &body[len..];
    if blob.len() != 4 * count {
        return Err(Error::TruncatedBlob { expected: 4 * count, found: blob.len() });
    }
    let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut layers = Vec::with_capacity(header.layer_shapes.len());
    for &[o, i] in &header.layer_shapes {
        let weight = Array2::from_shape_fn((o, i), |_| values.next().expect("counted"));
        let bias = Array1::from_shape_fn(o, |_| values.next().expect("counted"));
        layers.push(Layer { weight, bias });
    }
    let net = ValueNetwork {
        system: header.system,
        variant: header.variant,
        arch: header.arch,
        layers,
        input_center: header.input_center,
        input_scale: header.input_scale,
        seed: header.seed,
    };
    net.check_shapes()?;
    net.system.validate()?;
    Ok(net)
}

pub fn save_checkpoint(net: &ValueNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ValueNetwork> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Load a checkpoint and require it to belong to `system`.
pub fn load_checkpoint_for(path: &Path, system: &SystemSpec) -> Result<ValueNetwork> {
    let net = load_checkpoint(path)?;
    if &net.system != system {
        return Err(Error::SystemMismatch(format!(
            "checkpoint was trained for a different {} configuration",
            net.system.kind().name()
        )));
    }
    Ok(net)
}
