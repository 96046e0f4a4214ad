//! Value-field files: 8-byte magic, little-endian u64 header length, JSON
//! header, then every slice as little-endian f64 in grid order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Grid, ValueField};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 8] = b"HJVFLD01";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldHeader {
    grid: Grid,
    system: SystemSpec,
    times: Vec<f64>,
    slice_len: usize,
    dtype: String,
}

pub fn encode_field(field: &ValueField) -> Result<Vec<u8>> {
    let header = FieldHeader {
        grid: field.grid.clone(),
        system: field.system.clone(),
        times: field.times.clone(),
        slice_len: field.grid.len(),
        dtype: "f64le".into(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * field.grid.len() * field.times.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for slice in &field.slices {
        for v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_field(bytes: &[u8]) -> Result<ValueField> {
    if bytes.len() < 16 || &bytes[..8] != FIELD_MAGIC {
        return Err(Error::MalformedHeader("missing value-field magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::MalformedHeader("header length exceeds file".into()))?;
    let header: FieldHeader = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(Error::MalformedHeader(format!("unsupported dtype {}", header.dtype)));
    }
    let grid = Grid::new(header.grid.counts, header.grid.bounds, header.grid.periodic)?;
    if header.slice_len != grid.len() {
        return Err(Error::ShapeMismatch(format!("slice length {} for {} nodes", header.slice_len, grid.len())));
    }
    if header.times.is_empty() {
        return Err(Error::MalformedHeader("no time slices".into()));
    }
    let expected = 8 * grid.len() * header.times.len();
    let blob = &bytes[header_end..];
    if blob.len() != expected {
        return Err(Error::TruncatedBlob { expected, found: blob.len() });
    }
    let slices = blob
        .chunks_exact(8 * grid.len())
        .map(|chunk| {
            chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect()
        })
        .collect();
    Ok(ValueField { grid, system: header.system, times: header.times, slices })
}

pub fn write_field(field: &ValueField, path: &Path) -> Result<()> {
    let bytes = encode_field(field)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ValueField> {
    decode_field(&fs::read(path)?)
}
