//! Binary matrix snapshots: row-major little-endian `f64` plus a JSON sidecar.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub rows: usize,
    pub cols: usize,
    pub step: u64,
    pub eta_t: f64,
    pub run_id: String,
}

pub fn encode(m: &Array2<f64>) -> Vec<u8> {
    // Iterating an ndarray visits elements in logical (row-major) order
    // whatever the memory layout.
    encode_values(m.iter())
}

/// Little-endian bytes of a flat vector (e.g. the output bias).
pub fn encode_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode(bytes: &[u8], rows: usize, cols: usize) -> Result<Array2<f64>> {
    if bytes.len() != rows * cols * 8 {
        return Err(invalid(format!(
            "{} bytes cannot hold a {rows} x {cols} f64 matrix",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}
