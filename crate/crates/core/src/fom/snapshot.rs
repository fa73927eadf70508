//! Snapshot binary format.
//!
//! Layout: the 8 magic bytes `AAROCSNP`, a little-endian `u32` version (1),
//! `u64` rows, `u64` cols, then `rows * cols` little-endian `f64` values in
//! column-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::FomError;
use crate::numerics::DenseMatrix;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"AAROCSNP";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(matrix: &DenseMatrix, mut w: W) -> std::io::Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(matrix.rows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(matrix.as_col_major().len() * 8);
    for v in matrix.as_col_major() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], FomError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| FomError::Format(format!("truncated snapshot header: {e}")))?;
    Ok(b)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<DenseMatrix, FomError> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(FomError::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != SNAPSHOT_VERSION {
        return Err(FomError::Format(format!("unsupported snapshot version {version}")));
    }
    let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let cols = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| FomError::Format("matrix dimensions overflow".into()))?;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| FomError::Format(format!("truncated snapshot payload: {e}")))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::from_col_major(rows, cols, data)?)
}

pub fn write_snapshot_file(matrix: &DenseMatrix, path: &Path) -> std::io::Result<()> {
    let mut bytes = Vec::new();
    write_snapshot(matrix, &mut bytes)?;
    crate::harness::write_atomic(path, &bytes)
}

pub fn read_snapshot_file(path: &Path) -> Result<DenseMatrix, FomError> {
    let bytes = std::fs::read(path)?;
    read_snapshot(bytes.as_slice())
}
