//! Binary embedding store.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "RPD1"
//! 4       4           u32 version (1)
//! 8       4           u32 dimension d
//! 12      8           u64 count m
//! 20      m * d * 4   f32 rows, row-major; row r belongs to keyframe_id r
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RPD1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

const NORM_TOLERANCE: f32 = 1e-4;

/// An immutable `count x dimension` matrix of unit rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    rows: Vec<f32>,
}

impl EmbeddingStore {
    /// Checks shape, finiteness and unit norm of every row.
    pub fn new(dimension: usize, rows: Vec<f32>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("store dimension must be positive".into()));
        }
        if rows.len() % dimension != 0 {
            return Err(Error::Validation(format!(
                "{} values is not a whole number of {dimension}-dimensional rows",
                rows.len()
            )));
        }
        for (r, row) in rows.chunks_exact(dimension).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("store row {r} has non-finite values")));
            }
            let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt() as f32;
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::Validation(format!("store row {r} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { dimension, rows })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn count(&self) -> usize {
        self.rows.len() / self.dimension
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.rows[r * self.dimension..(r + 1) * self.dimension]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.rows
    }

    pub fn into_flat(self) -> Vec<f32> {
        self.rows
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Ingestion(format!(
                "store is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Ingestion("store magic is not RPD1".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Ingestion(format!("unsupported store version {version}")));
        }
        let dimension = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let expected = (count as u128) * (dimension as u128) * 4 + HEADER_LEN as u128;
        if expected != bytes.len() as u128 {
            return Err(Error::Ingestion(format!(
                "store header declares {count} x {dimension} rows ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let rows = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dimension, rows).map_err(|e| Error::Ingestion(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
