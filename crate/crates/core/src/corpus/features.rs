//! Binary feature matrices: `"L1MD"`, u32 version, u32 frames, u32 dims,
//! then `frames·dims` little-endian f32 values in row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"L1MD";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    frames: usize,
    dims: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || dims == 0 {
            return Err(Error::Validation(format!("feature matrix {frames}×{dims} is empty")));
        }
        if data.len() != frames * dims {
            return Err(Error::Validation(format!(
                "feature matrix {frames}×{dims} given {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix contains non-finite values".into()));
        }
        Ok(Self { frames, dims, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dims = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::Validation("ragged feature rows".into()));
        }
        Self::new(rows.len(), dims, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f32>> {
        self.data.chunks(self.dims).map(<[f32]>::to_vec).collect()
    }

    pub fn to_tensor(&self) -> crate::Tensor {
        crate::Tensor::matrix(self.frames, self.dims, self.data.iter().map(|&v| f64::from(v)).collect())
            .expect("validated shape")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
            return Err(Error::Format("feature file lacks the L1MD header".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("unsupported feature file version {version}")));
        }
        let (frames, dims) = (word(8) as usize, word(12) as usize);
        let body = &bytes[16..];
        if body.len() != frames * dims * 4 {
            return Err(Error::Format(format!(
                "feature file declares {frames}×{dims} but holds {} bytes of data",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::new(frames, dims, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
