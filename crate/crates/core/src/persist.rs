//! Binary model files.
//!
//! Layout (little-endian): `b"ARAE"`, version `u16`, layer count `u16`, then
//! per layer `in_dim u32`, `out_dim u32`, activation `u8`, row-major weights
//! and biases as `f64`; finally an FNV-1a 64-bit checksum of every preceding
//! byte. Encoder layers come first, then decoder layers.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::model::{Autoencoder, ModelError};
use crate::nn::{Activation, DenseLayer};

pub const MAGIC: &[u8; 4] = b"ARAE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    BadChecksum { stored: u64, computed: u64 },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("model file truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode_model(ae: &Autoencoder) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * ae.param_count() + 9 * ae.layer_count());
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend((ae.layer_count() as u16).to_le_bytes());
    for layer in ae.layers() {
        out.extend((layer.in_dim() as u32).to_le_bytes());
        out.extend((layer.out_dim() as u32).to_le_bytes());
        out.push(layer.activation.code());
        for v in layer.weights.iter().chain(layer.biases.iter()) {
            out.extend(v.to_le_bytes());
        }
    }
    let sum = fnv1a64(&out);
    out.extend(sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        if self.bytes.len() - self.offset < n {
            return Err(PersistError::Truncated { offset: self.offset });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, PersistError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PersistError> {
        let bytes = self.take(n.checked_mul(8).ok_or(PersistError::Truncated { offset: self.offset })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Autoencoder, PersistError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(PersistError::BadMagic);
    }
    if bytes.len() < 4 + 2 + 2 + 8 {
        return Err(PersistError::Truncated { offset: bytes.len() });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8-byte trailer"));
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(PersistError::BadChecksum { stored, computed });
    }
    let mut r = Reader { bytes: body, offset: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let count = r.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let code = r.take(1)?[0];
        let activation = Activation::from_code(code)
            .ok_or_else(|| PersistError::Malformed(format!("layer {i}: unknown activation code {code}")))?;
        let weights = r.f64s(in_dim * out_dim)?;
        let biases = r.f64s(out_dim)?;
        let weights = Array2::from_shape_vec((out_dim, in_dim), weights)
            .map_err(|e| PersistError::Malformed(format!("layer {i}: {e}")))?;
        layers.push(
            DenseLayer::new(weights, Array1::from(biases), activation)
                .map_err(|e| PersistError::Malformed(format!("layer {i}: {e}")))?,
        );
    }
    if r.offset != body.len() {
        return Err(PersistError::Malformed(format!(
            "{} unexpected bytes after the last layer",
            body.len() - r.offset
        )));
    }
    Ok(Autoencoder::from_layers(layers)?)
}

pub fn save_model(ae: &Autoencoder, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, encode_model(ae)).map_err(|source| PersistError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Autoencoder, PersistError> {
    let bytes = std::fs::read(path).map_err(|source| PersistError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_model(&bytes)
}
