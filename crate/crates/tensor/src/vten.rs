//! VTEN binary tensor files: `"VTEN"`, version `0x01`, dtype byte, rank byte,
//! `rank` little-endian u32 extents, then the little-endian row-major payload.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::float::{DType, Element};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VTEN";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum VtenError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0:#04x}")]
    Version(u8),
    #[error("unknown dtype code {0:#04x}")]
    UnknownDType(u8),
    #[error("dtype mismatch: file holds {found:?}, expected {expected:?}")]
    DTypeMismatch { expected: DType, found: DType },
    #[error("truncated file: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("trailing bytes after payload")]
    Trailing,
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub fn encode<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + t.numel() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

/// Reads the header: dtype and shape, plus the payload offset.
pub fn peek_header(bytes: &[u8]) -> Result<(DType, Vec<usize>, usize), VtenError> {
    if bytes.len() < 7 {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            VtenError::BadMagic
        } else {
            VtenError::Truncated {
                need: 7,
                have: bytes.len(),
            }
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(VtenError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(VtenError::Version(bytes[4]));
    }
    let dtype = DType::from_code(bytes[5]).ok_or(VtenError::UnknownDType(bytes[5]))?;
    let rank = bytes[6] as usize;
    let header = 7 + 4 * rank;
    if bytes.len() < header {
        return Err(VtenError::Truncated {
            need: header,
            have: bytes.len(),
        });
    }
    let shape = (0..rank)
        .map(|i| {
            let o = 7 + 4 * i;
            u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    Ok((dtype, shape, header))
}

pub fn decode<T: Element>(bytes: &[u8]) -> Result<Tensor<T>, VtenError> {
    let (dtype, shape, header) = peek_header(bytes)?;
    if dtype != T::DTYPE {
        return Err(VtenError::DTypeMismatch {
            expected: T::DTYPE,
            found: dtype,
        });
    }
    let n: usize = shape.iter().product();
    let need = header + n * dtype.size();
    if bytes.len() < need {
        return Err(VtenError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    if bytes.len() > need {
        return Err(VtenError::Trailing);
    }
    let data = bytes[header..]
        .chunks_exact(dtype.size())
        .map(T::read_le)
        .collect();
    Tensor::new(shape, data).map_err(|e| VtenError::Shape(e.to_string()))
}

pub fn write<T: Element>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<(), VtenError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn read<T: Element>(path: impl AsRef<Path>) -> Result<Tensor<T>, VtenError> {
    decode(&fs::read(path)?)
}
