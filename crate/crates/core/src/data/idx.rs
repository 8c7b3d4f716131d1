//! IDX files (the MNIST distribution format), raw or gzip-compressed.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{PrancError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxFile {
    /// Pixels scaled to `[0, 1]`, image-major.
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<f32>,
    },
    Labels(Vec<u8>),
}

/// Reads a file, transparently inflating gzip content.
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(PrancError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile> {
    let magic = be_u32(bytes, 0)?;
    let (dims, header) = match magic {
        IDX_IMAGES_MAGIC => (3, 16),
        IDX_LABELS_MAGIC => (1, 8),
        other => {
            return Err(PrancError::DataFormat(format!("bad IDX magic {other:#010x}")));
        }
    };
    let shape = (0..dims)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let expected = header + shape.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(PrancError::DataFormat(format!(
            "IDX payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let body = &bytes[header..];
    Ok(if dims == 3 {
        IdxFile::Images {
            count: shape[0],
            rows: shape[1],
            cols: shape[2],
            pixels: body.iter().map(|&p| p as f32 / 255.0).collect(),
        }
    } else {
        IdxFile::Labels(body.to_vec())
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxFile> {
    parse_idx(&read_maybe_gz(path.as_ref())?)
}
