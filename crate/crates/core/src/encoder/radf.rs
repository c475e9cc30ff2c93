//! RADF: a small checksummed container for float32 feature tensors.
//!
//! Layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `RADF` |
//! | 2     | version, currently 1 |
//! | 1     | kind |
//! | 4×3   | `L`, `T`, `F` |
//! | 4·L·T·F | payload, layer-major `(l, t, f)` |
//! | 4     | CRC32 of the payload bytes |

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RADF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RadfKind {
    Long = 1,
    Short = 2,
    Embedding = 3,
    /// One layer of a vector store: `L = 1`, `T = N` records.
    Vectors = 4,
    /// A named parameter tensor inside a checkpoint.
    Param = 5,
}

impl RadfKind {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => RadfKind::Long,
            2 => RadfKind::Short,
            3 => RadfKind::Embedding,
            4 => RadfKind::Vectors,
            5 => RadfKind::Param,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadfTensor {
    pub kind: RadfKind,
    pub dims: [usize; 3],
    pub data: Vec<f32>,
}

impl RadfTensor {
    pub fn new(kind: RadfKind, dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidInput(format!(
                "RADF dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        Ok(Self { kind, dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[HEADER_LEN..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Decode and validate. `origin` only labels error messages.
    pub fn decode(bytes: &[u8], origin: &str) -> Result<Self> {
        let fail = |msg: String| Error::Format {
            path: origin.to_string(),
            msg,
        };
        if bytes.len() < HEADER_LEN + 4 {
            return Err(fail(format!("{} bytes is shorter than a header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let kind = RadfKind::from_u8(bytes[6]).ok_or_else(|| fail(format!("unknown kind {}", bytes[6])))?;
        let dim = |i: usize| {
            let o = 7 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as u64
        };
        let dims = [dim(0), dim(1), dim(2)];
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| fail("shape overflows".into()))?;
        let payload_len = bytes.len() - HEADER_LEN - 4;
        if count.checked_mul(4) != Some(payload_len as u64) {
            return Err(fail(format!(
                "header shape {}x{}x{} needs {} payload bytes, file has {payload_len}",
                dims[0],
                dims[1],
                dims[2],
                count * 4
            )));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_len];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(payload) != stored {
            return Err(fail("checksum mismatch".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            kind,
            dims: dims.map(|d| d as usize),
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::decode(&bytes, &path.display().to_string())
    }
}
