//! Binary checkpoint codec.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      "PALCASCKPT"
//! version    u32
//! signature  u32 length, UTF-8 bytes
//! count      u32 number of tensors
//! tensor*    u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PalcasError, Result};
use crate::nn::NamedTensor;

pub const MAGIC: &[u8; 10] = b"PALCASCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub signature: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Exact encoded size in bytes.
    pub fn encoded_len(&self) -> usize {
        let header = MAGIC.len() + 4 + 4 + self.signature.len() + 4;
        header
            + self
                .tensors
                .iter()
                .map(|t| 4 + t.name.len() + 4 + 8 * t.shape.len() + 8 * t.data.len())
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.signature);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(PalcasError::Schema("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(PalcasError::Schema(format!(
                "checkpoint format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let signature = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| truncated())?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(PalcasError::Schema("trailing bytes after checkpoint".into()));
        }
        Ok(Self { signature, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn truncated() -> PalcasError {
    PalcasError::Schema("truncated checkpoint".into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| PalcasError::Schema("non-UTF-8 string in checkpoint".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            signature: "sig".into(),
            tensors: vec![
                NamedTensor { name: "a".into(), shape: vec![2, 3], data: (0..6).map(f64::from).collect() },
                NamedTensor { name: "bb".into(), shape: vec![1], data: vec![-0.5] },
            ],
        }
    }

    #[test]
    fn round_trip_and_size() {
        let c = sample();
        let b = c.to_bytes();
        // 10 + 4 + (4 + 3) + 4 ; a: 4+1+4+16+48 ; bb: 4+2+4+8+8
        assert_eq!(b.len(), 25 + 73 + 26);
        assert_eq!(b.len(), c.encoded_len());
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), c);
    }

    #[test]
    fn rejects_corruption() {
        let b = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut v2 = b;
        v2[10] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(PalcasError::Schema(_))));
    }
}
