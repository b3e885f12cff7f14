//! Flat binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"DCPARAM1"
//! count    u32                      number of tensors
//! repeated count times:
//!   name_len u16, name bytes (UTF-8)
//!   ndim     u8, dims u64 * ndim
//! values   f64 * sum(prod(dims))    tensors concatenated in table order
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use super::param::Param;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DCPARAM1";

pub fn encode(params: &[Param]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.shape.len() as u8);
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in params {
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| self.fail("truncated checkpoint"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn fail(&self, reason: &str) -> Error {
        Error::Parse { line: self.at, reason: reason.into() }
    }
}

/// Decode a checkpoint; `Parse::line` carries the byte offset of the failure.
pub fn decode(bytes: &[u8]) -> Result<Vec<Param>> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::Parse { line: 0, reason: "bad checkpoint magic".into() });
    }
    let count = u32::from_le_bytes(c.array()?) as usize;
    let mut params = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(c.array()?) as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| c.fail("parameter name is not UTF-8"))?;
        let ndim = c.array::<1>()?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(usize::try_from(u64::from_le_bytes(c.array()?)).map_err(|_| c.fail("dimension overflow"))?);
        }
        params.push(Param { name, shape, value: Vec::new() });
    }
    for p in &mut params {
        let n = p.shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| c.fail("dimension overflow"))?;
        if n > (bytes.len() - c.at) / 8 {
            return Err(c.fail("truncated checkpoint"));
        }
        p.value = (0..n).map(|_| c.array().map(f64::from_le_bytes)).collect::<Result<_>>()?;
    }
    if c.at != bytes.len() {
        return Err(c.fail("trailing bytes after checkpoint"));
    }
    Ok(params)
}
