//! Binary container for named matrices.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  b"FRNCKPT\0"
//! version  u32      1
//! count    u32      number of entries
//! entry*   name_len u32, name (UTF-8), rows u64, cols u64,
//!          rows*cols f64 values in row-major order
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::matrix::Matrix;
use crate::optim::ParamSet;

pub const MAGIC: &[u8; 8] = b"FRNCKPT\0";
pub const VERSION: u32 = 1;

pub fn encode(entries: &[(String, Matrix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, m) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::schema(self.source, format!("truncated at byte {}", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], source: &str) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        source,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::schema(source, "bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::schema(source, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::schema(source, "entry name is not UTF-8"))?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::schema(source, "entry size overflow"))?;
        let payload = r.take(n.checked_mul(8).ok_or_else(|| Error::schema(source, "entry size overflow"))?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = Matrix::new(rows, cols, data)
            .map_err(|e| Error::schema(source, format!("entry {name}: {e}")))?;
        entries.push((name, m));
    }
    if r.pos != bytes.len() {
        return Err(Error::schema(source, "trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn write(path: &Path, entries: &[(String, Matrix)]) -> Result<()> {
    fsutil::write_atomic(path, &encode(entries))
}

pub fn read(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let bytes = fsutil::read_bytes(path)?;
    decode(&bytes, &path.display().to_string())
}

pub fn params_to_entries(params: &ParamSet) -> Vec<(String, Matrix)> {
    params.iter().map(|p| (p.name.clone(), p.value().clone())).collect()
}

pub fn find<'a>(entries: &'a [(String, Matrix)], name: &str) -> Option<&'a Matrix> {
    entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
}
