//! Flat little-endian tensor container.
//!
//! Layout: the 8-byte magic `FBMCKPT1`, a `u32` header length and that many
//! bytes of UTF-8 `key=value` lines, then named tensors until end of file.
//! Each tensor is a `u32` name length, the name, a `u32` rank, one `u32` per
//! dimension and the `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{FbmError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FBMCKPT1";

pub fn sha256_hex(s: &str) -> String {
    let d = Sha256::digest(s.as_bytes());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| FbmError::Format(format!("{what} {n} does not fit in u32")))
}

pub fn write_container<'a>(
    path: &Path,
    header: &str,
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&u32_of(header.len(), "header length")?.to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for (name, t) in tensors {
        w.write_all(&u32_of(name.len(), "name length")?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&u32_of(t.rank(), "rank")?.to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&u32_of(d, "dimension")?.to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FbmError::Format(format!(
                "file truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn read_container(path: &Path) -> Result<(String, Vec<(String, Tensor)>)> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    parse_container(&buf)
}

pub fn parse_container(buf: &[u8]) -> Result<(String, Vec<(String, Tensor)>)> {
    let mut c = Cursor { buf, pos: 0 };
    let magic = c.take(8, "magic")?;
    if magic != MAGIC {
        return Err(FbmError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            std::str::from_utf8(MAGIC).unwrap()
        )));
    }
    let hl = c.u32("header length")?;
    let header = std::str::from_utf8(c.take(hl, "header")?)
        .map_err(|e| FbmError::Format(format!("header is not UTF-8: {e}")))?
        .to_string();
    let mut out = Vec::new();
    while !c.done() {
        let nl = c.u32("name length")?;
        let name = std::str::from_utf8(c.take(nl, "tensor name")?)
            .map_err(|e| FbmError::Format(format!("tensor name is not UTF-8: {e}")))?
            .to_string();
        let rank = c.u32("rank")?;
        if rank > 16 {
            return Err(FbmError::Format(format!("tensor '{name}' has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| c.u32("dimension")).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| FbmError::Format(format!("tensor '{name}' is too large")))?;
        let raw = c.take(n * 8, "tensor values")?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    Ok((header, out))
}

/// Parses `key=value` lines, keeping order.
pub fn parse_header(header: &str) -> Result<Vec<(String, String)>> {
    header
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| FbmError::Format(format!("header line '{l}' is not key=value")))
        })
        .collect()
}
