//! "PLCK v1" named-tensor container.
//!
//! Layout, all integers little-endian, no padding:
//!
//! ```text
//! "PLCK" | u16 version = 1 | u32 entry count
//! per entry: u16 name length | name bytes (UTF-8) | u8 rank
//!            | rank x u64 extents | product(extents) x f64 (row-major)
//! ```
//!
//! Entries are written in lexicographic name order.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const PLCK_MAGIC: &[u8; 4] = b"PLCK";
pub const PLCK_VERSION: u16 = 1;

pub type TensorMap = BTreeMap<String, Tensor>;

pub fn encode_tensors(entries: &TensorMap) -> Result<Vec<u8>> {
    let count = u32::try_from(entries.len())
        .map_err(|_| Error::Argument("too many entries for PLCK".into()))?;
    let payload: usize = entries
        .iter()
        .map(|(k, t)| 2 + k.len() + 1 + 8 * t.rank() + 8 * t.len())
        .sum();
    let mut out = Vec::with_capacity(10 + payload);
    out.extend_from_slice(PLCK_MAGIC);
    out.extend_from_slice(&PLCK_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in entries {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Argument(format!("entry name of {} bytes exceeds 65535", name.len())))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| Error::Argument(format!("rank {} of '{name}' exceeds 255", t.rank())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos as u64,
            msg: msg.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<TensorMap> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != PLCK_MAGIC {
        r.pos = 0;
        return r.fail("bad magic, expected \"PLCK\"");
    }
    let version = r.u16("version")?;
    if version != PLCK_VERSION {
        r.pos -= 2;
        return r.fail(format!("unsupported version {version}"));
    }
    let count = r.u32("entry count")?;
    let mut map = TensorMap::new();
    for _ in 0..count {
        let start = r.pos;
        let len = r.u16("name length")? as usize;
        let name_bytes = r.take(len, "name")?;
        let name = match std::str::from_utf8(name_bytes) {
            Ok(s) => s.to_owned(),
            Err(_) => {
                r.pos = start + 2;
                return r.fail("entry name is not UTF-8");
            }
        };
        let rank = r.u8("rank")? as usize;
        if rank == 0 {
            r.pos -= 1;
            return r.fail(format!("entry '{name}' has rank 0"));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel = 1usize;
        for _ in 0..rank {
            let e = r.u64("extent")?;
            let e = usize::try_from(e).ok().filter(|&e| e > 0);
            let Some(e) = e else {
                r.pos -= 8;
                return r.fail(format!("entry '{name}' has an invalid extent"));
            };
            numel = match numel.checked_mul(e) {
                Some(n) => n,
                None => return r.fail(format!("entry '{name}' shape overflows")),
            };
            shape.push(e);
        }
        let nbytes = numel
            .checked_mul(8)
            .ok_or_else(|| Error::Format { offset: r.pos as u64, msg: "entry too large".into() })?;
        let raw = r.take(nbytes, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).expect("validated shape");
        if map.insert(name.clone(), t).is_some() {
            r.pos = start;
            return r.fail(format!("duplicate entry '{name}'"));
        }
    }
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(map)
}

pub fn save_tensors(path: impl AsRef<Path>, entries: &TensorMap) -> Result<()> {
    std::fs::write(path, encode_tensors(entries)?)?;
    Ok(())
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<TensorMap> {
    decode_tensors(&std::fs::read(path)?)
}
