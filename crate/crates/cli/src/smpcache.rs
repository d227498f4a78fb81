//! Per-(realization, video) SMP maps of the probed boundaries, cached on
//! disk. A cache file records a digest of the checkpoint and video it came
//! from and is rebuilt when either changes.
//!
//! Layout (little-endian): `NSMP`, u16 version, 32-byte source digest,
//! u32 map count, then per map u32 boundary, 3 × u32 shape, f64 values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nslab::probe::SmpMap;
use nslab::{Error, Result};

const MAGIC: &[u8; 4] = b"NSMP";
const VERSION: u16 = 1;

pub type Digest = [u8; 32];

pub fn encode(source: &Digest, maps: &BTreeMap<usize, SmpMap>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(source);
    out.extend_from_slice(&(maps.len() as u32).to_le_bytes());
    for map in maps.values() {
        out.extend_from_slice(&(map.boundary as u32).to_le_bytes());
        for d in map.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &map.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                what: self.what.to_string(),
                offset: self.pos as u64,
                msg: format!("truncated: need {n} more bytes"),
            });
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Returns the stored digest and maps.
pub fn decode(bytes: &[u8], what: &str) -> Result<(Digest, BTreeMap<usize, SmpMap>)> {
    let mut r = Reader { bytes, pos: 0, what };
    if r.take(4)? != MAGIC {
        return Err(Error::Format {
            what: what.into(),
            offset: 0,
            msg: "bad magic".into(),
        });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Format {
            what: what.into(),
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let source: Digest = r.take(32)?.try_into().expect("32 bytes");
    let count = r.u32()?;
    let mut maps = BTreeMap::new();
    for _ in 0..count {
        let boundary = r.u32()?;
        let shape = [r.u32()?, r.u32()?, r.u32()?];
        let n: usize = shape.iter().product();
        let values = r.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        maps.insert(boundary, SmpMap { boundary, shape, values });
    }
    Ok((source, maps))
}

/// Cached maps if the file exists and matches `source`.
pub fn load_if_current(path: &Path, source: &Digest) -> Result<Option<BTreeMap<usize, SmpMap>>> {
    if !path.exists() {
        return Ok(None);
    }
    let (stored, maps) = decode(&fs::read(path)?, &path.display().to_string())?;
    Ok((stored == *source).then_some(maps))
}

pub fn save(path: &Path, source: &Digest, maps: &BTreeMap<usize, SmpMap>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode(source, maps))?;
    Ok(())
}
