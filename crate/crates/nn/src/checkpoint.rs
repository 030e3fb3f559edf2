//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AIDW" | u32 version = 1 | u32 entry count
//! per entry: u32 name length | name (UTF-8) | u8 kind (0 param, 1 buffer)
//!            | u32 rank | u32 dims... | f32 values...
//! u32 CRC32 of everything above
//! ```

use std::fs;
use std::path::Path;

use crate::error::{NnError, Result};
use crate::models::Model;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"AIDW";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn entries_of<T: Scalar>(model: &Model<T>) -> Vec<CheckpointEntry> {
    let to_f32 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy() as f32).collect();
    let params = model.params().into_iter().map(|p| CheckpointEntry {
        name: p.name.clone(),
        kind: EntryKind::Param,
        shape: p.value.shape().to_vec(),
        values: to_f32(p.value.data()),
    });
    let buffers = model.buffers().into_iter().map(|b| CheckpointEntry {
        name: b.name.clone(),
        kind: EntryKind::Buffer,
        shape: b.value.shape().to_vec(),
        values: to_f32(b.value.data()),
    });
    params.chain(buffers).collect()
}

pub fn encode(entries: &[CheckpointEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(match e.kind {
            EntryKind::Param => 0,
            EntryKind::Buffer => 1,
        });
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<CheckpointEntry>> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(NnError::Format("missing AIDW magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(NnError::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NnError::Format("entry name is not UTF-8".into()))?
            .to_string();
        let kind = match r.take(1)?[0] {
            0 => EntryKind::Param,
            1 => EntryKind::Buffer,
            k => return Err(NnError::Format(format!("unknown entry kind {k}"))),
        };
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| NnError::Format("entry too large".into()))?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        entries.push(CheckpointEntry { name, kind, shape, values });
    }
    if r.pos != body.len() {
        return Err(NnError::Format("trailing bytes after last entry".into()));
    }
    Ok(entries)
}

pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(&entries_of(model)))?;
    Ok(())
}

/// Load values into an already-built model whose names and shapes match.
pub fn load_into<T: Scalar>(model: &mut Model<T>, path: &Path) -> Result<()> {
    let entries = decode(&fs::read(path)?)?;
    apply(model, &entries)
}

pub fn apply<T: Scalar>(model: &mut Model<T>, entries: &[CheckpointEntry]) -> Result<()> {
    let find = |name: &str, kind: EntryKind| {
        entries
            .iter()
            .find(|e| e.name == name && e.kind == kind)
            .ok_or_else(|| NnError::Format(format!("checkpoint has no entry `{name}`")))
    };
    for p in model.params_mut() {
        let e = find(&p.name, EntryKind::Param)?;
        if e.shape != p.value.shape() {
            return Err(NnError::shape(format!("checkpoint entry {}", p.name), p.value.shape(), &e.shape));
        }
        for (d, &v) in p.value.data_mut().iter_mut().zip(&e.values) {
            *d = T::lit(v as f64);
        }
    }
    for b in model.buffers_mut() {
        let e = find(&b.name, EntryKind::Buffer)?;
        if e.shape != b.value.shape() {
            return Err(NnError::shape(format!("checkpoint entry {}", b.name), b.value.shape(), &e.shape));
        }
        for (d, &v) in b.value.data_mut().iter_mut().zip(&e.values) {
            *d = T::lit(v as f64);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_sb_resnet18;

    #[test]
    fn corrupted_byte_fails_checksum() {
        let model = build_sb_resnet18::<f32>(1, 3).unwrap();
        let mut bytes = encode(&entries_of(&model));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(decode(&bytes), Err(NnError::ChecksumMismatch { .. })));
    }

    #[test]
    fn round_trip_restores_parameters() {
        let src = build_sb_resnet18::<f32>(3, 11).unwrap();
        let mut dst = build_sb_resnet18::<f32>(3, 12).unwrap();
        let entries = decode(&encode(&entries_of(&src))).unwrap();
        apply(&mut dst, &entries).unwrap();
        for (a, b) in src.params().iter().zip(dst.params()) {
            assert_eq!(a.value, b.value);
        }
    }
}
