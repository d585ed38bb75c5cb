//! Binary archive shared by weight files and training checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "RNOF"
//! version    u32
//! meta_len   u64
//! meta       meta_len bytes of UTF-8 JSON
//! n_tensors  u32
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   rank     u32, dims (u64 each)
//!   payload  numel f64 values
//! ```
//!
//! Readers reject a wrong magic, an unknown version, truncation, and
//! trailing bytes.

use std::io::{ErrorKind, Read, Write};

use super::{ModelError, Result};
use crate::tensor::Tensor;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"RNOF";
pub const ARCHIVE_VERSION: u32 = 1;

const MAX_NAME: usize = 4096;
const MAX_RANK: usize = 16;

pub fn write_archive<'a>(
    w: &mut impl Write,
    meta: &[u8],
    tensors: impl Iterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    let tensors: Vec<_> = tensors.collect();
    w.write_all(&ARCHIVE_MAGIC)?;
    w.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(meta)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.dims().len() as u32).to_le_bytes())?;
        for &d in t.dims() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => ModelError::Format(format!("truncated file while reading {what}")),
        _ => ModelError::Io(e),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

/// Returns the raw metadata bytes and the named tensors, in file order.
pub fn read_archive(r: &mut impl Read) -> Result<(Vec<u8>, Vec<(String, Tensor)>)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if magic != ARCHIVE_MAGIC {
        return Err(ModelError::Format("not a runoff archive (bad magic)".into()));
    }
    let version = read_u32(r, "version")?;
    if version != ARCHIVE_VERSION {
        return Err(ModelError::Format(format!(
            "unsupported archive version {version} (expected {ARCHIVE_VERSION})"
        )));
    }
    let meta_len = read_u64(r, "metadata length")? as usize;
    if meta_len > 1 << 28 {
        return Err(ModelError::Format(format!("implausible metadata length {meta_len}")));
    }
    let mut meta = vec![0u8; meta_len];
    read_exact(r, &mut meta, "metadata")?;

    let n = read_u32(r, "tensor count")? as usize;
    let mut tensors = Vec::with_capacity(n.min(1024));
    for i in 0..n {
        let name_len = read_u32(r, "tensor name length")? as usize;
        if name_len > MAX_NAME {
            return Err(ModelError::Format(format!("tensor {i}: name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len];
        read_exact(r, &mut name, "tensor name")?;
        let name = String::from_utf8(name).map_err(|_| ModelError::Format(format!("tensor {i}: name is not UTF-8")))?;
        let rank = read_u32(r, "tensor rank")? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(ModelError::Format(format!("tensor `{name}`: invalid rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(r, "tensor dims")? as usize);
        }
        let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).filter(|&n| n <= 1 << 30);
        let Some(numel) = numel else {
            return Err(ModelError::Format(format!("tensor `{name}`: implausible shape {dims:?}")));
        };
        let mut raw = vec![0u8; numel * 8];
        read_exact(r, &mut raw, &format!("payload of `{name}`"))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let t = Tensor::from_vec(&dims, data).map_err(|e| ModelError::Format(format!("tensor `{name}`: {e}")))?;
        tensors.push((name, t));
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok((meta, tensors)),
        _ => Err(ModelError::Format("trailing bytes after last tensor".into())),
    }
}
