// SPDX-License-Identifier: MIT OR Apache-2.0

//! GSW1 weight files.
//!
//! Little-endian layout: magic `GSW1`; `u32` tensor count; then per tensor a
//! `u16` name length, the UTF-8 name, a `u8` rank, `rank` × `u32` dims, a
//! `u8` dtype (0 = f32) and the raw values. The descriptor travels in a
//! sidecar `<stem>.arch.json`; without one the reference descriptor is assumed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{ArchitectureDescriptor, NetError, PolicyNetwork, Tensor};

const MAGIC: &[u8; 4] = b"GSW1";

pub fn write_gsw1<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(0);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).ok_or(NetError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(NetError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NetError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parse every tensor in a GSW1 buffer, in file order.
pub fn read_gsw1(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, NetError> {
    if bytes.len() < 4 {
        return Err(if MAGIC.starts_with(bytes) { NetError::TruncatedFile } else { NetError::BadMagic });
    }
    if &bytes[..4] != MAGIC {
        return Err(NetError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| NetError::Io("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let dtype = r.u8()?;
        if dtype != 0 {
            return Err(NetError::BadDtype(dtype));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or(NetError::TruncatedFile)?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push((name, Tensor::new(dims, data)?));
    }
    Ok(out)
}

/// Descriptor sidecar next to a weight file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.arch.json"))
}

/// Write weights and the descriptor sidecar.
pub fn save_weights(net: &PolicyNetwork, path: &Path) -> Result<(), NetError> {
    let bytes = write_gsw1(net.weights().iter().map(|(k, v)| (k.as_str(), v)));
    std::fs::write(path, bytes)?;
    let arch = serde_json::to_string_pretty(net.descriptor()).map_err(|e| NetError::Io(e.to_string()))?;
    std::fs::write(sidecar_path(path), arch)?;
    Ok(())
}

/// Read a GSW1 file and check it against its descriptor.
pub fn load_weights(path: &Path) -> Result<PolicyNetwork, NetError> {
    let bytes = std::fs::read(path)?;
    let descriptor = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(s) => serde_json::from_str(&s).map_err(|e| NetError::Descriptor(e.to_string()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => ArchitectureDescriptor::reference(),
        Err(e) => return Err(e.into()),
    };
    let weights: BTreeMap<String, Tensor> = read_gsw1(&bytes)?.into_iter().collect();
    PolicyNetwork::new(descriptor, weights)
}
