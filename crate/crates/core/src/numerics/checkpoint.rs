//! Parameter archive: a binary file of `(name, shape, little-endian f64 data)`
//! entries plus a text manifest next to it.
//!
//! Archive layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MATTNCK1"
//! count    u64
//! entry*   u32 name_len | name (utf-8) | u32 ndim | u64 dim * ndim | f64 * numel
//! ```
//!
//! The manifest (`<archive>.manifest`) holds `key=value` configuration lines
//! followed by one `param <name> <d0>x<d1>...` line per entry, in archive
//! order.

use std::fs;
use std::path::{Path, PathBuf};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MATTNCK1";

pub fn manifest_path(archive: &Path) -> PathBuf {
    let mut s = archive.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn encode_archive(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated archive".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = r.u64()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nl = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nl)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last entry".into()));
    }
    Ok(store)
}

pub fn encode_manifest(store: &ParamStore, config: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in config {
        s.push_str(&format!("{k}={v}\n"));
    }
    for (name, t) in store.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        s.push_str(&format!("param {} {}\n", name, dims.join("x")));
    }
    s
}

/// Returns the configuration pairs and the listed parameter names.
pub fn decode_manifest(text: &str) -> Result<(Vec<(String, String)>, Vec<String>)> {
    let mut cfg = Vec::new();
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("param ") {
            let name = rest.split_whitespace().next().ok_or(Error::Parse {
                line: i + 1,
                msg: "missing parameter name".into(),
            })?;
            names.push(name.to_string());
        } else if let Some((k, v)) = line.split_once('=') {
            cfg.push((k.to_string(), v.to_string()));
        } else {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("unrecognised manifest line {line:?}"),
            });
        }
    }
    Ok((cfg, names))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, config: &[(String, String)]) -> Result<()> {
    fs::write(path, encode_archive(store))?;
    fs::write(manifest_path(path), encode_manifest(store, config))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, Vec<(String, String)>)> {
    let store = decode_archive(&fs::read(path)?)?;
    let (cfg, names) = decode_manifest(&fs::read_to_string(manifest_path(path))?)?;
    if names.as_slice() != store.names() {
        return Err(Error::Checkpoint("manifest parameter list does not match archive".into()));
    }
    Ok((store, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_layout_is_fixed() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::new(vec![2], vec![1.0, -2.5]).unwrap()).unwrap();
        let bytes = encode_archive(&s);
        let mut expected = b"MATTNCK1".to_vec();
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'a');
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(decode_archive(&bytes).unwrap(), s);
    }

    #[test]
    fn truncated_archive_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[3, 3])).unwrap();
        let bytes = encode_archive(&s);
        assert!(decode_archive(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut s = ParamStore::new();
        s.insert("x", Tensor::new(vec![1, 2], vec![0.1, 0.2]).unwrap()).unwrap();
        let cfg = vec![("M".to_string(), "10".to_string())];
        save_checkpoint(&path, &s, &cfg).unwrap();
        let (back, cfg2) = load_checkpoint(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(cfg2, cfg);
        let manifest = fs::read_to_string(manifest_path(&path)).unwrap();
        assert_eq!(manifest, "M=10\nparam x 1x2\n");
    }
}
