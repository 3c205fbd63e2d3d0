//! Little-endian binary weight containers and their text manifests.
//!
//! A container starts with a four-byte magic and a `u32` version, followed
//! by a format-specific sequence of `u32` shape fields and `f32` arrays.
//! The sidecar manifest (`<file>.txt`) holds `key = value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Linear};

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Default)]
pub struct WeightWriter {
    buf: Vec<u8>,
}

impl WeightWriter {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut w = Self { buf: magic.to_vec() };
        w.u32(CONTAINER_VERSION);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, values: &[f64]) {
        for v in values {
            self.buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }

    /// `u32 in, u32 out`, weights, bias.
    pub fn conv(&mut self, c: &Conv2d) {
        self.u32(c.in_ch as u32);
        self.u32(c.out_ch as u32);
        self.f32s(&c.weight);
        self.f32s(&c.bias);
    }

    /// `u32 outputs, u32 inputs`, weights, bias.
    pub fn linear(&mut self, l: &Linear) {
        self.u32(l.outputs as u32);
        self.u32(l.inputs as u32);
        self.f32s(&l.weight);
        self.f32s(&l.bias);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct WeightReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> WeightReader<'a> {
    pub fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != magic {
            return Err(Error::config(format!(
                "weight container does not start with {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut r = Self { bytes, pos: 4 };
        let version = r.u32("version")?;
        if version != CONTAINER_VERSION {
            return Err(Error::config(format!("weight container version {version} unsupported")));
        }
        Ok(r)
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::config(format!("weight container truncated at {field}")))?;
        self.pos = end;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32s(&mut self, n: usize, field: &str) -> Result<Vec<f64>> {
        let end = self.pos + 4 * n;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::config(format!("weight container truncated in {field}")))?;
        self.pos = end;
        Ok(b.chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    pub fn conv(&mut self, stride: usize, field: &str) -> Result<Conv2d> {
        let in_ch = self.u32(field)? as usize;
        let out_ch = self.u32(field)? as usize;
        let weight = self.f32s(out_ch * in_ch * 9, field)?;
        let bias = self.f32s(out_ch, field)?;
        Ok(Conv2d { in_ch, out_ch, stride, weight, bias })
    }

    pub fn linear(&mut self, field: &str) -> Result<Linear> {
        let outputs = self.u32(field)? as usize;
        let inputs = self.u32(field)? as usize;
        let weight = self.f32s(outputs * inputs, field)?;
        let bias = self.f32s(outputs, field)?;
        Ok(Linear { inputs, outputs, weight, bias })
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::config(format!(
                "{} trailing bytes in weight container",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Sidecar manifest path: `weights.penc` → `weights.penc.txt`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::config(format!("manifest is missing `{key}`")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::config(format!("manifest field `{key}` is malformed")))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("manifest line {}: expected `key = value`", n + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }
}

pub fn write_container(path: &Path, bytes: &[u8], manifest: &Manifest) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mp = manifest_path(path);
    fs::write(&mp, manifest.to_text()).map_err(|e| Error::io(&mp, e))
}

pub fn read_container(path: &Path) -> Result<(Vec<u8>, Manifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mp = manifest_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    Ok((bytes, Manifest::parse(&text)?))
}

/// Parses `a,b,c` into a list.
pub fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::config(format!("manifest list `{key}` is malformed")))
        })
        .collect()
}
