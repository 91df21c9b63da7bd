//! Sidecar header + raw little-endian block convention shared by every array
//! file in the crate (cubes, feature cubes, probability fields, segmentations,
//! energy models).
//!
//! A header is UTF-8 text of `key=value` lines. Blank lines and lines starting
//! with `#` are ignored. The `data` key names the raw block relative to the
//! header's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = Header::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("header line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Format(format!("header line {}: empty key", lineno + 1)));
            }
            if header.get(key).is_some() {
                return Err(Error::Format(format!("duplicate header key '{key}'")));
            }
            header.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(header)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Format(format!("header is missing key '{key}'")))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("header key '{key}': '{raw}' is not a count")))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("header key '{key}': '{raw}' is not a number")))
    }

    /// Fails unless `key` is present and equal to `expected`.
    pub fn expect(&self, key: &str, expected: &str) -> Result<()> {
        let found = self.require(key)?;
        if found != expected {
            return Err(Error::Format(format!(
                "header key '{key}': expected '{expected}', found '{found}'"
            )));
        }
        Ok(())
    }

    /// Path of the raw block, resolved against the header location.
    pub fn data_path(&self, header_path: &Path) -> Result<PathBuf> {
        let rel = self.require("data")?;
        Ok(header_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(rel))
    }
}

impl std::fmt::Display for Header {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        f.write_str(&out)
    }
}

/// Default raw-block path for a header: same stem, `.raw` extension.
pub fn raw_path_for(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

/// File name of `raw` as stored in the `data` key.
pub fn relative_name(raw: &Path) -> String {
    raw.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_block(path: &Path, expected: usize, width: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * width {
        return Err(Error::Format(format!(
            "{}: expected {} bytes ({} values), found {}",
            path.display(),
            expected * width,
            expected,
            bytes.len()
        )));
    }
    Ok(bytes)
}

pub fn read_f32_le(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = read_block(path, expected, 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f32_le(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = read_block(path, expected, 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_f64_le(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_u32_le(path: &Path, expected: usize) -> Result<Vec<u32>> {
    let bytes = read_block(path, expected, 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_u32_le(path: &Path, values: impl IntoIterator<Item = u32>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(u32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
