use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Scalar types the container can hold, stored little-endian.
pub trait Element: Copy {
    const DTYPE: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
    const SIZE: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for u8 {
    const DTYPE: &'static str = "u8";
    const SIZE: usize = 1;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

/// JSON sidecar describing a binary blob.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Hex SHA-256 of the binary file.
    pub checksum: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `x.bin` -> `x.json`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::StaleArtifact {
        path: path.to_path_buf(),
        reason: format!("unreadable manifest: {e}"),
    })
}

/// Writes `data` to `path` and its sidecar; returns the sidecar.
pub fn write_tensor<T: Element>(path: &Path, shape: &[usize], data: &[T]) -> Result<TensorMeta> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::mismatch(format!("{expected} elements for shape {shape:?}"), data.len()));
    }
    let mut bytes = Vec::with_capacity(data.len() * T::SIZE);
    for &v in data {
        v.write_le(&mut bytes);
    }
    let meta = TensorMeta {
        shape: shape.to_vec(),
        dtype: T::DTYPE.to_string(),
        checksum: sha256_hex(&bytes),
    };
    write_file(path, &bytes)?;
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

/// Reads a blob back, verifying dtype, size and checksum against its sidecar.
pub fn read_tensor<T: Element>(path: &Path) -> Result<(Vec<usize>, Vec<T>)> {
    let meta: TensorMeta = read_json(&sidecar_path(path))?;
    let stale = |reason: String| Error::StaleArtifact {
        path: path.to_path_buf(),
        reason,
    };
    if meta.dtype != T::DTYPE {
        return Err(stale(format!("dtype {} where {} was expected", meta.dtype, T::DTYPE)));
    }
    let bytes = read_file(path)?;
    let count: usize = meta.shape.iter().product();
    if bytes.len() != count * T::SIZE {
        return Err(stale(format!("{} bytes for shape {:?}", bytes.len(), meta.shape)));
    }
    if sha256_hex(&bytes) != meta.checksum {
        return Err(stale("checksum does not match its sidecar".into()));
    }
    let data = bytes.chunks_exact(T::SIZE).map(T::read_le).collect();
    Ok((meta.shape, data))
}
