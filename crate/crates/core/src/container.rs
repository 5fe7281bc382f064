//! Self-describing binary container shared by every persisted artifact.
//!
//! Layout:
//! ```text
//! bytes 0-3   magic  b"FDTC"
//! bytes 4-7   format version, little-endian u32
//! bytes 8-15  header length H, little-endian u64
//! bytes 16..  H bytes of JSON header
//! then        matrix payloads in header order, row-major f64 little-endian
//! ```
//!
//! The header records a `kind` tag, free-form `meta` JSON, and the
//! (name, rows, cols) of every matrix. Writes go through a temp file
//! plus rename so readers never observe partial containers.

use crate::error::{Error, Result};
use crate::matrix::{from_row_major_bytes, to_row_major_bytes, Matrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"FDTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixDescriptor {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    matrices: Vec<MatrixDescriptor>,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    matrices: Vec<(String, Matrix)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Container {
            kind: kind.into(),
            meta,
            matrices: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.matrices.push((name.into(), m));
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::BadContainer(format!("matrix {name:?} not present")))
    }

    pub fn matrices(&self) -> &[(String, Matrix)] {
        &self.matrices
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            matrices: self
                .matrices
                .iter()
                .map(|(name, m)| MatrixDescriptor {
                    name: name.clone(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serialization cannot fail");
        let payload_len: usize = self.matrices.iter().map(|(_, m)| m.len() * 8).sum();
        let mut bytes = Vec::with_capacity(16 + header_json.len() + payload_len);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        for (_, m) in &self.matrices {
            bytes.extend_from_slice(&to_row_major_bytes(m));
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::BadContainer("shorter than fixed header".into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::BadContainer("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::BadContainer(format!(
                "unsupported container version {version}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::BadContainer("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| Error::BadContainer(format!("header JSON: {e}")))?;
        let mut offset = header_end;
        let mut matrices = Vec::with_capacity(header.matrices.len());
        for desc in &header.matrices {
            let len = desc.rows * desc.cols * 8;
            if offset + len > bytes.len() {
                return Err(Error::BadContainer(format!(
                    "payload for {:?} truncated",
                    desc.name
                )));
            }
            let m = from_row_major_bytes(desc.rows, desc.cols, &bytes[offset..offset + len])?;
            matrices.push((desc.name.clone(), m));
            offset += len;
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            matrices,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Write via temp file + rename in the target directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Hex SHA-256 of a file, used as the dataset/trajectory fingerprint.
pub fn fingerprint_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
