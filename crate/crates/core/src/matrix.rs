//! Dense matrix alias and small numeric helpers shared across the crate.
//!
//! All carriers (W, sigma_xx, sigma_yx, D, Q, sigma_WW) are `f64` dense
//! matrices with explicit (rows, cols). Serialization to the on-disk
//! container is always row-major little-endian; see [`crate::container`].

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::Path;

pub type Matrix = DMatrix<f64>;

/// Frobenius inner product: sum over shared (i, j) of elementwise products.
pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.dot(b)
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.norm()
}

/// ||a - b||_F / ||b||_F, with 0/0 defined as 0.
pub fn relative_frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
    let denom = frobenius_norm(b);
    let num = frobenius_norm(&(a - b));
    if denom == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / denom
    }
}

pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub fn antisymmetric_part(a: &Matrix) -> Matrix {
    (a - a.transpose()) * 0.5
}

/// Relative departure from symmetry: ||A - A^T||_F / ||A||_F.
pub fn asymmetry(a: &Matrix) -> f64 {
    let n = frobenius_norm(a);
    if n == 0.0 {
        return 0.0;
    }
    frobenius_norm(&(a - a.transpose())) / n
}

pub fn all_finite(a: &Matrix) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Write a matrix as plain CSV (one row per line, full f64 round-trip digits).
pub fn write_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(b',');
            }
            write!(out, "{}", m[(r, c)]).expect("write to Vec cannot fail");
        }
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Row-major f64 bytes of a matrix, little-endian.
pub fn to_row_major_bytes(m: &Matrix) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            bytes.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    bytes
}

pub fn from_row_major_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Matrix> {
    let needed = rows * cols * 8;
    if bytes.len() < needed {
        return Err(Error::BadContainer(format!(
            "matrix payload too short: needed {needed} bytes, found {}",
            bytes.len()
        )));
    }
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let off = (r * cols + c) * 8;
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[off..off + 8]);
            m[(r, c)] = f64::from_le_bytes(buf);
        }
    }
    Ok(m)
}

/// Serde adapter: a matrix as row-major nested arrays, the layout used in
/// hand-written JSON files (synthetic specs, OU system files).
pub mod serde_rows {
    use super::Matrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
            .collect();
        serde::Serialize::serialize(&rows, ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Matrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(de)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let mut m = Matrix::zeros(nrows, ncols);
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        Ok(m)
    }
}
