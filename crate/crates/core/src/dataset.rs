//! Dense row-major matrices and the `HKM1` embedding file format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HKM1"
//! 4       8     n      (u64, rows)
//! 12      4     d      (u32, columns)
//! 16      1     dtype  (0 = f32)
//! 17      4*n*d payload, row-major f32
//! ```

use std::fs;
use std::io::Write;
use std::ops::Deref;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HKM1";
pub const HEADER_LEN: usize = 17;
const DTYPE_F32: u8 = 0;

/// Row-major `rows × dim` matrix of f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                got: data.len(),
            });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            dim,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact on an empty dim would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[u32]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i as usize));
        }
        Matrix {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    /// First (row, col) holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.dim.max(1), p % self.dim.max(1)))
    }
}

/// Squared Euclidean distance, accumulated in f64.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = x as f64 - y as f64;
            t * t
        })
        .sum()
}

/// The raw pool: `n ≥ 1` finite points in `d ≥ 1` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    matrix: Matrix,
}

impl EmbeddingDataset {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 || matrix.dim() == 0 {
            return Err(Error::Argument(format!(
                "dataset must have n >= 1 and d >= 1 (got n={}, d={})",
                matrix.rows(),
                matrix.dim()
            )));
        }
        if let Some((row, col)) = matrix.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self { matrix })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn d(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.matrix.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.d() as u32).to_le_bytes());
        out.push(DTYPE_F32);
        for v in &self.matrix.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "file too short for header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic, expected \"HKM1\"".into()));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
        let dtype = bytes[16];
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype tag {dtype}")));
        }
        if n == 0 || d == 0 {
            return Err(Error::Format(format!("empty shape n={n}, d={d}")));
        }
        let expected = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Format("header shape overflows".into()))?;
        let found = (bytes.len() - HEADER_LEN) as u64;
        if found < expected {
            return Err(Error::Truncated { expected, found });
        }
        if found > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                found - expected
            )));
        }
        let data: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(Matrix::new(n as usize, d as usize, data)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

impl Deref for EmbeddingDataset {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.matrix
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EmbeddingDataset {
        EmbeddingDataset::from_rows(&[[0.0f32, 1.0], [2.0, 3.0], [4.0, 5.0], [-1.5, 7.25]]).unwrap()
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.hkm");
        let ds = tiny();
        ds.save(&p).unwrap();
        let back = EmbeddingDataset::load(&p).unwrap();
        assert_eq!(back.n(), 4);
        assert_eq!(back.d(), 2);
        assert_eq!(back, ds);
        assert_eq!(fs::read(&p).unwrap().len(), HEADER_LEN + 4 * 8);
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let mut b = tiny().to_bytes();
        b[1] = b'X';
        assert!(matches!(EmbeddingDataset::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn short_payload_is_truncation_error() {
        let ds = EmbeddingDataset::from_rows(&[[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let b = ds.to_bytes();
        let cut = &b[..HEADER_LEN + 4 * 4];
        match EmbeddingDataset::from_bytes(cut) {
            Err(Error::Truncated { expected, found }) => {
                assert_eq!(expected, 24);
                assert_eq!(found, 16);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_reports_row() {
        let mut b = tiny().to_bytes();
        let off = HEADER_LEN + 4 * 5; // row 2, col 1
        b[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match EmbeddingDataset::from_bytes(&b) {
            Err(Error::NonFinite { row, col }) => assert_eq!((row, col), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_dtype_and_empty() {
        let mut b = tiny().to_bytes();
        b[16] = 3;
        assert!(matches!(EmbeddingDataset::from_bytes(&b), Err(Error::Format(_))));
        assert!(EmbeddingDataset::new(Matrix::zeros(0, 3)).is_err());
        assert!(EmbeddingDataset::from_bytes(b"HK").is_err());
    }
    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bytes_round_trip(n in 1usize..20, d in 1usize..6, seed in any::<u64>()) {
                let data: Vec<f32> = (0..n * d)
                    .map(|i| f32::from_bits((seed.wrapping_mul(i as u64 + 1) >> 35) as u32 & 0x7f7f_ffff))
                    .collect();
                let ds = EmbeddingDataset::new(Matrix::new(n, d, data).unwrap()).unwrap();
                let back = EmbeddingDataset::from_bytes(&ds.to_bytes()).unwrap();
                prop_assert_eq!(&back, &ds);
                prop_assert_eq!(back.to_bytes(), ds.to_bytes());
            }
        }
    }
}
