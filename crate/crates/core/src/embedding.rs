//! Instruction embeddings and the LCGE on-disk format.
//!
//! LCGE layout, all little-endian:
//!
//! ```text
//! "LCGE" | u32 version (=1) | u32 count | u32 dim | [u8; 32] sha256(dataset) | count*dim f32
//! ```
//!
//! The digest binds an embedding file to the exact bytes of the dataset it
//! was computed from.

use std::fs;
use std::path::Path;

use crate::corpus::Dataset;
use crate::error::{LcgError, Result};
use crate::par;
use crate::text::{fnv1a64, tokenize};

pub const LCGE_MAGIC: &[u8; 4] = b"LCGE";
pub const LCGE_VERSION: u32 = 1;
const LCGE_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 32;

pub const DEFAULT_DIM: usize = 384;

/// Row-major N x dim matrix of f32.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f32>,
    rows: usize,
    dim: usize,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(LcgError::param("dim", "must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(LcgError::DimensionMismatch {
                expected: dim * (data.len() / dim + 1),
                actual: data.len(),
            });
        }
        let rows = data.len() / dim;
        if let Some(row) = (0..rows).find(|&r| data[r * dim..(r + 1) * dim].iter().any(|v| !v.is_finite())) {
            return Err(LcgError::Numeric(format!("row {row} contains a non-finite value")));
        }
        Ok(EmbeddingMatrix {
            data,
            rows,
            dim,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(LcgError::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(rows.concat(), dim)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Deterministic bag-of-words embedding: token counts hashed into `dim`
/// buckets with FNV-1a, damped with ln(1 + count).
pub fn hashing_embed(dataset: &Dataset, dim: usize) -> Result<EmbeddingMatrix> {
    if dim < 2 {
        return Err(LcgError::param("dim", format!("must be at least 2, got {dim}")));
    }
    let records = dataset.records();
    let rows = par::map_range(records.len(), |i| hash_row(&records[i].prompt_text(), dim));
    let mut data = Vec::with_capacity(records.len() * dim);
    for row in rows {
        data.extend_from_slice(&row);
    }
    EmbeddingMatrix::new(data, dim)
}

fn hash_row(text: &str, dim: usize) -> Vec<f32> {
    let mut counts = vec![0u32; dim];
    let tokens = tokenize(text);
    if tokens.is_empty() {
        let mut row = vec![0.0; dim];
        row[0] = 1.0;
        return row;
    }
    for t in &tokens {
        counts[(fnv1a64(t) % dim as u64) as usize] += 1;
    }
    counts.iter().map(|&c| f64::from(c).ln_1p() as f32).collect()
}

/// Divides every row by its L2 norm.
pub fn l2_normalize(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = matrix.data.clone();
    for (r, row) in data.chunks_mut(matrix.dim).enumerate() {
        let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LcgError::Numeric(format!("row {r} is all zeros and cannot be normalized")));
        }
        for v in row.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(EmbeddingMatrix {
        data,
        rows: matrix.rows,
        dim: matrix.dim,
        normalized: true,
    })
}

pub fn encode_lcge(matrix: &EmbeddingMatrix, digest: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LCGE_HEADER_LEN + matrix.data.len() * 4);
    out.extend_from_slice(LCGE_MAGIC);
    out.extend_from_slice(&LCGE_VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    out.extend_from_slice(digest);
    for v in &matrix.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_lcge(matrix: &EmbeddingMatrix, digest: &[u8; 32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_lcge(matrix, digest)).map_err(|e| LcgError::io(path, e))
}

/// Parsed LCGE contents, before binding to a dataset.
#[derive(Debug)]
pub struct LcgeFile {
    pub digest: [u8; 32],
    pub matrix: EmbeddingMatrix,
}

pub fn decode_lcge(bytes: &[u8], path: &Path) -> Result<LcgeFile> {
    let fail = |reason: String| LcgError::Format {
        path: path.into(),
        reason,
    };
    if bytes.len() < LCGE_HEADER_LEN {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != LCGE_MAGIC {
        return Err(fail("bad magic (expected \"LCGE\")".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != LCGE_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let count = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    if dim == 0 {
        return Err(fail("dim is zero".into()));
    }
    let mut digest = [0u8; 32];
    digest.copy_from_slice(&bytes[16..48]);
    let payload = &bytes[LCGE_HEADER_LEN..];
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail("count*dim overflows".into()))?;
    if payload.len() != expected {
        return Err(fail(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(fail(format!("row {} contains a non-finite value", pos / dim)));
    }
    Ok(LcgeFile {
        digest,
        matrix: EmbeddingMatrix {
            data,
            rows: count,
            dim,
            normalized: false,
        },
    })
}

/// Loads an LCGE file and checks it belongs to `dataset`.
pub fn load_embeddings(path: impl AsRef<Path>, dataset: &Dataset) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| LcgError::io(path, e))?;
    let file = decode_lcge(&bytes, path)?;
    if file.matrix.rows != dataset.len() {
        return Err(LcgError::Format {
            path: path.into(),
            reason: format!(
                "record count {} does not match dataset size {}",
                file.matrix.rows,
                dataset.len()
            ),
        });
    }
    if &file.digest != dataset.source_digest() {
        return Err(LcgError::Format {
            path: path.into(),
            reason: "dataset digest mismatch (embeddings were computed for a different file)".into(),
        });
    }
    Ok(file.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(texts: &[&str]) -> Dataset {
        Dataset::from_records(texts.iter().map(|t| (*t, "", ""))).unwrap()
    }

    #[test]
    fn hashing_counts_with_log_damping() {
        // fnv1a64("a") % 384 == 268, fnv1a64("b") % 384 == 37
        let m = hashing_embed(&ds(&["a a b"]), 384).unwrap();
        let row = m.row(0);
        assert!((row[268] - 3f32.ln()).abs() < 1e-6);
        assert!((row[37] - 2f32.ln()).abs() < 1e-6);
        assert_eq!(row.iter().filter(|&&v| v != 0.0).count(), 2);
        assert!(!m.is_normalized());
    }

    #[test]
    fn input_field_is_embedded_too() {
        let a = Dataset::from_records([("a", "b", "")]).unwrap();
        let b = ds(&["a b"]);
        assert_eq!(hashing_embed(&a, 64).unwrap().row(0), hashing_embed(&b, 64).unwrap().row(0));
    }

    #[test]
    fn identical_records_identical_rows() {
        let m = hashing_embed(&ds(&["Write a poem!", "write a POEM"]), 384).unwrap();
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn disjoint_tokens_disjoint_supports() {
        // buckets at dim 384: the=252 cat=295 dog=105 sat=247
        let m = hashing_embed(&ds(&["the cat", "dog sat"]), 384).unwrap();
        let support = |r: &[f32]| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect::<Vec<_>>();
        assert_eq!(support(m.row(0)), vec![252, 295]);
        assert_eq!(support(m.row(1)), vec![105, 247]);
    }

    #[test]
    fn tokenless_record_is_one_hot() {
        let m = hashing_embed(&ds(&["?!"]), 8).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dim_must_be_at_least_two() {
        assert!(hashing_embed(&ds(&["a"]), 1).is_err());
    }

    #[test]
    fn normalize_three_four_five() {
        let m = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let n = l2_normalize(&m).unwrap();
        assert!((n.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-7);
        assert!(n.is_normalized());
        let again = l2_normalize(&n).unwrap();
        for (a, b) in again.as_slice().iter().zip(n.as_slice()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let err = l2_normalize(&m).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn lcge_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = ds(&["x", "y", "z"]);
        let data: Vec<f32> = (0..3 * 384).map(|i| (i as f32).sin()).collect();
        let m = EmbeddingMatrix::new(data, 384).unwrap();
        let p = dir.path().join("e.lcge");
        write_lcge(&m, dataset.source_digest(), &p).unwrap();
        let back = load_embeddings(&p, &dataset).unwrap();
        assert_eq!(back.rows(), 3);
        assert_eq!(back.dim(), 384);
        assert_eq!(back.as_slice(), m.as_slice());

        // wrong digest
        let other = ds(&["x", "y", "w"]);
        assert!(load_embeddings(&p, &other).unwrap_err().to_string().contains("digest"));
        // wrong count
        assert!(load_embeddings(&p, &ds(&["x", "y"])).is_err());

        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        assert!(decode_lcge(&bytes, &p).unwrap_err().to_string().contains("magic"));
        let mut bytes = fs::read(&p).unwrap();
        bytes[4] = 2;
        assert!(decode_lcge(&bytes, &p).unwrap_err().to_string().contains("version"));
        let mut bytes = fs::read(&p).unwrap();
        let off = LCGE_HEADER_LEN + 384 * 4 + 8;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_lcge(&bytes, &p).unwrap_err().to_string().contains("row 1"));
        let bytes = fs::read(&p).unwrap();
        assert!(decode_lcge(&bytes[..bytes.len() - 1], &p).is_err());
    }

    #[test]
    fn zero_row_loads_from_lcge() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = ds(&["x"]);
        let m = EmbeddingMatrix::new(vec![0.0; 4], 4).unwrap();
        let p = dir.path().join("z.lcge");
        write_lcge(&m, dataset.source_digest(), &p).unwrap();
        let back = load_embeddings(&p, &dataset).unwrap();
        assert!(l2_normalize(&back).is_err());
    }
}
