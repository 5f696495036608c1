//! Binary embedding matrices with a JSON sidecar for labels and ids.
//!
//! Layout: `b"CCE1"`, then little-endian `u32` version, dim and count,
//! then `count * dim` little-endian `f32` values row by row. The sidecar
//! lives next to the file at `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CceError, Result};
use crate::numerics::Vector;

pub const MAGIC: &[u8; 4] = b"CCE1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub embeddings: Vec<Vector>,
    /// Empty when the file has no sidecar.
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    labels: Vec<usize>,
    sample_ids: Vec<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl EmbeddingFile {
    /// Labeled rows with ids `"0"`, `"1"`, ...
    pub fn labeled(embeddings: Vec<Vector>, labels: Vec<usize>) -> Result<Self> {
        let sample_ids = (0..embeddings.len()).map(|i| i.to_string()).collect();
        let f = EmbeddingFile {
            embeddings,
            labels,
            sample_ids,
        };
        f.check()?;
        Ok(f)
    }

    pub fn unlabeled(embeddings: Vec<Vector>) -> Result<Self> {
        let f = EmbeddingFile {
            embeddings,
            labels: Vec::new(),
            sample_ids: Vec::new(),
        };
        f.check()?;
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vector::dim)
    }

    pub fn has_labels(&self) -> bool {
        !self.labels.is_empty()
    }

    /// `(embedding, label)` pairs; fails without labels.
    pub fn samples(&self) -> Result<Vec<(Vector, usize)>> {
        if !self.has_labels() {
            return Err(CceError::invalid("embedding file has no labels"));
        }
        Ok(self.embeddings.iter().cloned().zip(self.labels.iter().copied()).collect())
    }

    fn check(&self) -> Result<()> {
        let dim = self.dim();
        if self.embeddings.iter().any(|e| e.dim() != dim) {
            return Err(CceError::invalid("embeddings differ in dimension"));
        }
        if !self.labels.is_empty() && self.labels.len() != self.len() {
            return Err(CceError::invalid(format!(
                "{} labels for {} embeddings",
                self.labels.len(),
                self.len()
            )));
        }
        if !self.sample_ids.is_empty() && self.sample_ids.len() != self.len() {
            return Err(CceError::invalid(format!(
                "{} sample ids for {} embeddings",
                self.sample_ids.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let (dim, count) = (self.dim(), self.len());
        let to_u32 = |n: usize, what: &str| u32::try_from(n).map_err(|_| CceError::Format(format!("{what} {n} too large")));
        let mut out = Vec::with_capacity(HEADER_LEN + dim * count * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&to_u32(dim, "dim")?.to_le_bytes());
        out.extend_from_slice(&to_u32(count, "count")?.to_le_bytes());
        for e in &self.embeddings {
            for &x in e.iter() {
                let v = x as f32;
                if !v.is_finite() {
                    return Err(CceError::Format(format!("{x} does not fit in 32-bit storage")));
                }
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses the binary part; labels and ids are left empty.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(CceError::Format("not an embedding file (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (version, dim, count) = (word(4), word(8), word(12));
        if version != VERSION as usize {
            return Err(CceError::Format(format!("unsupported embedding file version {version}")));
        }
        let expected = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CceError::Format("header sizes overflow".into()))?;
        if bytes.len() - HEADER_LEN != expected {
            return Err(CceError::Format(format!(
                "payload is {} bytes, header implies {expected}",
                bytes.len() - HEADER_LEN
            )));
        }
        if count > 0 && dim == 0 {
            return Err(CceError::Format("zero-dimensional embeddings".into()));
        }
        let values: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let embeddings = values
            .chunks_exact(dim.max(1))
            .take(count)
            .map(|row| Vector::new(row.to_vec()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| CceError::Format(format!("bad embedding row: {e}")))?;
        Ok(EmbeddingFile {
            embeddings,
            labels: Vec::new(),
            sample_ids: Vec::new(),
        })
    }

    /// Writes the binary file and, when labels are present, its sidecar.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?)?;
        if self.has_labels() {
            let sample_ids = if self.sample_ids.is_empty() {
                (0..self.len()).map(|i| i.to_string()).collect()
            } else {
                self.sample_ids.clone()
            };
            let side = Sidecar {
                labels: self.labels.clone(),
                sample_ids,
            };
            fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
        }
        Ok(())
    }

    /// Reads the binary file and the sidecar if one exists.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut f = Self::from_bytes(&fs::read(path)?)?;
        let side = sidecar_path(path);
        if side.exists() {
            let s: Sidecar = serde_json::from_slice(&fs::read(&side)?)?;
            if s.labels.len() != f.len() || s.sample_ids.len() != f.len() {
                return Err(CceError::Format(format!(
                    "sidecar has {} labels and {} ids for {} embeddings",
                    s.labels.len(),
                    s.sample_ids.len(),
                    f.len()
                )));
            }
            f.labels = s.labels;
            f.sample_ids = s.sample_ids;
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingFile {
        let rows = vec![
            Vector::new(vec![1.0, -2.5, 0.125]).unwrap(),
            Vector::new(vec![0.1, 3.0, -7.0]).unwrap(),
        ];
        EmbeddingFile::labeled(rows, vec![3, 1]).unwrap()
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes().unwrap();
        assert_eq!(&b[..4], b"CCE1");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[3, 0, 0, 0]);
        assert_eq!(&b[12..16], &[2, 0, 0, 0]);
        assert_eq!(b.len(), 16 + 2 * 3 * 4);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.emb");
        let f = sample();
        f.write(&p).unwrap();
        assert!(sidecar_path(&p).ends_with("x.emb.json"));
        let g = EmbeddingFile::read(&p).unwrap();
        assert_eq!(g.labels, vec![3, 1]);
        assert_eq!(g.sample_ids, vec!["0", "1"]);
        for (a, b) in f.embeddings.iter().zip(&g.embeddings) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_corruption() {
        let b = sample().to_bytes().unwrap();
        assert!(EmbeddingFile::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(EmbeddingFile::from_bytes(&bad).is_err());
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(EmbeddingFile::from_bytes(&bad).is_err());
        let mut bad = b;
        bad[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(EmbeddingFile::from_bytes(&bad).is_err());
        let big = EmbeddingFile::unlabeled(vec![Vector::new(vec![1e300]).unwrap()]).unwrap();
        assert!(big.to_bytes().is_err());
    }

    #[test]
    fn label_count_must_match() {
        let rows = vec![Vector::zeros(2)];
        assert!(EmbeddingFile::labeled(rows, vec![0, 1]).is_err());
    }
}
