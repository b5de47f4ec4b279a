//! Exact cosine-similarity index over construct embeddings.
//!
//! Search is an exhaustive scan in `f64`. Hits are ordered by similarity
//! descending, then by construct id ascending.
//!
//! # Snapshot format (version 1)
//!
//! Little-endian binary:
//!
//! | field      | type                      |
//! |------------|---------------------------|
//! | magic      | 4 bytes, `b"SSIX"`        |
//! | version    | `u32` (= 1)               |
//! | dimension  | `u32`                     |
//! | count      | `u64`                     |
//! | entries    | `count` × entry           |
//!
//! Each entry is an id length (`u32`), the UTF-8 id bytes, then `dimension`
//! `f64` values. Entries are written in ascending id order.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::ConstructId;
use crate::gateway::EmbeddingVector;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"SSIX";
pub const SNAPSHOT_VERSION: u32 = 1;
const MAX_ID_BYTES: usize = 4096;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot version {0} is not supported")]
    VersionMismatch(u32),
    #[error("malformed snapshot: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub construct_id: ConstructId,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy)]
struct Scored<'a> {
    id: &'a ConstructId,
    similarity: f64,
}

/// Cosine similarity in double precision, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, IndexError> {
    if u.dimension() != v.dimension() {
        return Err(IndexError::DimensionMismatch {
            expected: u.dimension(),
            got: v.dimension(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    Ok(cosine_with_norms(u.values(), nu, v.values(), nv))
}

fn cosine_with_norms(u: &[f64], nu: f64, v: &[f64], nv: f64) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone)]
struct Stored {
    vector: EmbeddingVector,
    norm: f64,
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dimension: usize,
    entries: BTreeMap<ConstructId, Stored>,
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &ConstructId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &ConstructId> {
        self.entries.keys()
    }

    pub fn vector(&self, id: &ConstructId) -> Option<&EmbeddingVector> {
        self.entries.get(id).map(|s| &s.vector)
    }

    fn check(&self, v: &EmbeddingVector) -> Result<f64, IndexError> {
        if v.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: v.dimension(),
            });
        }
        let norm = v.norm();
        if norm == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        Ok(norm)
    }

    /// Inserts or replaces the vector for `id`.
    pub fn upsert(&mut self, id: ConstructId, vector: EmbeddingVector) -> Result<(), IndexError> {
        let norm = self.check(&vector)?;
        self.entries.insert(id, Stored { vector, norm });
        Ok(())
    }

    pub fn remove(&mut self, id: &ConstructId) -> bool {
        self.entries.remove(id).is_some()
    }

    /// Top `k` entries by similarity to `query`, skipping ids in `exclude`.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: &HashSet<ConstructId>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let qn = self.check(query)?;
        let scored = self
            .entries
            .iter()
            .filter(|(id, _)| !exclude.contains(*id))
            .map(|(id, s)| Scored {
                id,
                similarity: cosine_with_norms(query.values(), qn, s.vector.values(), s.norm),
            })
            .collect();
        Ok(top_k(scored, k))
    }

    /// Ranks only the listed ids. Unknown ids are ignored.
    pub fn search_within(
        &self,
        query: &EmbeddingVector,
        candidates: &[ConstructId],
        k: usize,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let qn = self.check(query)?;
        let scored = candidates
            .iter()
            .filter_map(|id| self.entries.get_key_value(id))
            .map(|(id, s)| Scored {
                id,
                similarity: cosine_with_norms(query.values(), qn, s.vector.values(), s.norm),
            })
            .collect();
        Ok(top_k(scored, k))
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        w.write_all(&SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dimension as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for (id, stored) in &self.entries {
            let bytes = id.as_str().as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            for v in stored.vector.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot, requiring it to match `expected_dimension`.
    pub fn read_snapshot<R: Read>(mut r: R, expected_dimension: usize) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(IndexError::Parse("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(IndexError::VersionMismatch(version));
        }
        let dimension = read_u32(&mut r)? as usize;
        if dimension != expected_dimension {
            return Err(IndexError::DimensionMismatch {
                expected: expected_dimension,
                got: dimension,
            });
        }
        let count = read_u64(&mut r)?;
        let mut index = Self::new(dimension);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            if len > MAX_ID_BYTES {
                return Err(IndexError::Parse(format!("id length {len} is implausible")));
            }
            let mut id = vec![0u8; len];
            r.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|e| IndexError::Parse(e.to_string()))?;
            let mut values = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                r.read_exact(&mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            let vector =
                EmbeddingVector::new(values).map_err(|e| IndexError::Parse(format!("entry `{id}`: {e}")))?;
            index.upsert(ConstructId::new(id), vector)?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(IndexError::Parse("trailing bytes after last entry".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut writer = io::BufWriter::new(std::fs::File::create(&tmp)?);
        self.write_snapshot(&mut writer)?;
        writer.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_dimension: usize) -> Result<Self, IndexError> {
        let file = std::fs::File::open(path)?;
        Self::read_snapshot(io::BufReader::new(file), expected_dimension)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn rank(a: &Scored<'_>, b: &Scored<'_>) -> std::cmp::Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.id.cmp(b.id))
}

fn top_k(mut scored: Vec<Scored<'_>>, k: usize) -> Vec<SearchHit> {
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_by(rank);
    scored
        .into_iter()
        .map(|s| SearchHit {
            construct_id: s.id.clone(),
            similarity: s.similarity,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, axis: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        EmbeddingVector::new(v).unwrap()
    }

    fn vec_of(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn analytic_cases() {
        let e0 = unit(768, 0);
        let e1 = unit(768, 1);
        assert!((cosine_similarity(&e0, &e0).unwrap() - 1.0).abs() < 1e-9);
        assert!(cosine_similarity(&e0, &e1).unwrap().abs() < 1e-9);
        let mut diag = vec![0.0; 768];
        diag[0] = 1.0;
        diag[1] = 1.0;
        let s = cosine_similarity(&vec_of(&diag), &e0).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            cosine_similarity(&unit(3, 0), &unit(4, 0)),
            Err(IndexError::DimensionMismatch { .. })
        ));
        let mut idx = VectorIndex::new(768);
        assert!(matches!(
            idx.upsert("a".into(), unit(512, 0)),
            Err(IndexError::DimensionMismatch {
                expected: 768,
                got: 512
            })
        ));
    }

    #[test]
    fn last_write_wins() {
        let mut idx = VectorIndex::new(4);
        idx.upsert("a".into(), unit(4, 0)).unwrap();
        idx.upsert("b".into(), unit(4, 1)).unwrap();
        idx.upsert("a".into(), unit(4, 2)).unwrap();
        assert_eq!(idx.len(), 2);
        let hits = idx.search(&unit(4, 2), 1, &HashSet::new()).unwrap();
        assert_eq!(hits[0].construct_id.as_str(), "a");
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);
        let hits = idx.search(&unit(4, 0), 2, &HashSet::new()).unwrap();
        assert!(hits.iter().all(|h| h.similarity.abs() < 1e-12));
    }

    #[test]
    fn hundred_entries() {
        let mut idx = VectorIndex::new(8);
        for i in 0..100 {
            idx.upsert(format!("id{i:03}").as_str().into(), vec_of(&[1.0, i as f64, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]))
                .unwrap();
        }
        assert_eq!(idx.len(), 100);
    }

    #[test]
    fn k_larger_than_index() {
        let mut idx = VectorIndex::new(3);
        for (i, id) in ["a", "b", "c"].into_iter().enumerate() {
            idx.upsert(id.into(), unit(3, i)).unwrap();
        }
        assert_eq!(idx.search(&unit(3, 0), 5, &HashSet::new()).unwrap().len(), 3);
        assert!(matches!(
            idx.search(&unit(3, 0), 0, &HashSet::new()),
            Err(IndexError::InvalidK)
        ));
    }

    #[test]
    fn identical_vector_ranks_first_and_ties_break_by_id() {
        let mut idx = VectorIndex::new(4);
        idx.upsert("x".into(), unit(4, 0)).unwrap();
        idx.upsert("c".into(), unit(4, 1)).unwrap();
        idx.upsert("b".into(), unit(4, 2)).unwrap();
        idx.upsert("a".into(), unit(4, 3)).unwrap();
        let hits = idx.search(&unit(4, 0), 4, &HashSet::new()).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.construct_id.as_str()).collect();
        assert_eq!(ids, vec!["x", "a", "b", "c"]);
        assert_eq!(hits[0].similarity, 1.0);
    }

    #[test]
    fn excluded_ids_never_returned() {
        let mut idx = VectorIndex::new(2);
        idx.upsert("a".into(), vec_of(&[1.0, 0.0])).unwrap();
        idx.upsert("b".into(), vec_of(&[1.0, 0.1])).unwrap();
        let exclude: HashSet<ConstructId> = ["a".into()].into_iter().collect();
        let hits = idx.search(&vec_of(&[1.0, 0.0]), 2, &exclude).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].construct_id.as_str(), "b");
    }

    #[test]
    fn search_within_subset() {
        let mut idx = VectorIndex::new(2);
        idx.upsert("a".into(), vec_of(&[1.0, 0.0])).unwrap();
        idx.upsert("b".into(), vec_of(&[0.0, 1.0])).unwrap();
        idx.upsert("c".into(), vec_of(&[1.0, 1.0])).unwrap();
        let hits = idx
            .search_within(&vec_of(&[0.0, 1.0]), &["a".into(), "c".into(), "zz".into()], 5)
            .unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.construct_id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a"]);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut idx = VectorIndex::new(3);
        idx.upsert("b".into(), vec_of(&[0.3, -0.2, 0.9])).unwrap();
        idx.upsert("a".into(), vec_of(&[0.1, 0.2, 0.3])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        idx.save(&path).unwrap();
        let loaded = VectorIndex::load(&path, 3).unwrap();
        let q = vec_of(&[0.5, 0.5, 0.1]);
        let none = HashSet::new();
        assert_eq!(idx.search(&q, 2, &none).unwrap(), loaded.search(&q, 2, &none).unwrap());

        assert!(matches!(
            VectorIndex::load(&path, 768),
            Err(IndexError::DimensionMismatch {
                expected: 768,
                got: 3
            })
        ));
    }

    #[test]
    fn truncated_and_corrupt_snapshots_fail() {
        let mut idx = VectorIndex::new(3);
        idx.upsert("a".into(), vec_of(&[0.1, 0.2, 0.3])).unwrap();
        let mut bytes = Vec::new();
        idx.write_snapshot(&mut bytes).unwrap();

        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(VectorIndex::read_snapshot(cut, 3), Err(IndexError::Io(_))));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(VectorIndex::read_snapshot(bad.as_slice(), 3), Err(IndexError::Parse(_))));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            VectorIndex::read_snapshot(v2.as_slice(), 3),
            Err(IndexError::VersionMismatch(2))
        ));

        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(VectorIndex::read_snapshot(extra.as_slice(), 3), Err(IndexError::Parse(_))));
    }
}
