//! Dense embeddings for re-ranking.
//!
//! Two providers ship with the toolkit: vectors precomputed by an external
//! sentence encoder and read from a file, and a deterministic fallback built
//! from hashed character trigrams and a fixed random projection.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::text;

/// Unit-norm vectors keyed by document id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    provider_id: String,
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    positions: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    /// Normalizes every row; rejects ragged or zero rows.
    pub fn new(provider_id: impl Into<String>, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Embedding(format!("{} ids but {} vectors", ids.len(), vectors.len())));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut normalized = Vec::with_capacity(vectors.len());
        for (id, mut v) in ids.iter().zip(vectors) {
            if v.len() != dim {
                return Err(Error::Embedding(format!(
                    "dimension mismatch for `{id}`: {} vs {dim}",
                    v.len()
                )));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Embedding(format!("vector for `{id}` has no direction")));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            normalized.push(v);
        }
        let mut positions = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(Error::Embedding(format!("duplicate id `{id}`")));
            }
        }
        Ok(Self {
            provider_id: provider_id.into(),
            dim,
            ids,
            vectors: normalized,
            positions,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.positions.get(id).map(|&i| self.vectors[i].as_slice())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier including every parameter that affects the output.
    fn provider_id(&self) -> String;

    fn embed(&self, items: &[(&str, &str)]) -> Result<EmbeddingMatrix>;
}

/// Character-trigram counts hashed into `buckets` slots and projected onto
/// `dim` dimensions with a seeded ±1 matrix.
#[derive(Debug, Clone)]
pub struct HashedTrigramProvider {
    dim: usize,
    buckets: usize,
    seed: u64,
    max_seq_tokens: usize,
    projection: Vec<i8>,
}

impl HashedTrigramProvider {
    pub const DEFAULT_DIM: usize = 256;
    pub const DEFAULT_BUCKETS: usize = 1 << 14;

    pub fn new(dim: usize, seed: u64, max_seq_tokens: usize) -> Self {
        Self::with_buckets(dim, Self::DEFAULT_BUCKETS, seed, max_seq_tokens)
    }

    pub fn with_buckets(dim: usize, buckets: usize, seed: u64, max_seq_tokens: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..buckets * dim)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self {
            dim,
            buckets,
            seed,
            max_seq_tokens,
            projection,
        }
    }

    fn trigram_counts(&self, doc: &str) -> Vec<(usize, f64)> {
        let head: Vec<&str> = doc.split_whitespace().take(self.max_seq_tokens).collect();
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for word in text::words(&head.join(" ")) {
            let padded: Vec<char> = std::iter::once(' ').chain(word.chars()).chain(std::iter::once(' ')).collect();
            for gram in padded.windows(3) {
                let mut buf = [0u8; 12];
                let mut len = 0;
                for c in gram {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                let slot = (fnv1a(&buf[..len]) % self.buckets as u64) as usize;
                *counts.entry(slot).or_default() += 1.0;
            }
        }
        let mut counts: Vec<(usize, f64)> = counts.into_iter().collect();
        counts.sort_unstable_by_key(|&(slot, _)| slot);
        counts
    }

    pub fn embed_text(&self, doc: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (slot, count) in self.trigram_counts(doc) {
            let row = &self.projection[slot * self.dim..(slot + 1) * self.dim];
            for (o, r) in out.iter_mut().zip(row) {
                *o += count * f64::from(*r);
            }
        }
        out
    }
}

impl Default for HashedTrigramProvider {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM, 0x5eed, 256)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl EmbeddingProvider for HashedTrigramProvider {
    fn provider_id(&self) -> String {
        format!(
            "hashed-trigram(dim={},buckets={},seed={},max_seq_tokens={})",
            self.dim, self.buckets, self.seed, self.max_seq_tokens
        )
    }

    fn embed(&self, items: &[(&str, &str)]) -> Result<EmbeddingMatrix> {
        let vectors: Vec<Vec<f64>> = items.par_iter().map(|(_, t)| self.embed_text(t)).collect();
        let ids = items.iter().map(|(id, _)| id.to_string()).collect();
        EmbeddingMatrix::new(self.provider_id(), ids, vectors)
    }
}

#[derive(Deserialize)]
struct VectorRecord {
    id: String,
    vector: Vec<f64>,
}

/// Vectors read from a line-delimited `{"id": ..., "vector": [...]}` file.
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    path: PathBuf,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: VectorRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            let expected = *dim.get_or_insert(record.vector.len());
            if record.vector.len() != expected {
                return Err(Error::Embedding(format!(
                    "line {}: dimension {} differs from {expected} on the first line",
                    idx + 1,
                    record.vector.len()
                )));
            }
            if vectors.insert(record.id.clone(), record.vector).is_some() {
                return Err(Error::Embedding(format!("duplicate id `{}`", record.id)));
            }
        }
        let dim = dim.ok_or_else(|| Error::Embedding(format!("{} holds no vectors", path.display())))?;
        Ok(Self {
            path: path.to_owned(),
            dim,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn provider_id(&self) -> String {
        format!("file({},dim={})", self.path.display(), self.dim)
    }

    fn embed(&self, items: &[(&str, &str)]) -> Result<EmbeddingMatrix> {
        let mut ids = Vec::with_capacity(items.len());
        let mut vectors = Vec::with_capacity(items.len());
        for (id, _) in items {
            let v = self
                .vectors
                .get(*id)
                .ok_or_else(|| Error::Embedding(format!("id `{id}` missing from {}", self.path.display())))?;
            ids.push(id.to_string());
            vectors.push(v.clone());
        }
        EmbeddingMatrix::new(self.provider_id(), ids, vectors)
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    #[test]
    fn fallback_is_deterministic_and_normalized() {
        let p = HashedTrigramProvider::default();
        let m = p.embed(&[("a", "payment of fees"), ("b", "payment of fees")]).unwrap();
        assert_eq!(m.get("a"), m.get("b"));
        assert_eq!(m.dim(), 256);
        let norm: f64 = m.get("a").unwrap().iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let again = HashedTrigramProvider::default().embed(&[("a", "payment of fees")]).unwrap();
        assert_eq!(again.get("a"), m.get("a"));
    }

    #[test]
    fn fallback_orders_lexically_related_texts() {
        let p = HashedTrigramProvider::default();
        let m = p
            .embed(&[
                ("q", "payment of fees"),
                ("near", "payment of fees and costs"),
                ("far", "governing law of delaware"),
            ])
            .unwrap();
        let q = m.get("q").unwrap();
        assert!(cosine(q, m.get("near").unwrap()) > cosine(q, m.get("far").unwrap()));
    }

    #[test]
    fn precomputed_file_provider() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","vector":[1,0,0,0]}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","vector":[0,2,0,0]}}"#).unwrap();
        let p = PrecomputedProvider::load(f.path()).unwrap();
        let m = p.embed(&[("b", ""), ("a", "")]).unwrap();
        assert_eq!(m.dim(), 4);
        assert_eq!(m.get("b").unwrap(), &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(p.embed(&[("zzz", "")]), Err(Error::Embedding(_))));
    }

    #[test]
    fn precomputed_file_rejects_ragged_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","vector":[1,0,0,0]}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","vector":[0,2,0]}}"#).unwrap();
        assert!(matches!(PrecomputedProvider::load(f.path()), Err(Error::Embedding(_))));
    }
}
