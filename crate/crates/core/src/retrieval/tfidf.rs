//! TF-IDF weighting over word unigrams and bigrams, plus the inverted index
//! used for sparse candidate generation.
//!
//! Term weight is `(1 + ln tf) * idf` with `idf = ln((1 + N) / (1 + df)) + 1`,
//! and every document vector is L2-normalized. Terms with `df < min_df` or
//! `df / N > max_df` are dropped.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfidfParams {
    pub min_df: usize,
    pub max_df: f64,
    pub sublinear_tf: bool,
    pub max_ngram: usize,
    /// Keep at most this many terms, highest document frequency first.
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for TfidfParams {
    fn default() -> Self {
        Self {
            min_df: 2,
            max_df: 0.8,
            sublinear_tf: true,
            max_ngram: 2,
            max_features: None,
        }
    }
}

/// Sparse vector with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// A fitted vocabulary with idf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VectorizerRepr", into = "VectorizerRepr")]
pub struct TfidfVectorizer {
    params: TfidfParams,
    terms: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
    columns: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VectorizerRepr {
    params: TfidfParams,
    n_docs: usize,
    terms: Vec<String>,
    idf: Vec<f64>,
}

impl From<VectorizerRepr> for TfidfVectorizer {
    fn from(r: VectorizerRepr) -> Self {
        let columns = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self {
            params: r.params,
            terms: r.terms,
            idf: r.idf,
            n_docs: r.n_docs,
            columns,
        }
    }
}

impl From<TfidfVectorizer> for VectorizerRepr {
    fn from(v: TfidfVectorizer) -> Self {
        Self {
            params: v.params,
            n_docs: v.n_docs,
            terms: v.terms,
            idf: v.idf,
        }
    }
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(docs: &[S], params: TfidfParams) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("cannot fit TF-IDF on an empty corpus".into()));
        }
        if !(params.max_df > 0.0 && params.max_df <= 1.0) {
            return Err(Error::Config(format!("max_df {} outside (0, 1]", params.max_df)));
        }
        let n = docs.len();
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let mut seen: Vec<String> = text::ngrams(doc.as_ref(), params.max_ngram);
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df
            .into_iter()
            .filter(|&(_, d)| d >= params.min_df && (d as f64 / n as f64) <= params.max_df)
            .collect();
        if let Some(cap) = params.max_features {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            kept.truncate(cap);
        }
        if kept.is_empty() {
            return Err(Error::DegenerateVocabulary(format!(
                "no term of {n} documents survives min_df={} max_df={}",
                params.min_df, params.max_df
            )));
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));

        let idf = kept
            .iter()
            .map(|&(_, d)| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let terms: Vec<String> = kept.into_iter().map(|(t, _)| t).collect();
        let columns = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Self {
            params,
            terms,
            idf,
            n_docs: n,
            columns,
        })
    }

    pub fn params(&self) -> &TfidfParams {
        &self.params
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.columns.get(term).copied()
    }

    /// L2-normalized weight vector; out-of-vocabulary terms are dropped and an
    /// all-OOV text maps to the zero vector.
    pub fn transform(&self, doc: &str) -> SparseVector {
        let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
        for term in text::ngrams(doc, self.params.max_ngram) {
            if let Some(&col) = self.columns.get(&term) {
                *tf.entry(col).or_default() += 1;
            }
        }
        let mut indices = Vec::with_capacity(tf.len());
        let mut values = Vec::with_capacity(tf.len());
        for (col, count) in tf {
            let tf_weight = if self.params.sublinear_tf {
                1.0 + (count as f64).ln()
            } else {
                count as f64
            };
            indices.push(col);
            values.push(tf_weight * self.idf[col as usize]);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        SparseVector { indices, values }
    }
}

const INDEX_FORMAT: &str = "sra-sparse-index/v1";

/// Train-split documents indexed for cosine retrieval.
#[derive(Debug, Clone)]
pub struct SparseIndex {
    vectorizer: TfidfVectorizer,
    doc_ids: Vec<String>,
    doc_vectors: Vec<SparseVector>,
    postings: Vec<Vec<(u32, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct IndexArchive {
    format: String,
    vectorizer: TfidfVectorizer,
    doc_ids: Vec<String>,
    doc_vectors: Vec<SparseVector>,
}

impl SparseIndex {
    fn from_parts(vectorizer: TfidfVectorizer, doc_ids: Vec<String>, doc_vectors: Vec<SparseVector>) -> Self {
        let mut postings = vec![Vec::new(); vectorizer.num_terms()];
        for (doc, vector) in doc_vectors.iter().enumerate() {
            for (col, w) in vector.iter() {
                postings[col as usize].push((doc as u32, w));
            }
        }
        Self {
            vectorizer,
            doc_ids,
            doc_vectors,
            postings,
        }
    }

    pub fn vectorizer(&self) -> &TfidfVectorizer {
        &self.vectorizer
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_vector(&self, position: usize) -> &SparseVector {
        &self.doc_vectors[position]
    }

    /// Ids of indexed documents with no in-vocabulary term.
    pub fn zero_vector_docs(&self) -> Vec<&str> {
        self.doc_ids
            .iter()
            .zip(&self.doc_vectors)
            .filter(|(_, v)| v.is_zero())
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Cosine-ranked documents sharing at least one term with `query`, best
    /// first, ties by ascending id, at most `top_n`.
    pub fn candidates(&self, query: &str, top_n: usize) -> Vec<(String, f64)> {
        self.candidates_for_vector(&self.vectorizer.transform(query), top_n)
    }

    pub fn candidates_for_vector(&self, query: &SparseVector, top_n: usize) -> Vec<(String, f64)> {
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for (col, qw) in query.iter() {
            for &(doc, dw) in &self.postings[col as usize] {
                *scores.entry(doc).or_insert(0.0) += qw * dw;
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        });
        ranked.truncate(top_n);
        ranked
            .into_iter()
            .map(|(doc, s)| (self.doc_ids[doc as usize].clone(), s))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let archive = IndexArchive {
            format: INDEX_FORMAT.into(),
            vectorizer: self.vectorizer.clone(),
            doc_ids: self.doc_ids.clone(),
            doc_vectors: self.doc_vectors.clone(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &archive)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let archive: IndexArchive = serde_json::from_reader(BufReader::new(file))?;
        if archive.format != INDEX_FORMAT {
            return Err(Error::InvalidInput(format!(
                "unsupported index format `{}` (expected {INDEX_FORMAT})",
                archive.format
            )));
        }
        Ok(Self::from_parts(archive.vectorizer, archive.doc_ids, archive.doc_vectors))
    }
}

/// Index `(id, text)` training documents.
pub fn build_sparse_index<I: AsRef<str>, T: AsRef<str>>(docs: &[(I, T)], params: TfidfParams) -> Result<SparseIndex> {
    if docs.is_empty() {
        return Err(Error::InvalidInput("cannot index an empty corpus".into()));
    }
    if docs.len() < params.min_df.max(2) {
        return Err(Error::InvalidInput(format!(
            "need at least {} documents to index with min_df={}",
            params.min_df.max(2),
            params.min_df
        )));
    }
    let texts: Vec<&str> = docs.iter().map(|(_, t)| t.as_ref()).collect();
    let vectorizer = TfidfVectorizer::fit(&texts, params)?;
    let doc_vectors = texts.iter().map(|t| vectorizer.transform(t)).collect();
    let doc_ids = docs.iter().map(|(id, _)| id.as_ref().to_owned()).collect();
    Ok(SparseIndex::from_parts(vectorizer, doc_ids, doc_vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<(String, String)> {
        texts.iter().enumerate().map(|(i, t)| (format!("d{i}"), t.to_string())).collect()
    }

    #[test]
    fn pruning_everything_is_degenerate() {
        let err = build_sparse_index(&docs(&["a b", "a c", "a d"]), TfidfParams::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateVocabulary(_)), "{err}");
    }

    #[test]
    fn df_window_keeps_exactly_min_df_terms() {
        let index = build_sparse_index(&docs(&["x y", "x y", "z z z"]), TfidfParams::default()).unwrap();
        assert_eq!(index.vectorizer().terms(), ["x", "x y", "y"]);
        assert_eq!(index.zero_vector_docs(), ["d2"]);
    }

    #[test]
    fn max_df_is_strict() {
        // "common" is in 4 of 5 docs: 0.8 is not more than 0.8, so it stays.
        let index = build_sparse_index(
            &docs(&["common one", "common two", "common one", "common two", "other"]),
            TfidfParams::default(),
        )
        .unwrap();
        assert!(index.vectorizer().column("common").is_some());
    }

    #[test]
    fn sublinear_tf() {
        let v = TfidfVectorizer::fit(&["q q q", "q r", "r s"], TfidfParams { min_df: 1, max_df: 1.0, ..Default::default() }).unwrap();
        let col_q = v.column("q").unwrap() as usize;
        let col_qq = v.column("q q").unwrap() as usize;
        let vec = v.transform("q q q");
        let raw_q = (1.0 + 3f64.ln()) * v.idf()[col_q];
        let raw_qq = (1.0 + 2f64.ln()) * v.idf()[col_qq];
        let norm = (raw_q * raw_q + raw_qq * raw_qq).sqrt();
        let got: HashMap<u32, f64> = vec.iter().collect();
        assert!((got[&(col_q as u32)] - raw_q / norm).abs() < 1e-12);
        assert!((got[&(col_qq as u32)] - raw_qq / norm).abs() < 1e-12);
    }

    #[test]
    fn identical_query_scores_one_and_disjoint_query_is_empty() {
        let index = build_sparse_index(
            &docs(&["late fee payment", "late fee waiver", "payment waiver terms", "governing law", "governing law venue"]),
            TfidfParams::default(),
        )
        .unwrap();
        let hits = index.candidates("late fee payment", 20);
        assert_eq!(hits[0].0, "d0");
        assert!(hits.len() >= 2);
        let exact = index.candidates("late fee waiver", 20);
        assert_eq!(exact[0].0, "d1");
        assert!((exact[0].1 - 1.0).abs() < 1e-9);
        assert!(index.candidates("unrelated words entirely", 20).is_empty());
        assert_eq!(index.candidates("late fee", 1).len(), 1);
    }

    #[test]
    fn archive_round_trip() {
        let index = build_sparse_index(&docs(&["x y", "x y z", "z y"]), TfidfParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        index.save(&path).unwrap();
        let loaded = SparseIndex::load(&path).unwrap();
        assert_eq!(loaded.doc_ids(), index.doc_ids());
        assert_eq!(loaded.candidates("x y", 5), index.candidates("x y", 5));
    }
}
