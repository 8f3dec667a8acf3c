//! Two-stage retrieval over the train split: TF-IDF candidates, then dense
//! cosine re-ranking, never returning the query itself.

pub mod dense;
pub mod tfidf;

use serde::{Deserialize, Serialize};

pub use dense::{cosine, EmbeddingMatrix, EmbeddingProvider, HashedTrigramProvider, PrecomputedProvider};
pub use tfidf::{build_sparse_index, SparseIndex, SparseVector, TfidfParams, TfidfVectorizer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Sparse candidates per query.
    pub top_n: usize,
    /// Candidates retained after dense re-ranking.
    pub top_m: usize,
    /// Clauses used for augmentation.
    pub k: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { top_n: 20, top_m: 5, k: 1 }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 || self.top_m == 0 {
            return Err(Error::Config("top_n and top_m must be positive".into()));
        }
        if !(1..=5).contains(&self.k) || self.k > self.top_m {
            return Err(Error::Config(format!(
                "k = {} must lie in [1, 5] and not exceed top_m = {}",
                self.k, self.top_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub sparse_score: f64,
    pub dense_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NoCandidates,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::NoCandidates => "no-candidates",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    /// Sparse-stage candidates with the query removed, in sparse order.
    pub candidates: Vec<Candidate>,
    /// Dense re-ranking of `candidates`, truncated to `top_m`.
    pub reranked: Vec<Candidate>,
    /// Final picks: the first `k` entries of `reranked`.
    pub picks: Vec<String>,
    pub skipped: Option<SkipReason>,
}

impl RetrievalResult {
    pub fn pick_scores(&self) -> Vec<f64> {
        self.reranked.iter().take(self.picks.len()).map(|c| c.dense_score).collect()
    }
}

/// Attach dense scores to sparse candidates.
pub fn score_dense(sparse: &[(String, f64)], query_vec: &[f64], matrix: &EmbeddingMatrix) -> Result<Vec<Candidate>> {
    sparse
        .iter()
        .map(|(id, s)| {
            let v = matrix
                .get(id)
                .ok_or_else(|| Error::Embedding(format!("candidate `{id}` has no embedding")))?;
            Ok(Candidate {
                doc_id: id.clone(),
                sparse_score: *s,
                dense_score: cosine(query_vec, v),
            })
        })
        .collect()
}

/// Order candidates by dense score (ties by ascending id) and keep `top_m`.
pub fn rerank(candidates: &[Candidate], top_m: usize) -> Vec<Candidate> {
    let mut out = candidates.to_vec();
    out.sort_by(|a, b| {
        b.dense_score
            .total_cmp(&a.dense_score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    out.truncate(top_m);
    out
}

/// Sparse index and dense vectors over the same train documents.
#[derive(Debug, Clone)]
pub struct Retriever {
    index: SparseIndex,
    embeddings: EmbeddingMatrix,
    params: RetrievalParams,
}

impl Retriever {
    pub fn new(index: SparseIndex, embeddings: EmbeddingMatrix, params: RetrievalParams) -> Result<Self> {
        params.validate()?;
        if let Some(missing) = index.doc_ids().iter().find(|id| embeddings.get(id).is_none()) {
            return Err(Error::Embedding(format!("indexed document `{missing}` has no embedding")));
        }
        Ok(Self {
            index,
            embeddings,
            params,
        })
    }

    /// Index and embed `(id, text)` train documents.
    pub fn build(train: &[(&str, &str)], tfidf: TfidfParams, provider: &dyn EmbeddingProvider, params: RetrievalParams) -> Result<Self> {
        let index = build_sparse_index(train, tfidf)?;
        let embeddings = provider.embed(train)?;
        Self::new(index, embeddings, params)
    }

    pub fn index(&self) -> &SparseIndex {
        &self.index
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn params(&self) -> &RetrievalParams {
        &self.params
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.embeddings.get(doc_id).is_some()
    }

    /// sparse top-n, minus the query id, dense re-rank to top-m, first k picked.
    pub fn retrieve(&self, query_id: &str, query_text: &str, query_vec: &[f64]) -> Result<RetrievalResult> {
        let sparse: Vec<(String, f64)> = self
            .index
            .candidates(query_text, self.params.top_n)
            .into_iter()
            .filter(|(id, _)| id != query_id)
            .collect();
        let candidates = score_dense(&sparse, query_vec, &self.embeddings)?;
        let reranked = rerank(&candidates, self.params.top_m);
        let picks: Vec<String> = reranked.iter().take(self.params.k).map(|c| c.doc_id.clone()).collect();
        let skipped = picks.is_empty().then_some(SkipReason::NoCandidates);
        Ok(RetrievalResult {
            query_id: query_id.to_owned(),
            candidates,
            reranked,
            picks,
            skipped,
        })
    }
}
