//! Composition of augmented inputs.
//!
//! An eligible sample becomes
//! `"Original clause: <text> [SEP] Related clause for reference: <r1> ..."`,
//! where each retrieved clause is capped at 64 tokens and the whole sequence
//! at the model length. Ineligible or skipped samples pass through unchanged.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::longtail::{needs_augmentation, Gate, LowFrequencySet};
use crate::retrieval::{EmbeddingMatrix, EmbeddingProvider, Retriever, SkipReason};
use crate::text::Tokenizer;

/// Which labels are consulted when gating validation and test samples.
///
/// Only ground-truth gating exists: the low-frequency decision reads the gold
/// labels of every split, which is not available at deployment time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalGating {
    #[default]
    GroundTruthLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub clause_token_cap: usize,
    pub max_model_length: usize,
    pub prompt_orig: String,
    pub prompt_ref: String,
    pub separator: String,
    pub tokenizer: Tokenizer,
    pub eval_gating: EvalGating,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            clause_token_cap: 64,
            max_model_length: 512,
            prompt_orig: "Original clause:".into(),
            prompt_ref: "Related clause for reference:".into(),
            separator: "[SEP]".into(),
            tokenizer: Tokenizer::Whitespace,
            eval_gating: EvalGating::GroundTruthLabels,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clause_token_cap == 0 {
            return Err(Error::Config("clause_token_cap must be at least 1".into()));
        }
        if self.max_model_length <= self.clause_token_cap {
            return Err(Error::Config(format!(
                "max_model_length {} must exceed clause_token_cap {}",
                self.max_model_length, self.clause_token_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    #[default]
    None,
    Clause,
    Total,
    Both,
}

impl Truncation {
    fn from_flags(clause: bool, total: bool) -> Self {
        match (clause, total) {
            (false, false) => Truncation::None,
            (true, false) => Truncation::Clause,
            (false, true) => Truncation::Total,
            (true, true) => Truncation::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    #[serde(flatten)]
    pub base: Sample,
    pub composed_text: String,
    pub picks: Vec<String>,
    /// Dense similarity of each pick to the query.
    pub pick_scores: Vec<f64>,
    /// Tokens the model sees, after the model-length cap.
    pub token_count: usize,
    pub was_augmented: bool,
    pub truncation_applied: Truncation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<SkipReason>,
}

/// First `cap` whitespace tokens joined by single spaces.
pub fn truncate_tokens(text: &str, cap: usize) -> String {
    text.split_whitespace().take(cap).collect::<Vec<_>>().join(" ")
}

fn passthrough(base: &Sample, config: &AugmentationConfig) -> AugmentedSample {
    let n = config.tokenizer.count(&base.text);
    AugmentedSample {
        base: base.clone(),
        composed_text: base.text.clone(),
        picks: Vec::new(),
        pick_scores: Vec::new(),
        token_count: n.min(config.max_model_length),
        was_augmented: false,
        truncation_applied: Truncation::from_flags(false, n > config.max_model_length),
        skip_reason: None,
    }
}

/// Wrap `base` and the retrieved clauses in the prompt template. Clauses over
/// the cap are cut; an over-long sequence loses tokens from its end.
pub fn compose(base: &Sample, retrieved: &[&str], config: &AugmentationConfig) -> AugmentedSample {
    if retrieved.is_empty() {
        return passthrough(base, config);
    }
    let tok = config.tokenizer;
    let mut clause_cut = false;
    let clauses: Vec<String> = retrieved
        .iter()
        .map(|r| {
            clause_cut |= tok.count(r) > config.clause_token_cap;
            truncate_tokens(r, config.clause_token_cap)
        })
        .collect();

    let mut composed = format!(
        "{} {} {} {}",
        config.prompt_orig, base.text, config.separator, config.prompt_ref
    );
    for clause in &clauses {
        composed.push(' ');
        composed.push_str(clause);
    }

    let n = tok.count(&composed);
    let total_cut = n > config.max_model_length;
    if total_cut {
        composed = truncate_tokens(&composed, config.max_model_length);
    }
    AugmentedSample {
        base: base.clone(),
        composed_text: composed,
        picks: Vec::new(),
        pick_scores: Vec::new(),
        token_count: n.min(config.max_model_length),
        was_augmented: true,
        truncation_applied: Truncation::from_flags(clause_cut, total_cut),
        skip_reason: None,
    }
}

/// Which samples of a split qualify for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Eligibility {
    /// Baseline: nothing is augmented.
    Nothing,
    /// Full augmentation: every sample, including empty-label ones.
    Everything,
    /// Selective augmentation gated by a low-frequency set.
    Selective { low: LowFrequencySet, gate: Gate },
}

impl Eligibility {
    pub fn admits(&self, sample: &Sample) -> bool {
        match self {
            Eligibility::Nothing => false,
            Eligibility::Everything => true,
            Eligibility::Selective { low, gate } => needs_augmentation(sample, low, *gate),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub total: usize,
    pub eligible: usize,
    pub augmented: usize,
    pub skipped: BTreeMap<String, usize>,
    pub picks: usize,
    pub similarity_sum: f64,
}

impl CoverageStats {
    /// Fraction of samples actually augmented.
    pub fn coverage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.augmented as f64 / self.total as f64
        }
    }

    /// Mean dense similarity over all picks; `None` when nothing was picked.
    pub fn mean_similarity(&self) -> Option<f64> {
        (self.picks > 0).then(|| self.similarity_sum / self.picks as f64)
    }

    pub fn merge(&mut self, other: &CoverageStats) {
        self.total += other.total;
        self.eligible += other.eligible;
        self.augmented += other.augmented;
        self.picks += other.picks;
        self.similarity_sum += other.similarity_sum;
        for (reason, n) in &other.skipped {
            *self.skipped.entry(reason.clone()).or_default() += n;
        }
    }

    fn record(&mut self, sample: &AugmentedSample, eligible: bool) {
        self.total += 1;
        self.eligible += eligible as usize;
        self.augmented += sample.was_augmented as usize;
        if let Some(reason) = sample.skip_reason {
            *self.skipped.entry(reason.as_str().to_owned()).or_default() += 1;
        }
        self.picks += sample.pick_scores.len();
        self.similarity_sum += sample.pick_scores.iter().sum::<f64>();
    }
}

/// Retriever built on the train split plus the provider used to embed queries
/// from other splits.
pub struct RetrieverState<'a> {
    pub retriever: &'a Retriever,
    pub provider: &'a dyn EmbeddingProvider,
}

/// Augment every sample of `split` in input order.
pub fn augment_split(
    dataset: &Dataset,
    split: Split,
    eligibility: &Eligibility,
    state: &RetrieverState<'_>,
    config: &AugmentationConfig,
) -> Result<(Vec<AugmentedSample>, CoverageStats)> {
    config.validate()?;
    let samples: Vec<&Sample> = dataset.split(split).collect();
    let eligible: Vec<bool> = samples.iter().map(|s| eligibility.admits(s)).collect();

    let query_vectors: Option<EmbeddingMatrix> = if split == Split::Train {
        None
    } else {
        let items: Vec<(&str, &str)> = samples
            .iter()
            .zip(&eligible)
            .filter(|(_, &e)| e)
            .map(|(s, _)| (s.id.as_str(), s.text.as_str()))
            .collect();
        if items.is_empty() {
            None
        } else {
            Some(state.provider.embed(&items)?)
        }
    };
    let query_matrix = query_vectors.as_ref().unwrap_or_else(|| state.retriever.embeddings());

    let augmented: Vec<AugmentedSample> = samples
        .par_iter()
        .zip(eligible.par_iter())
        .map(|(&sample, &is_eligible)| {
            if !is_eligible {
                return Ok(passthrough(sample, config));
            }
            let query_vec = query_matrix
                .get(&sample.id)
                .ok_or_else(|| Error::Embedding(format!("query `{}` has no embedding", sample.id)))?;
            let result = state.retriever.retrieve(&sample.id, &sample.text, query_vec)?;
            let mut texts = Vec::with_capacity(result.picks.len());
            for pick in &result.picks {
                match dataset.get(pick) {
                    Some(doc) if doc.split == Split::Train => texts.push(doc.text.as_str()),
                    _ => {
                        return Err(Error::Validation(format!(
                            "retrieved `{pick}` for `{}` is not a training sample",
                            sample.id
                        )))
                    }
                }
            }
            let mut out = compose(sample, &texts, config);
            out.pick_scores = result.pick_scores();
            out.picks = result.picks;
            out.skip_reason = result.skipped;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut stats = CoverageStats::default();
    for (sample, &is_eligible) in augmented.iter().zip(&eligible) {
        stats.record(sample, is_eligible);
    }
    Ok((augmented, stats))
}

/// First line of an augmented split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedHeader {
    pub split: Split,
    pub eligibility: Eligibility,
    pub low_set_fingerprint: Option<String>,
    pub config: AugmentationConfig,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: AugmentedHeader,
}

pub fn write_augmented(path: impl AsRef<Path>, header: &AugmentedHeader, samples: &[AugmentedSample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &HeaderLine { header: header.clone() })?;
    w.write_all(b"\n").map_err(io)?;
    for sample in samples {
        serde_json::to_writer(&mut w, sample)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_augmented(path: impl AsRef<Path>) -> Result<(AugmentedHeader, Vec<AugmentedSample>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
        line,
        message: e.to_string(),
    };
    let first = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{} is empty", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: HeaderLine = serde_json::from_str(&first).map_err(|e| parse_err(1, e))?;
    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line).map_err(|e| parse_err(idx + 2, e))?);
    }
    Ok((header.header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(text: &str) -> Sample {
        Sample::new("s1", text, &["a"], Split::Train)
    }

    fn words(n: usize, stem: &str) -> String {
        (0..n).map(|i| format!("{stem}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn truncate_tokens_cases() {
        let ten = words(10, "w");
        assert_eq!(truncate_tokens(&ten, 64), ten);
        let seventy = words(70, "w");
        assert_eq!(truncate_tokens(&seventy, 64), words(64, "w"));
        assert_eq!(truncate_tokens("a  b\tc", 2), "a b");
    }

    #[test]
    fn compose_uses_prompt_template() {
        let out = compose(&sample("Payment due in thirty days"), &["Fees payable monthly"], &AugmentationConfig::default());
        assert_eq!(
            out.composed_text,
            "Original clause: Payment due in thirty days [SEP] Related clause for reference: Fees payable monthly"
        );
        assert!(out.was_augmented);
        assert_eq!(out.truncation_applied, Truncation::None);
        assert_eq!(out.token_count, 15);
    }

    #[test]
    fn empty_retrieval_passes_through() {
        let base = sample("Keep  me\tverbatim");
        let out = compose(&base, &[], &AugmentationConfig::default());
        assert!(!out.was_augmented);
        assert_eq!(out.composed_text, base.text);
        assert!(out.picks.is_empty());
    }

    #[test]
    fn overlong_sequence_is_cut_from_the_end() {
        // 2 + 4 prompt tokens, 1 separator, 500 base, 64 clause = 571 tokens.
        let base = sample(&words(500, "b"));
        let clause = words(64, "r");
        let out = compose(&base, &[&clause], &AugmentationConfig::default());
        assert_eq!(out.token_count, 512);
        assert_eq!(out.composed_text.split_whitespace().count(), 512);
        assert_eq!(out.truncation_applied, Truncation::Total);
        // 571 - 512 = 59 dropped: the clause keeps its first 5 tokens
        assert!(out.composed_text.ends_with("r0 r1 r2 r3 r4"));
        assert!(out.composed_text.contains("b499"));
    }

    #[test]
    fn long_clause_is_capped() {
        let clause = words(70, "r");
        let out = compose(&sample("short base"), &[&clause], &AugmentationConfig::default());
        assert_eq!(out.truncation_applied, Truncation::Clause);
        assert!(out.composed_text.ends_with("r63"));
        let both = compose(&sample(&words(500, "b")), &[&clause], &AugmentationConfig::default());
        assert_eq!(both.truncation_applied, Truncation::Both);
    }

    #[test]
    fn overlong_passthrough_reports_model_cap() {
        let base = sample(&words(600, "b"));
        let out = compose(&base, &[], &AugmentationConfig::default());
        assert_eq!(out.composed_text, base.text);
        assert_eq!(out.token_count, 512);
        assert_eq!(out.truncation_applied, Truncation::Total);
    }

    #[test]
    fn config_validation() {
        let mut c = AugmentationConfig::default();
        c.clause_token_cap = 0;
        assert!(c.validate().is_err());
        c.clause_token_cap = 512;
        assert!(c.validate().is_err());
    }

    #[test]
    fn coverage_merge() {
        let mut a = CoverageStats { total: 4, augmented: 1, picks: 1, similarity_sum: 0.5, ..Default::default() };
        let b = CoverageStats { total: 6, augmented: 3, picks: 3, similarity_sum: 2.1, ..Default::default() };
        a.merge(&b);
        assert_eq!(a.coverage(), 0.4);
        assert!((a.mean_similarity().unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(CoverageStats::default().mean_similarity(), None);
    }
}
