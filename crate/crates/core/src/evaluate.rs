//! Classification metrics and paired significance tests.
//!
//! Metrics count label memberships: a sample with gold `{x}` and prediction
//! `{x, y}` is one true positive for `x` and one false positive for `y`. The
//! multi-label empty set has no memberships and therefore contributes nothing
//! to any count. Labels with no support still enter macro-F1 with F1 = 0.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::CoverageStats;
use crate::corpus::nearest_rank;
use crate::error::{Error, Result};
use crate::longtail::BucketAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label: BTreeMap<String, LabelScores>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<(String, f64)>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Counts {
    fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-sample membership events as label indices: (true positives, false
/// positives, false negatives).
type Events = (Vec<u32>, Vec<u32>, Vec<u32>);

fn sample_events(gold: &[String], pred: &[String], index: &HashMap<&str, u32>) -> Result<Events> {
    let lookup = |l: &String| {
        index
            .get(l.as_str())
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("label `{l}` is outside the vocabulary")))
    };
    let gold: Vec<u32> = gold.iter().map(lookup).collect::<Result<_>>()?;
    let pred: Vec<u32> = pred.iter().map(lookup).collect::<Result<_>>()?;
    let tp = gold.iter().filter(|g| pred.contains(g)).copied().collect();
    let fp = pred.iter().filter(|p| !gold.contains(p)).copied().collect();
    let fn_ = gold.iter().filter(|g| !pred.contains(g)).copied().collect();
    Ok((tp, fp, fn_))
}

fn vocab_index(vocab: &[String]) -> HashMap<&str, u32> {
    vocab.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect()
}

fn accumulate(counts: &mut [Counts], events: &Events) {
    for &l in &events.0 {
        counts[l as usize].tp += 1;
    }
    for &l in &events.1 {
        counts[l as usize].fp += 1;
    }
    for &l in &events.2 {
        counts[l as usize].fn_ += 1;
    }
}

fn macro_from_counts(counts: &[Counts]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().map(Counts::f1).sum::<f64>() / counts.len() as f64
}

pub fn f1_scores(gold: &[Vec<String>], pred: &[Vec<String>], vocab: &[String]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold rows but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let index = vocab_index(vocab);
    let mut counts = vec![Counts::default(); vocab.len()];
    for (g, p) in gold.iter().zip(pred) {
        accumulate(&mut counts, &sample_events(g, p, &index)?);
    }
    let pooled = counts.iter().fold(Counts::default(), |acc, c| Counts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    let per_label = vocab
        .iter()
        .zip(&counts)
        .map(|(l, c)| {
            (
                l.clone(),
                LabelScores {
                    precision: ratio(c.tp, c.tp + c.fp),
                    recall: ratio(c.tp, c.tp + c.fn_),
                    f1: c.f1(),
                    support: c.tp + c.fn_,
                },
            )
        })
        .collect();
    Ok(EvalReport {
        micro_f1: pooled.f1(),
        macro_f1: macro_from_counts(&counts),
        per_label,
        buckets: Vec::new(),
        n_samples: gold.len(),
    })
}

/// Pooled micro-F1 without vocabulary bookkeeping (labels compared as strings).
pub fn micro_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        let hits = g.iter().filter(|l| p.contains(l)).count() as u64;
        tp += hits;
        fp += p.len() as u64 - hits;
        fn_ += g.len() as u64 - hits;
    }
    Counts { tp, fp, fn_ }.f1()
}

/// Unweighted mean of per-label F1 inside each bucket.
pub fn bucketed_macro_f1(report: &EvalReport, buckets: &BucketAssignment) -> Vec<(String, f64)> {
    buckets
        .buckets
        .iter()
        .map(|b| {
            let f1s: Vec<f64> = b
                .labels
                .iter()
                .map(|l| report.per_label.get(l).map_or(0.0, |s| s.f1))
                .collect();
            let mean = if f1s.is_empty() {
                0.0
            } else {
                f1s.iter().sum::<f64>() / f1s.len() as f64
            };
            (b.name.clone(), mean)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Random stream for resample `r`: a ChaCha8 generator seeded with `seed` on
/// stream `r`, drawing `n` indices uniformly from `0..n`.
pub fn resample_indices(seed: u64, r: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Paired bootstrap interval for `macro_f1(b) - macro_f1(a)`.
pub fn bootstrap_delta_ci(
    gold: &[Vec<String>],
    pred_a: &[Vec<String>],
    pred_b: &[Vec<String>],
    vocab: &[String],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCi> {
    if resamples < 100 {
        return Err(Error::InvalidInput(format!("{resamples} resamples is too few (minimum 100)")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} outside (0, 1)")));
    }
    if gold.len() != pred_a.len() || gold.len() != pred_b.len() {
        return Err(Error::InvalidInput("prediction lists are not aligned".into()));
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("nothing to resample".into()));
    }
    let index = vocab_index(vocab);
    let events_a: Vec<Events> = gold.iter().zip(pred_a).map(|(g, p)| sample_events(g, p, &index)).collect::<Result<_>>()?;
    let events_b: Vec<Events> = gold.iter().zip(pred_b).map(|(g, p)| sample_events(g, p, &index)).collect::<Result<_>>()?;
    let n = gold.len();

    let mut deltas: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut ca = vec![Counts::default(); vocab.len()];
            let mut cb = vec![Counts::default(); vocab.len()];
            for i in resample_indices(seed, r, n) {
                accumulate(&mut ca, &events_a[i]);
                accumulate(&mut cb, &events_b[i]);
            }
            macro_from_counts(&cb) - macro_from_counts(&ca)
        })
        .collect();
    deltas.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        low: deltas[nearest_rank(tail, resamples) - 1],
        high: deltas[nearest_rank(1.0 - tail, resamples) - 1],
        level,
        resamples,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarMethod {
    Exact,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// System A correct, system B wrong.
    pub b: u64,
    /// System A wrong, system B correct.
    pub c: u64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

/// Below this many discordant pairs the exact binomial test is used.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemar {
    let n = b + c;
    if n == 0 {
        return McNemar { b, c, p_value: 1.0, method: McNemarMethod::Exact };
    }
    if n < MCNEMAR_EXACT_BELOW {
        let k = b.min(c);
        let mut term = 1.0f64; // C(n, 0)
        let mut tail = 0.0;
        for i in 0..=k {
            if i > 0 {
                term *= (n - i + 1) as f64 / i as f64;
            }
            tail += term;
        }
        let p = (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0);
        McNemar { b, c, p_value: p, method: McNemarMethod::Exact }
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let chi2 = diff.max(0.0).powi(2) / n as f64;
        // 1-df chi-square survival function: P(X > x) = erfc(sqrt(x / 2)).
        let p = statrs::function::erf::erfc((chi2 / 2.0).sqrt());
        McNemar { b, c, p_value: p, method: McNemarMethod::ChiSquare }
    }
}

/// McNemar's test on per-sample correctness of two single-label systems.
pub fn mcnemar_test(gold: &[Vec<String>], pred_a: &[Vec<String>], pred_b: &[Vec<String>]) -> Result<McNemar> {
    if gold.len() != pred_a.len() || gold.len() != pred_b.len() {
        return Err(Error::InvalidInput("prediction lists are not aligned".into()));
    }
    let (mut b, mut c) = (0, 0);
    for ((g, pa), pb) in gold.iter().zip(pred_a).zip(pred_b) {
        match (g == pa, g == pb) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub cutoff: f64,
    pub coverage: f64,
    pub mean_similarity: Option<f64>,
}

pub fn coverage_similarity(stats: &[(f64, CoverageStats)]) -> Vec<CoverageRow> {
    stats
        .iter()
        .map(|(cutoff, s)| CoverageRow {
            cutoff: *cutoff,
            coverage: s.coverage(),
            mean_similarity: s.mean_similarity(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDelta {
    pub label: String,
    pub f1_a: f64,
    pub f1_b: f64,
    pub delta: f64,
}

/// Labels ordered by F1 gain of `b` over `a`, ties by identifier, first `k`.
pub fn top_k_label_deltas(report_a: &EvalReport, report_b: &EvalReport, k: usize) -> Vec<LabelDelta> {
    let mut deltas: Vec<LabelDelta> = report_a
        .per_label
        .iter()
        .map(|(label, a)| {
            let f1_b = report_b.per_label.get(label).map_or(0.0, |s| s.f1);
            LabelDelta {
                label: label.clone(),
                f1_a: a.f1,
                f1_b,
                delta: f1_b - a.f1,
            }
        })
        .collect();
    deltas.sort_by(|x, y| y.delta.total_cmp(&x.delta).then_with(|| x.label.cmp(&y.label)));
    deltas.truncate(k);
    deltas
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub macro_f1_a: f64,
    pub macro_f1_b: f64,
    pub delta_macro_f1: f64,
    pub delta_micro_f1: f64,
    pub bootstrap_ci: BootstrapCi,
    /// Present for single-label tasks only.
    pub mcnemar: Option<McNemar>,
    pub bucket_deltas: Vec<(String, f64, f64, f64)>,
    pub per_label_deltas: Vec<LabelDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub top_k: usize,
    pub mcnemar: bool,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            level: 0.95,
            seed: 13,
            top_k: 5,
            mcnemar: true,
        }
    }
}

/// Full comparison of system B against system A on the same gold labels.
pub fn compare(
    gold: &[Vec<String>],
    pred_a: &[Vec<String>],
    pred_b: &[Vec<String>],
    vocab: &[String],
    buckets: Option<&BucketAssignment>,
    params: &CompareParams,
) -> Result<ComparisonReport> {
    let mut a = f1_scores(gold, pred_a, vocab)?;
    let mut b = f1_scores(gold, pred_b, vocab)?;
    if let Some(buckets) = buckets {
        a.buckets = bucketed_macro_f1(&a, buckets);
        b.buckets = bucketed_macro_f1(&b, buckets);
    }
    let ci = bootstrap_delta_ci(gold, pred_a, pred_b, vocab, params.resamples, params.level, params.seed)?;
    let mcnemar = if params.mcnemar {
        Some(mcnemar_test(gold, pred_a, pred_b)?)
    } else {
        None
    };
    Ok(ComparisonReport {
        macro_f1_a: a.macro_f1,
        macro_f1_b: b.macro_f1,
        delta_macro_f1: b.macro_f1 - a.macro_f1,
        delta_micro_f1: b.micro_f1 - a.micro_f1,
        bootstrap_ci: ci,
        mcnemar,
        bucket_deltas: a
            .buckets
            .iter()
            .zip(&b.buckets)
            .map(|((name, fa), (_, fb))| (name.clone(), *fa, *fb, fb - fa))
            .collect(),
        per_label_deltas: top_k_label_deltas(&a, &b, params.top_k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(labels: &[&str]) -> Vec<Vec<String>> {
        labels.iter().map(|l| vec![l.to_string()]).collect()
    }

    fn vocab(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|l| l.to_string()).collect()
    }

    #[test]
    fn perfect_predictions() {
        let g = rows(&["a", "b", "c", "a"]);
        let r = f1_scores(&g, &g, &vocab(&["a", "b", "c"])).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn single_label_hand_example() {
        let r = f1_scores(&rows(&["a", "a", "b", "c"]), &rows(&["a", "b", "b", "b"]), &vocab(&["a", "b", "c"])).unwrap();
        assert!((r.micro_f1 - 0.5).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.5 + 0.0) / 3.0).abs() < 1e-12);
        assert_eq!(r.per_label["b"].precision, 1.0 / 3.0);
        assert_eq!(r.per_label["c"].support, 1);
    }

    #[test]
    fn empty_set_contributes_no_counts() {
        let g = vec![vec!["x".to_string()], vec![]];
        let r = f1_scores(&g, &g, &vocab(&["x"])).unwrap();
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.per_label["x"].support, 1);
    }

    #[test]
    fn zero_support_label_counts_as_zero() {
        let g = rows(&["a", "a"]);
        let r = f1_scores(&g, &g, &vocab(&["a", "b"])).unwrap();
        assert_eq!(r.macro_f1, 0.5);
    }

    #[test]
    fn mismatched_lengths_and_unknown_labels() {
        assert!(f1_scores(&rows(&["a"]), &rows(&["a", "a"]), &vocab(&["a"])).is_err());
        assert!(f1_scores(&rows(&["a"]), &rows(&["z"]), &vocab(&["a"])).is_err());
    }

    #[test]
    fn buckets_of_one_match_global_macro() {
        let r = f1_scores(&rows(&["a", "b"]), &rows(&["a", "a"]), &vocab(&["a", "b"])).unwrap();
        let all = BucketAssignment {
            buckets: vec![crate::longtail::Bucket { name: "all".into(), labels: vocab(&["a", "b"]) }],
            fractions: vec![1.0],
        };
        assert_eq!(bucketed_macro_f1(&r, &all)[0].1, r.macro_f1);
        let singles = BucketAssignment {
            buckets: vec![
                crate::longtail::Bucket { name: "x".into(), labels: vocab(&["a"]) },
                crate::longtail::Bucket { name: "y".into(), labels: vocab(&["b"]) },
            ],
            fractions: vec![0.5, 0.5],
        };
        let b = bucketed_macro_f1(&r, &singles);
        assert_eq!(b[0].1, r.per_label["a"].f1);
        assert_eq!(b[1].1, 0.0);
    }

    #[test]
    fn mcnemar_identical_predictions() {
        let g = rows(&["a", "b"]);
        let m = mcnemar_test(&g, &rows(&["a", "a"]), &rows(&["a", "a"])).unwrap();
        assert_eq!((m.b, m.c, m.p_value, m.method), (0, 0, 1.0, McNemarMethod::Exact));
    }

    #[test]
    fn mcnemar_exact_small_counts() {
        let m = mcnemar_from_counts(2, 8);
        assert_eq!(m.method, McNemarMethod::Exact);
        assert!((m.p_value - 112.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn mcnemar_chi_square_branch() {
        let m = mcnemar_from_counts(10, 40);
        assert_eq!(m.method, McNemarMethod::ChiSquare);
        assert!((m.p_value - 4.11e-5).abs() < 0.05e-5, "{}", m.p_value);
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        let g = rows(&["a", "b", "a", "b", "a"]);
        let p = rows(&["a", "a", "a", "b", "b"]);
        let v = vocab(&["a", "b"]);
        let ci = bootstrap_delta_ci(&g, &p, &p, &v, 200, 0.95, 1).unwrap();
        assert_eq!((ci.low, ci.high), (0.0, 0.0));

        let g1 = rows(&["a"; 6]);
        let wrong: Vec<Vec<String>> = vec![vec![]; 6];
        let ci = bootstrap_delta_ci(&g1, &wrong, &g1, &vocab(&["a"]), 100, 0.95, 1).unwrap();
        assert_eq!((ci.low, ci.high), (1.0, 1.0));
        assert!(bootstrap_delta_ci(&g, &p, &p, &v, 99, 0.95, 1).is_err());
    }

    #[test]
    fn coverage_rows() {
        let none = CoverageStats { total: 10, ..Default::default() };
        let all = CoverageStats { total: 10, augmented: 10, picks: 10, similarity_sum: 7.0, ..Default::default() };
        let rows = coverage_similarity(&[(0.0, none), (1.0, all)]);
        assert_eq!(rows[0].coverage, 0.0);
        assert_eq!(rows[0].mean_similarity, None);
        assert_eq!(rows[1].coverage, 1.0);
        assert!((rows[1].mean_similarity.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn top_k_ordering() {
        let v = vocab(&["1", "4", "9"]);
        let g = rows(&["1", "4", "9", "4"]);
        let a = f1_scores(&g, &rows(&["1", "9", "9", "9"]), &v).unwrap();
        let b = f1_scores(&g, &rows(&["1", "4", "9", "4"]), &v).unwrap();
        let top = top_k_label_deltas(&a, &b, 10);
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].label, "4");
        assert_eq!(top[0].delta, 1.0);
        assert_eq!(top[2].delta, 0.0);
        let same = top_k_label_deltas(&a, &a, 2);
        assert!(same.iter().all(|d| d.delta == 0.0) && same.len() == 2);
    }
}
