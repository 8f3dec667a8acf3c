//! Low-frequency label selection and frequency buckets.
//!
//! Everything here is a pure function of a train-split [`FrequencyTable`], so
//! the same set gates augmentation identically on train, validation and test.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{FrequencyTable, Sample, TaskKind};
use crate::error::{Error, Result};
use crate::fingerprint;

/// Tolerance applied before flooring `fraction * |C|`, so that e.g. 0.29 of
/// 100 labels yields 29 rather than the 28 its binary expansion would give.
const FLOOR_EPS: f64 = 1e-9;

pub(crate) fn floor_share(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + FLOOR_EPS).floor() as usize).min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Bottom `alpha` proportion of labels by train frequency.
    CutoffRatio { alpha: f64 },
    /// Every label; only empty-label samples stay unaugmented.
    NonEmpty,
    /// Labels whose train frequency is at most `threshold`.
    AbsoluteThresholdAndNonEmpty { threshold: u64 },
}

/// Ordering applied to labels with equal frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    AscendingLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    #[serde(flatten)]
    pub mode: SelectionMode,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl SelectionPolicy {
    pub fn cutoff(alpha: f64) -> Self {
        Self {
            mode: SelectionMode::CutoffRatio { alpha },
            tie_break: TieBreak::AscendingLabel,
        }
    }

    pub fn non_empty() -> Self {
        Self {
            mode: SelectionMode::NonEmpty,
            tie_break: TieBreak::AscendingLabel,
        }
    }

    pub fn threshold(threshold: u64) -> Self {
        Self {
            mode: SelectionMode::AbsoluteThresholdAndNonEmpty { threshold },
            tie_break: TieBreak::AscendingLabel,
        }
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        match self.mode {
            SelectionMode::CutoffRatio { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Config(format!("cutoff ratio {alpha} outside (0, 1]")));
                }
            }
            SelectionMode::NonEmpty | SelectionMode::AbsoluteThresholdAndNonEmpty { .. } => {
                if task != TaskKind::MultiLabel {
                    return Err(Error::Config(
                        "non-empty and threshold policies require a multi-label task".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The fixed set of labels whose samples are eligible for augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowFrequencySet {
    pub policy: SelectionPolicy,
    pub labels: BTreeSet<String>,
    pub source_fingerprint: String,
}

impl LowFrequencySet {
    pub fn contains(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("low-frequency set serializes")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint::of(self)
    }
}

/// Labels in ascending frequency order, ties by ascending identifier.
pub fn ascending_by_frequency(freq: &FrequencyTable) -> Vec<&str> {
    let mut labels: Vec<(&str, u64)> = freq.counts.iter().map(|(l, &c)| (l.as_str(), c)).collect();
    labels.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    labels.into_iter().map(|(l, _)| l).collect()
}

pub fn select_low_frequency(freq: &FrequencyTable, policy: SelectionPolicy) -> Result<LowFrequencySet> {
    policy.validate(freq.task)?;
    let labels: BTreeSet<String> = match policy.mode {
        SelectionMode::CutoffRatio { alpha } => {
            let k = floor_share(alpha, freq.num_labels());
            ascending_by_frequency(freq)
                .into_iter()
                .take(k)
                .map(str::to_owned)
                .collect()
        }
        SelectionMode::NonEmpty => freq.counts.keys().cloned().collect(),
        SelectionMode::AbsoluteThresholdAndNonEmpty { threshold } => freq
            .counts
            .iter()
            .filter(|(_, &c)| c <= threshold)
            .map(|(l, _)| l.clone())
            .collect(),
    };
    Ok(LowFrequencySet {
        policy,
        labels,
        source_fingerprint: freq.fingerprint(),
    })
}

/// How a multi-label sample's label set is matched against the low set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    #[default]
    AnyLabel,
    AllLabels,
}

/// Whether `sample` qualifies for augmentation. Empty label sets never do.
pub fn needs_augmentation(sample: &Sample, low: &LowFrequencySet, gate: Gate) -> bool {
    if sample.labels.is_empty() {
        return false;
    }
    match gate {
        Gate::AnyLabel => sample.labels.iter().any(|l| low.contains(l)),
        Gate::AllLabels => sample.labels.iter().all(|l| low.contains(l)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub buckets: Vec<Bucket>,
    pub fractions: Vec<f64>,
}

impl BucketAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(|b| b.labels.len()).collect()
    }

    pub fn bucket_of(&self, label: &str) -> Option<&str> {
        self.buckets
            .iter()
            .find(|b| b.labels.iter().any(|l| l == label))
            .map(|b| b.name.as_str())
    }
}

fn default_bucket_names(n: usize) -> Vec<String> {
    match n {
        3 => vec!["high".into(), "mid".into(), "low".into()],
        2 => vec!["high".into(), "low".into()],
        1 => vec!["all".into()],
        _ => (0..n).map(|i| format!("bucket-{i}")).collect(),
    }
}

/// Split labels into frequency buckets, most frequent first. Three buckets are
/// named high/mid/low.
pub fn bucketize(freq: &FrequencyTable, fractions: &[f64]) -> Result<BucketAssignment> {
    bucketize_named(freq, fractions, &default_bucket_names(fractions.len()))
}

pub fn bucketize_named(freq: &FrequencyTable, fractions: &[f64], names: &[String]) -> Result<BucketAssignment> {
    if fractions.is_empty() {
        return Err(Error::Config("no bucket fractions given".into()));
    }
    if names.len() != fractions.len() {
        return Err(Error::Config("bucket names and fractions differ in length".into()));
    }
    if let Some(bad) = fractions.iter().find(|&&f| !(f > 0.0)) {
        return Err(Error::Config(format!("bucket fraction {bad} must be positive")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("bucket fractions sum to {total}, not 1")));
    }

    let mut descending: Vec<(&str, u64)> = freq.counts.iter().map(|(l, &c)| (l.as_str(), c)).collect();
    descending.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let n = descending.len();
    let mut buckets = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (i, (&fraction, name)) in fractions.iter().zip(names).enumerate() {
        let end = if i + 1 == fractions.len() {
            n
        } else {
            (start + floor_share(fraction, n)).min(n)
        };
        buckets.push(Bucket {
            name: name.clone(),
            labels: descending[start..end].iter().map(|(l, _)| l.to_string()).collect(),
        });
        start = end;
    }
    Ok(BucketAssignment {
        buckets,
        fractions: fractions.to_vec(),
    })
}
