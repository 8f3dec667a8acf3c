//! Deterministic long-tail corpus generator.
//!
//! Head classes draw topic words from their own pool mixed with shared filler.
//! Each tail class hangs off a parent head, shares most of its vocabulary and
//! is written from a couple of fixed templates, so every tail sample has a
//! near-duplicate in train.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sample, Split, TaskKind};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub head_classes: usize,
    pub tail_classes: usize,
    pub head_train: usize,
    pub tail_train: usize,
    pub head_eval: usize,
    pub tail_eval: usize,
    pub templates_per_tail: usize,
    pub filler_vocab: usize,
    pub head_topic_words: usize,
    pub tail_signature_words: usize,
    /// Token range of head samples.
    pub head_len: (usize, usize),
    /// Share of head tokens drawn from the class topic pool.
    pub head_topic_rate: f64,
    /// Share of head tokens drawn from another head's topic pool.
    pub head_confusion_rate: f64,
    /// Template length for tail samples.
    pub template_len: usize,
    /// Signature tokens per template.
    pub template_signature: usize,
    /// Probability that a template token is resampled.
    pub template_noise: f64,
    /// Token range of the parent-style context wrapped around a tail template.
    pub tail_context_len: (usize, usize),
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            head_classes: 3,
            tail_classes: 9,
            head_train: 500,
            tail_train: 10,
            head_eval: 100,
            tail_eval: 10,
            templates_per_tail: 2,
            filler_vocab: 1500,
            head_topic_words: 60,
            tail_signature_words: 12,
            head_len: (30, 50),
            head_topic_rate: 0.3,
            head_confusion_rate: 0.08,
            template_len: 24,
            template_signature: 5,
            template_noise: 0.2,
            tail_context_len: (15, 30),
        }
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "n", "r", "s", "l", "x"];

/// `count` pronounceable pseudo-words not already in `seen`.
fn pseudo_words(rng: &mut ChaCha8Rng, count: usize, seen: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Vocab {
    filler: Vec<String>,
    head_topics: Vec<Vec<String>>,
    tail_signatures: Vec<Vec<String>>,
}

fn label_name(i: usize, head: bool) -> String {
    if head {
        format!("head_{i:02}")
    } else {
        format!("tail_{i:02}")
    }
}

/// Generate the corpus described by `spec`; labels are `head_NN` / `tail_NN`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::new();
    let vocab = Vocab {
        filler: pseudo_words(&mut rng, spec.filler_vocab, &mut seen),
        head_topics: (0..spec.head_classes)
            .map(|_| pseudo_words(&mut rng, spec.head_topic_words, &mut seen))
            .collect(),
        tail_signatures: (0..spec.tail_classes)
            .map(|_| pseudo_words(&mut rng, spec.tail_signature_words, &mut seen))
            .collect(),
    };

    // tail templates: fixed token sequences mixing signature, parent topic and filler words
    let templates: Vec<Vec<Vec<String>>> = (0..spec.tail_classes)
        .map(|t| {
            let parent = t % spec.head_classes;
            (0..spec.templates_per_tail)
                .map(|_| {
                    let mut toks: Vec<String> = (0..spec.template_len)
                        .map(|_| {
                            if rng.random_bool(0.5) {
                                vocab.head_topics[parent].choose(&mut rng).unwrap().clone()
                            } else {
                                vocab.filler.choose(&mut rng).unwrap().clone()
                            }
                        })
                        .collect();
                    for _ in 0..spec.template_signature {
                        let pos = rng.random_range(0..toks.len());
                        toks[pos] = vocab.tail_signatures[t].choose(&mut rng).unwrap().clone();
                    }
                    toks
                })
                .collect()
        })
        .collect();

    let mut samples = Vec::new();
    for split in Split::ALL {
        let (n_head, n_tail) = match split {
            Split::Train => (spec.head_train, spec.tail_train),
            _ => (spec.head_eval, spec.tail_eval),
        };
        for h in 0..spec.head_classes {
            for i in 0..n_head {
                let text = head_text(&mut rng, spec, &vocab, h);
                samples.push(sample(split, &label_name(h, true), i, text));
            }
        }
        for t in 0..spec.tail_classes {
            for i in 0..n_tail {
                let template = &templates[t][i % spec.templates_per_tail];
                let text = tail_text(&mut rng, spec, &vocab, t % spec.head_classes, template);
                samples.push(sample(split, &label_name(t, false), i, text));
            }
        }
    }
    Dataset::new(samples, TaskKind::SingleLabel)
}

fn sample(split: Split, label: &str, i: usize, text: String) -> Sample {
    Sample::new(format!("{split}-{label}-{i:04}"), text, &[label], split)
}

fn head_word(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, vocab: &Vocab, h: usize) -> String {
    let u: f64 = rng.random();
    let pool = if u < spec.head_topic_rate {
        &vocab.head_topics[h]
    } else if u < spec.head_topic_rate + spec.head_confusion_rate && spec.head_classes > 1 {
        let other = (h + rng.random_range(1..spec.head_classes)) % spec.head_classes;
        &vocab.head_topics[other]
    } else {
        &vocab.filler
    };
    pool.choose(rng).unwrap().clone()
}

fn head_text(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, vocab: &Vocab, h: usize) -> String {
    let len = rng.random_range(spec.head_len.0..=spec.head_len.1);
    (0..len).map(|_| head_word(rng, spec, vocab, h)).collect::<Vec<_>>().join(" ")
}

fn tail_text(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, vocab: &Vocab, parent: usize, template: &[String]) -> String {
    let ctx = rng.random_range(spec.tail_context_len.0..=spec.tail_context_len.1);
    let before = rng.random_range(0..=ctx);
    let mut words: Vec<String> = (0..before).map(|_| head_word(rng, spec, vocab, parent)).collect();
    for tok in template {
        if rng.random_bool(spec.template_noise) {
            words.push(head_word(rng, spec, vocab, parent));
        } else {
            words.push(tok.clone());
        }
    }
    words.extend((before..ctx).map(|_| head_word(rng, spec, vocab, parent)));
    words.join(" ")
}

/// The shipped acceptance corpus.
pub fn acceptance_corpus() -> Result<Dataset> {
    generate(&SyntheticSpec::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = acceptance_corpus().unwrap();
        let freq = a.frequency_table();
        assert_eq!(freq.num_labels(), 12);
        assert_eq!(freq.count("head_00"), 500);
        assert_eq!(freq.count("tail_08"), 10);
        assert_eq!(a.split(Split::Test).count(), 390);
        let b = acceptance_corpus().unwrap();
        assert_eq!(a.split_fingerprint(Split::Train), b.split_fingerprint(Split::Train));
    }
}
