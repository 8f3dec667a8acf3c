//! Selective retrieval-augmentation for long-tail text classification.
//!
//! The pipeline runs in stages that map onto the modules below:
//!
//! 1. [`corpus`] loads line-delimited JSON datasets and computes train-split
//!    label statistics.
//! 2. [`longtail`] turns those statistics into the fixed low-frequency label
//!    set that gates augmentation on every split.
//! 3. [`retrieval`] finds related training clauses with a sparse TF-IDF stage
//!    followed by dense cosine re-ranking.
//! 4. [`augment`] composes the prompt-wrapped augmented inputs under the
//!    clause and total token caps.
//! 5. [`classify`] trains a linear stand-in classifier on the composed text.
//! 6. [`evaluate`] measures micro/macro-F1, bucketed F1, paired bootstrap
//!    intervals and McNemar's test.
//!
//! [`experiment`] wires the stages together into the baseline / full / selective
//! arms, cutoff sweeps and run comparisons used by the `sra` command-line tool.

pub mod augment;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod longtail;
pub mod retrieval;
pub mod synthetic;
pub mod text;

mod fingerprint;

pub use error::{Error, Result};
