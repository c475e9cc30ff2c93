//! Retrieval-augmented audio deepfake detection.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`]: labeled clips, 4-second segmentation, manifests.
//! 2. [`encoder`]: per-layer long features, the time-wise speedup operator,
//!    per-layer temporal embeddings, and the on-disk RADF feature cache.
//! 3. [`vecstore`]: one exact cosine vector database per encoder layer,
//!    built from bonafide embeddings, serving top-K retrieval.
//! 4. [`nn`] and [`model`]: attentive statistics pooling, the MFA
//!    classifier, the fine-tuning baseline and RAD-MFA, which compares a
//!    query against its retrieved references.
//! 5. [`metrics`]: pooled EER and score files.
//!
//! [`pipeline`] strings the stages together for training, evaluation and
//! the ablation grid.

pub mod corpus;
pub mod encoder;
pub mod error;
mod kv;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod vecstore;

pub use error::{Error, Result};

// The guide's snippets run as doctests so they cannot drift from the API.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/corpus.md")]
    struct Corpus;
    #[doc = include_str!("../../../book/src/features.md")]
    struct Features;
    #[doc = include_str!("../../../book/src/retrieval.md")]
    struct Retrieval;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
