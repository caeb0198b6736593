//! Edit-operation guided incomplete utterance rewriting.
//!
//! The pipeline:
//!
//! 1. [`corpus`] loads dialogue triples (history, incomplete utterance,
//!    rewrite), tokenizes them and linearizes each dialogue into a single
//!    token stream with one speaker marker per utterance.
//! 2. [`labels`] aligns the incomplete utterance against its rewrite and
//!    projects the edit script onto the stream as `NA`/`RP`/`NW`/`IN` tags.
//! 3. [`graph`] builds the token-level dialogue graph (syntax, utterance,
//!    speaker and pseudo-coreference relations).
//! 4. [`model`] encodes the stream, refines it with a relational graph
//!    convolution, predicts edit labels and decodes the rewrite with
//!    cross-attention rescaled by `1 - P(NA)`.
//! 5. [`train`] optimizes the joint objective with a generation-only warm-up.
//! 6. [`metrics`] scores rewrites (BLEU, ROUGE, restoration F, exact match).
//!
//! [`llmaug`] adds history paraphrasing through a chat-completion endpoint.
//! Everything numeric runs on the small reverse-mode engine in [`autodiff`].

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod graph;
pub mod labels;
pub mod llmaug;
pub mod metrics;
pub mod model;
pub mod train;

pub use error::{Error, Result};

pub use corpus::{Dialogue, Pos, Sample, Token, TokenizeMode, Utterance, Vocab};
pub use graph::{DialogueGraph, RelationType};
pub use labels::{EditLabel, EditScript};
pub use metrics::MetricReport;
pub use model::{ModelConfig, RewriteModel};
pub use train::TrainConfig;
