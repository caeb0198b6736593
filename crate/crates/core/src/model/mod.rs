//! The rewriting network.
//!
//! A pre-norm transformer encoder reads the linearized dialogue; a
//! relational graph convolution refines its states over the dialogue graph
//! and the two are averaged. A tanh MLP predicts edit labels from the
//! averaged states, and the probability mass it puts on edits (`1 - P(NA)`)
//! scales the cross-attention logits of every decoder layer:
//!
//! ```text
//! logits[j, i] = (tau_d + lambda[i]) * (q_j . k_i) / sqrt(d_head)
//! ```
//!
//! Embeddings are shared between source, target and output projection.

mod batch;
pub mod checkpoint;
mod config;
mod decode;
pub mod gradsuite;
mod heads;
mod layers;
mod network;
mod rgcn;

pub use batch::{encode_sample, Batch, EncodedSample};
pub use config::{GuidanceGrad, LabelMode, ModelConfig};
pub use heads::{eol_loss, gen_loss, guidance, joint_loss, masked_nll, LabelHead};
pub use layers::{attention_weights, causal_mask, positions, Attention, Guide, Init, Linear, MASKED};
pub use network::{GenerateOptions, Losses, RewriteModel, SourceState, Strategy};
pub use rgcn::{fuse, rgcn_forward, RgcnLayer};
