//! Neural building blocks: initialization, affine layers, recurrent
//! cells, attention scorers, and an MLP with batch normalization.
//!
//! Layers register their tensors in a [`crate::autodiff::ParamStore`]
//! under a name prefix at construction time and read them back through
//! a [`crate::autodiff::Bound`] at forward time, so a layer struct
//! itself is just shape metadata.

pub mod attention;
pub mod init;
pub mod linear;
pub mod mlp;
pub mod rnn;

pub use attention::{AttentionKind, AttentionScorer};
pub use linear::Affine;
pub use mlp::{commit_stats, Mlp, StatUpdate};
pub use rnn::{RnnCell, RnnKind, RnnState, StepTiming};
