//! Training and evaluation engine for a sequential recommender that keeps a
//! user's long-term and short-term interests in two separate representations.
//!
//! The model reads a user's interaction history through two encoders: an
//! attention-pooling encoder over the whole history for the stable long-term
//! side, and an RNN-plus-attention encoder for the fast-moving short-term
//! side. Mean-pooled slices of the history act as proxy labels, and pairwise
//! contrastive losses pull each encoder toward its own proxy and away from
//! the opposite one. A learned gate fuses the two sides per prediction.
//!
//! Everything runs on a small reverse-mode autodiff tape over dense f64
//! tensors, so the whole stack is self-contained and byte-for-byte
//! reproducible under a fixed seed.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradsuite;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod seeding;
pub mod train;
