//! Disentangled long/short-term interest model: configuration, the
//! two-encoder network with gated fusion, loss terms, and checkpoints.

pub mod checkpoint;
mod config;
pub mod losses;
mod net;

pub use config::{ConfigError, ContrastiveKind, ModelConfig};
pub use net::{
    ExampleView, InterestSnapshot, JointParts, Model, ModelError, ScoredCandidates, TrainStats,
};
