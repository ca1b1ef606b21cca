//! Model hyperparameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{AttentionKind, RnnKind};

/// Pairwise objective used for the interest-alignment terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveKind {
    Bpr,
    Triplet,
}

impl ContrastiveKind {
    pub fn parse(s: &str) -> Option<ContrastiveKind> {
        match s {
            "bpr" => Some(ContrastiveKind::Bpr),
            "triplet" => Some(ContrastiveKind::Triplet),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ContrastiveKind::Bpr => "bpr",
            ContrastiveKind::Triplet => "triplet",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Hyperparameters of the two-encoder model.
///
/// Defaults suit a dense e-commerce-style interaction log: short
/// proxy window 3, alignment threshold 5, sequences capped at 50.
/// Sparser logs with long sessions (short-video-style) typically use
/// `recent_window=5`, `proxy_threshold=10`, `max_seq_len=250` and the
/// `bpr` objective instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding and hidden width `d`.
    pub embed_dim: usize,
    /// Number of most recent items averaged into the short-term proxy.
    pub recent_window: usize,
    /// Prefix length that must be exceeded before alignment terms apply.
    pub proxy_threshold: usize,
    /// Weight of the alignment loss in the joint objective.
    pub contrastive_weight: f64,
    /// L2 penalty weight over weights and embeddings.
    pub l2_weight: f64,
    /// Margin for the triplet objective.
    pub margin: f64,
    pub contrastive: ContrastiveKind,
    pub rnn_cell: RnnKind,
    pub attention: AttentionKind,
    /// When false, the short-interest query is a static per-user vector
    /// instead of a recurrent state over the prefix.
    pub evolution: bool,
    /// When false, the fusion gate sees no recurrent sequence summary.
    pub fusion_gru: bool,
    /// History prefixes are truncated to this many most recent items.
    pub max_seq_len: usize,
    /// Hidden widths of the prediction network.
    pub pred_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 40,
            recent_window: 3,
            proxy_threshold: 5,
            contrastive_weight: 0.1,
            l2_weight: 1e-6,
            margin: 1.0,
            contrastive: ContrastiveKind::Triplet,
            rnn_cell: RnnKind::TimeLstm,
            attention: AttentionKind::Mlp,
            evolution: true,
            fusion_gru: true,
            max_seq_len: 50,
            pred_hidden: vec![100, 64],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.embed_dim == 0 {
            return Err(ConfigError::Invalid("embed_dim must be positive".into()));
        }
        if self.recent_window == 0 {
            return Err(ConfigError::Invalid("recent_window must be ≥ 1".into()));
        }
        if self.proxy_threshold < self.recent_window {
            return Err(ConfigError::Invalid(format!(
                "proxy_threshold ({}) must be ≥ recent_window ({})",
                self.proxy_threshold, self.recent_window
            )));
        }
        if self.contrastive_weight < 0.0 {
            return Err(ConfigError::Invalid(
                "contrastive_weight must be ≥ 0".into(),
            ));
        }
        if self.l2_weight < 0.0 {
            return Err(ConfigError::Invalid("l2_weight must be ≥ 0".into()));
        }
        if self.margin <= 0.0 {
            return Err(ConfigError::Invalid("margin must be > 0".into()));
        }
        if self.max_seq_len == 0 {
            return Err(ConfigError::Invalid("max_seq_len must be ≥ 1".into()));
        }
        Ok(())
    }
}
