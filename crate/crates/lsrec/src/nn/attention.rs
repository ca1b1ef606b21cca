//! Query-conditioned attention over a sequence of value vectors.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, GraphError, NodeId, ParamStore};

use super::mlp::Mlp;

/// Scoring family for attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// One-hidden-layer ReLU network over `[v, q, v-q, v*q]`.
    Mlp,
    /// Plain inner product `<v, q>`.
    InnerProduct,
}

impl AttentionKind {
    pub fn parse(s: &str) -> Option<AttentionKind> {
        match s {
            "mlp" => Some(AttentionKind::Mlp),
            "inner_product" => Some(AttentionKind::InnerProduct),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AttentionKind::Mlp => "mlp",
            AttentionKind::InnerProduct => "inner_product",
        }
    }
}

/// Produces one logit per key row for a given query.
#[derive(Debug, Clone)]
pub struct AttentionScorer {
    kind: AttentionKind,
    net: Option<Mlp>,
    pub dim: usize,
}

impl AttentionScorer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dim: usize,
        kind: AttentionKind,
    ) -> Self {
        let net = match kind {
            AttentionKind::Mlp => Some(Mlp::new(
                store,
                rng,
                prefix,
                4 * dim,
                &[dim],
                1,
                false,
            )),
            AttentionKind::InnerProduct => None,
        };
        AttentionScorer {
            kind,
            net,
            dim,
        }
    }

    pub fn kind(&self) -> AttentionKind {
        self.kind
    }

    /// Raw logits `[n]` for keys `[n, d]` against query `[d]`.
    pub fn scores(
        &self,
        g: &mut Graph,
        bound: &Bound,
        keys: NodeId,
        query: NodeId,
    ) -> Result<NodeId, GraphError> {
        let kt = g.value(keys);
        let qt = g.value(query);
        if kt.rank() != 2 || qt.rank() != 1 || kt.cols() != qt.shape()[0] {
            return Err(GraphError::ShapeMismatch {
                op: "attention_scores",
                lhs: kt.shape().to_vec(),
                rhs: qt.shape().to_vec(),
            });
        }
        match self.kind {
            AttentionKind::InnerProduct => g.matmul(keys, query),
            AttentionKind::Mlp => {
                let n = g.value(keys).rows();
                let tiled = g.stack_rows(&vec![query; n])?;
                let neg_tiled = g.affine_const(tiled, -1.0, 0.0);
                let diff = g.add(keys, neg_tiled)?;
                let prod = g.mul(keys, tiled)?;
                let feats = g.hstack(&[keys, tiled, diff, prod])?;
                let (out, _) = self
                    .net
                    .as_ref()
                    .expect("mlp scorer has a network")
                    .forward(g, bound, feats, false)?;
                g.reshape(out, &[n])
            }
        }
    }

    /// Softmax weights `[n]` over the logits.
    pub fn weights(
        &self,
        g: &mut Graph,
        bound: &Bound,
        keys: NodeId,
        query: NodeId,
    ) -> Result<NodeId, GraphError> {
        let logits = self.scores(g, bound, keys, query)?;
        g.softmax(logits)
    }
}
