//! Multi-layer perceptron with optional per-feature batch normalization.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bound, Graph, GraphError, NodeId, ParamStore, Tensor};

use super::init;
use super::linear::Affine;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.99;

/// A deferred write of a batch-norm running statistic; the trainer
/// applies these to the store after the optimizer step.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub name: String,
    pub value: Tensor,
}

/// Apply deferred statistic writes.
pub fn commit_stats(store: &mut ParamStore, updates: &[StatUpdate]) {
    for u in updates {
        *store.get_mut(&u.name) = u.value.clone();
    }
}

/// Batch normalization over the feature axis of a `[B, n]` batch.
///
/// Train mode normalizes by in-graph batch statistics (biased
/// variance) and emits momentum updates for the running statistics;
/// eval mode is a pure function of the input and the stored running
/// statistics.
#[derive(Debug, Clone)]
struct BatchNorm {
    prefix: String,
    dim: usize,
}

impl BatchNorm {
    fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        store.insert(&format!("{prefix}.gamma"), init::ones_vector(dim), true, false);
        store.insert(&format!("{prefix}.beta"), init::zeros_vector(dim), true, false);
        store.insert(
            &format!("{prefix}.running_mean"),
            init::zeros_vector(dim),
            false,
            false,
        );
        store.insert(
            &format!("{prefix}.running_var"),
            init::ones_vector(dim),
            false,
            false,
        );
        BatchNorm {
            prefix: prefix.to_string(),
            dim,
        }
    }

    fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: NodeId,
        train: bool,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<NodeId, GraphError> {
        let t = g.value(x);
        if t.rank() != 2 || t.cols() != self.dim {
            return Err(GraphError::ShapeMismatch {
                op: "batch_norm",
                lhs: t.shape().to_vec(),
                rhs: vec![0, self.dim],
            });
        }
        let gamma = bound.id(&format!("{}.gamma", self.prefix));
        let beta = bound.id(&format!("{}.beta", self.prefix));
        let (centered, inv_std) = if train {
            if t.rows() < 2 {
                return Err(GraphError::InvalidArgument {
                    op: "batch_norm",
                    msg: format!(
                        "train mode needs a batch of at least 2 rows, got {}",
                        t.rows()
                    ),
                });
            }
            let mu = g.mean_rows(x)?;
            let neg_mu = g.affine_const(mu, -1.0, 0.0);
            let centered = g.add_row(x, neg_mu)?;
            let sq = g.mul(centered, centered)?;
            let var = g.mean_rows(sq)?;
            let inv_std = g.inv_sqrt_shift(var, BN_EPS);
            let blend = |old: &Tensor, new: &Tensor| -> Tensor {
                let data = old
                    .data()
                    .iter()
                    .zip(new.data())
                    .map(|(o, n)| BN_MOMENTUM * o + (1.0 - BN_MOMENTUM) * n)
                    .collect();
                Tensor::vector(data)
            };
            let mean_name = format!("{}.running_mean", self.prefix);
            let var_name = format!("{}.running_var", self.prefix);
            let old_mean = g.value(bound.id(&mean_name)).clone();
            let old_var = g.value(bound.id(&var_name)).clone();
            updates.push(StatUpdate {
                name: mean_name,
                value: blend(&old_mean, g.value(mu)),
            });
            updates.push(StatUpdate {
                name: var_name,
                value: blend(&old_var, g.value(var)),
            });
            (centered, inv_std)
        } else {
            let mu = bound.id(&format!("{}.running_mean", self.prefix));
            let var = bound.id(&format!("{}.running_var", self.prefix));
            let neg_mu = g.affine_const(mu, -1.0, 0.0);
            let centered = g.add_row(x, neg_mu)?;
            let inv_std = g.inv_sqrt_shift(var, BN_EPS);
            (centered, inv_std)
        };
        let xhat = g.mul_row(centered, inv_std)?;
        let scaled = g.mul_row(xhat, gamma)?;
        g.add_row(scaled, beta)
    }
}

/// Hidden layers run affine, then batch-norm when enabled, then ReLU;
/// the final layer is affine only.
#[derive(Debug, Clone)]
pub struct Mlp {
    hidden: Vec<Affine>,
    norms: Vec<Option<BatchNorm>>,
    out: Affine,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden_dims: &[usize],
        out_dim: usize,
        batch_norm: bool,
    ) -> Self {
        let mut hidden = Vec::new();
        let mut norms = Vec::new();
        let mut cur = in_dim;
        for (i, &h) in hidden_dims.iter().enumerate() {
            hidden.push(Affine::new(
                store,
                rng,
                &format!("{prefix}.h{i}"),
                cur,
                h,
            ));
            norms.push(if batch_norm {
                Some(BatchNorm::new(store, &format!("{prefix}.bn{i}"), h))
            } else {
                None
            });
            cur = h;
        }
        let out = Affine::new(store, rng, &format!("{prefix}.out"), cur, out_dim);
        Mlp {
            hidden,
            norms,
            out,
            in_dim,
            out_dim,
        }
    }

    /// Whether any layer carries batch-norm state.
    pub fn has_batch_norm(&self) -> bool {
        self.norms.iter().any(|n| n.is_some())
    }

    /// Forward a vector `[in]` or batch `[B, in]`. Batch-norm layers
    /// require rank 2. Returns the output plus any deferred running
    /// statistic updates (train mode only; empty otherwise).
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: NodeId,
        train: bool,
    ) -> Result<(NodeId, Vec<StatUpdate>), GraphError> {
        let mut updates = Vec::new();
        let mut cur = x;
        for (layer, norm) in self.hidden.iter().zip(&self.norms) {
            cur = layer.forward(g, bound, cur)?;
            if let Some(bn) = norm {
                cur = bn.forward(g, bound, cur, train, &mut updates)?;
            }
            cur = g.relu(cur);
        }
        let out = self.out.forward(g, bound, cur)?;
        Ok((out, updates))
    }
}
