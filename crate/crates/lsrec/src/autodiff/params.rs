//! Named parameter storage and the Adam update rule.

use std::collections::HashMap;

use super::graph::{Gradients, Graph, NodeId};
use super::tensor::Tensor;

/// Name-to-node mapping produced by binding a store into a graph.
pub struct Bound {
    ids: HashMap<String, NodeId>,
}

impl Bound {
    pub fn id(&self, name: &str) -> NodeId {
        match self.ids.get(name) {
            Some(id) => *id,
            None => panic!("unbound parameter: {name}"),
        }
    }
}

/// One named tensor. `trainable` controls whether it binds as a graph
/// param and receives optimizer updates; `weight_decay` marks it for
/// inclusion in the L2 penalty (weights yes, biases and norm stats no).
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
    pub weight_decay: bool,
}

/// Insertion-ordered collection of named tensors. Iteration order is
/// deterministic, which keeps updates and serialization reproducible.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor under a unique name.
    pub fn insert(&mut self, name: &str, tensor: Tensor, trainable: bool, weight_decay: bool) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name: {name}"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            trainable,
            weight_decay,
        });
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = self.index[name];
        &self.entries[i].tensor
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.index[name];
        &mut self.entries[i].tensor
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Names of trainable entries, in insertion order.
    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.name.clone())
            .collect()
    }

    /// Total number of scalars across trainable entries.
    pub fn trainable_numel(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.numel())
            .sum()
    }

    /// Bind every entry into a graph: trainable entries as params,
    /// the rest as inputs. Returns the name-to-node mapping.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let mut ids = HashMap::new();
        for e in &self.entries {
            let id = if e.trainable {
                g.param(e.tensor.clone())
            } else {
                g.input(e.tensor.clone())
            };
            ids.insert(e.name.clone(), id);
        }
        Bound { ids }
    }

    /// Gradients for every trainable entry, in insertion order, with
    /// exact zeros where the loss did not touch the parameter.
    pub fn collect_grads(&self, bound: &Bound, grads: &Gradients) -> Vec<Tensor> {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| grads.grad_or_zeros(bound.id(&e.name), e.tensor.shape()))
            .collect()
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, aligned with the trainable
/// entries of the store they were created for.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store
            .entries()
            .iter()
            .filter(|e| e.trainable)
            .map(|e| Tensor::zeros_like(&e.tensor))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update over all trainable entries. `grads`
    /// must align with the store's trainable entries (see
    /// [`ParamStore::collect_grads`]). Every slot is updated densely;
    /// a zero gradient from a fresh state leaves the value unchanged.
    pub fn apply(&mut self, store: &mut ParamStore, cfg: &AdamConfig, grads: &[Tensor]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let mut slot = 0;
        for e in store.entries.iter_mut() {
            if !e.trainable {
                continue;
            }
            let g = &grads[slot];
            assert_eq!(g.shape(), e.tensor.shape(), "gradient shape mismatch");
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
                let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                e.tensor.data_mut()[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
            slot += 1;
        }
        assert_eq!(slot, grads.len(), "gradient count mismatch");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(v), true, true);
        s
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let mut store = one_param_store(0.0);
        let mut state = AdamState::new(&store);
        let cfg = AdamConfig::with_lr(0.1);
        state.apply(&mut store, &cfg, &[Tensor::scalar(1.0)]);
        let got = store.get("w").item();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((got - want).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut store = one_param_store(0.7);
        let mut state = AdamState::new(&store);
        let cfg = AdamConfig::with_lr(0.1);
        state.apply(&mut store, &cfg, &[Tensor::scalar(0.0)]);
        assert_eq!(store.get("w").item(), 0.7);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn updates_are_dense_over_embedding_rows() {
        let mut store = ParamStore::new();
        store.insert("emb", Tensor::matrix(2, 2, vec![1.0; 4]), true, true);
        let mut state = AdamState::new(&store);
        // Touch one row, then feed the opposite row a nonzero gradient:
        // the stale momentum must keep moving the untouched row.
        let cfg = AdamConfig::with_lr(0.01);
        state.apply(
            &mut store,
            &cfg,
            &[Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 0.0])],
        );
        let after_first = store.get("emb").data().to_vec();
        assert!(after_first[0] < 1.0 && after_first[2] == 1.0);
        state.apply(
            &mut store,
            &cfg,
            &[Tensor::matrix(2, 2, vec![0.0, 0.0, 1.0, 1.0])],
        );
        let after_second = store.get("emb").data().to_vec();
        // Row 0 got zero gradient but still moves on its momentum.
        assert!(after_second[0] < after_first[0]);
    }

    #[test]
    fn collect_grads_aligns_and_zero_fills() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(2.0), true, false);
        store.insert("stat", Tensor::scalar(0.0), false, false);
        store.insert("b", Tensor::vector(vec![1.0, 1.0]), true, false);
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let a = bound.id("a");
        let y = g.mul(a, a).unwrap();
        let grads = g.backward(y).unwrap();
        let collected = store.collect_grads(&bound, &grads);
        assert_eq!(collected.len(), 2);
        assert_eq!(collected[0].item(), 4.0);
        assert_eq!(collected[1].data(), &[0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_name_panics() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(0.0), true, false);
        s.insert("w", Tensor::scalar(1.0), true, false);
    }
}
