//! Fully connected layer.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bound, Graph, GraphError, NodeId, ParamStore};

use super::init;

/// `y = x W + b` with `W: [in, out]`, `b: [out]`. Accepts a vector
/// `[in]` or a batch `[B, in]`.
#[derive(Debug, Clone)]
pub struct Affine {
    prefix: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        store.insert(
            &format!("{prefix}.w"),
            init::glorot_uniform(rng, in_dim, out_dim),
            true,
            true,
        );
        store.insert(
            &format!("{prefix}.b"),
            init::zeros_vector(out_dim),
            true,
            false,
        );
        Affine {
            prefix: prefix.to_string(),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: NodeId,
    ) -> Result<NodeId, GraphError> {
        let w = bound.id(&format!("{}.w", self.prefix));
        let b = bound.id(&format!("{}.b", self.prefix));
        let h = g.matmul(x, w)?;
        match g.value(h).rank() {
            1 => g.add(h, b),
            2 => g.add_row(h, b),
            _ => unreachable!("matmul output rank"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradcheck, Tensor};
    use crate::seeding;
    use std::collections::HashMap;

    #[test]
    fn forward_matches_hand_computation() {
        let mut store = ParamStore::new();
        let mut rng = seeding::stream(1, "affine");
        let layer = Affine::new(&mut store, &mut rng, "fc", 2, 2);
        *store.get_mut("fc.w") = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        *store.get_mut("fc.b") = Tensor::vector(vec![0.5, -0.5]);

        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let x = g.input(Tensor::vector(vec![1.0, 1.0]));
        let y = layer.forward(&mut g, &bound, x).unwrap();
        assert_eq!(g.value(y).data(), &[4.5, 5.5]);

        let xb = g.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let yb = layer.forward(&mut g, &bound, xb).unwrap();
        assert_eq!(g.value(yb).data(), &[1.5, 1.5, 3.5, 3.5]);
    }

    #[test]
    fn gradients_verify_by_central_differences() {
        let mut store = ParamStore::new();
        let mut rng = seeding::stream(2, "affine-fd");
        let layer = Affine::new(&mut store, &mut rng, "fc", 3, 2);
        let x_val = Tensor::matrix(2, 3, vec![0.3, -0.7, 1.1, 0.9, 0.2, -0.4]);

        let build = |s: &ParamStore| -> (Graph, Bound, NodeId) {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let x = g.input(x_val.clone());
            let y = layer.forward(&mut g, &bound, x).unwrap();
            let t = g.tanh(y);
            let l = g.sum_sq(t);
            (g, bound, l)
        };

        let analytic: HashMap<String, Tensor> = {
            let (mut g, bound, l) = build(&store);
            let grads = g.backward(l).unwrap();
            store
                .trainable_names()
                .into_iter()
                .map(|n| {
                    let t = grads.grad_or_zeros(bound.id(&n), store.get(&n).shape());
                    (n, t)
                })
                .collect()
        };
        let mut f = |s: &ParamStore| {
            let (g, _, l) = build(s);
            g.value(l).item()
        };
        let report = gradcheck::check_all(
            &mut store,
            &analytic,
            gradcheck::DEFAULT_EPSILON,
            1e-4,
            None,
            &mut f,
        );
        assert!(report.passed(), "worst: {:?}", report.worst);
    }
}
