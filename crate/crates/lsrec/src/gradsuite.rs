//! Finite-difference verification of every differentiable component:
//! each layer in isolation and the full joint objective. Each case
//! rebuilds its graph from a [`ParamStore`] so central differences can
//! perturb one scalar at a time; see [`crate::autodiff::gradcheck`].

use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::gradcheck::{self, CheckReport};
use crate::autodiff::{Bound, Graph, NodeId, ParamStore, Tensor};
use crate::model::{losses, ContrastiveKind, Model, ModelConfig};
use crate::nn::{AttentionKind, AttentionScorer, Mlp, RnnCell, RnnKind, StepTiming};
use crate::seeding;

/// Aggregate outcome of one named case across all requested seeds.
#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub seeds: usize,
    pub checked: usize,
    /// Entries that needed a finer probe step near a hinge.
    pub refined: usize,
    pub worst_rel: f64,
    pub passed: bool,
}

struct Case {
    store: ParamStore,
    build: Box<dyn Fn(&ParamStore) -> (Graph, Bound, NodeId)>,
}

fn run_case(
    name: &'static str,
    seeds: &[u64],
    epsilon: f64,
    tolerance: f64,
    limit: Option<usize>,
    make: &dyn Fn(u64) -> Case,
) -> SuiteCheck {
    let mut worst_rel = 0.0f64;
    let mut checked = 0;
    let mut refined = 0;
    let mut passed = true;
    for &seed in seeds {
        let Case { mut store, build } = make(seed);
        let analytic: HashMap<String, Tensor> = {
            let (mut g, bound, root) = build(&store);
            let grads = g.backward(root).expect("scalar root");
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
            let (g, _, root) = build(s);
            g.value(root).item()
        };
        let report: CheckReport =
            gradcheck::check_all(&mut store, &analytic, epsilon, tolerance, limit, &mut f);
        worst_rel = worst_rel.max(report.worst_rel_err());
        checked += report.checked;
        refined += report.refined;
        passed &= report.passed();
    }
    SuiteCheck {
        name,
        seeds: seeds.len(),
        checked,
        refined,
        worst_rel,
        passed,
    }
}

fn rand_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn timings(rng: &mut impl Rng, n: usize) -> Vec<StepTiming> {
    (0..n)
        .map(|_| StepTiming {
            since_prev: rng.random_range(0.1..1.5),
            until_target: rng.random_range(0.1..1.5),
        })
        .collect()
}

const D: usize = 5;
const STEPS: usize = 4;
const BATCH: usize = 4;

fn mlp_batchnorm_eval(seed: u64) -> Case {
    let mut rng = seeding::stream(seed, "gradsuite/mlp");
    let mut store = ParamStore::new();
    let net = Mlp::new(&mut store, &mut rng, "mlp", D, &[6, 4], 1, true);
    // Nontrivial running statistics so the eval path is exercised.
    let stat_names: Vec<String> = store
        .entries()
        .iter()
        .filter(|e| !e.trainable && e.name.contains("running_"))
        .map(|e| e.name.clone())
        .collect();
    for name in stat_names {
        let is_var = name.ends_with("running_var");
        for v in store.get_mut(&name).data_mut() {
            *v = if is_var {
                rng.random_range(0.5..1.5)
            } else {
                rng.random_range(-0.3..0.3)
            };
        }
    }
    let x = Tensor::matrix(BATCH, D, rand_vec(&mut rng, BATCH * D, -1.0, 1.0));
    Case {
        store,
        build: Box::new(move |s| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let input = g.input(x.clone());
            let (out, _) = net.forward(&mut g, &bound, input, false).unwrap();
            let root = g.sum_sq(out);
            (g, bound, root)
        }),
    }
}

fn rnn_case(seed: u64, label: &'static str, kind: RnnKind) -> Case {
    let mut rng = seeding::stream(seed, label);
    let mut store = ParamStore::new();
    let cell = RnnCell::new(&mut store, &mut rng, "cell", D, 4, kind);
    let xs: Vec<Tensor> = (0..STEPS)
        .map(|_| Tensor::vector(rand_vec(&mut rng, D, -1.0, 1.0)))
        .collect();
    let ts = timings(&mut rng, STEPS);
    Case {
        store,
        build: Box::new(move |s| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let inputs: Vec<NodeId> = xs.iter().map(|x| g.input(x.clone())).collect();
            let outs = cell.run(&mut g, &bound, &inputs, &ts).unwrap();
            let stacked = g.stack_rows(&outs).unwrap();
            let root = g.sum_sq(stacked);
            (g, bound, root)
        }),
    }
}

fn attention_case(seed: u64, label: &'static str, kind: AttentionKind) -> Case {
    let mut rng = seeding::stream(seed, label);
    let mut store = ParamStore::new();
    let scorer = AttentionScorer::new(&mut store, &mut rng, "att", D, kind);
    store.insert(
        "keys",
        Tensor::matrix(3, D, rand_vec(&mut rng, 3 * D, -1.0, 1.0)),
        true,
        false,
    );
    store.insert(
        "query",
        Tensor::vector(rand_vec(&mut rng, D, -1.0, 1.0)),
        true,
        false,
    );
    let c = Tensor::vector(rand_vec(&mut rng, 3, -1.0, 1.0));
    Case {
        store,
        build: Box::new(move |s| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let w = scorer
                .weights(&mut g, &bound, bound.id("keys"), bound.id("query"))
                .unwrap();
            let cv = g.input(c.clone());
            let root = g.dot(w, cv).unwrap();
            (g, bound, root)
        }),
    }
}

fn contrastive_case(seed: u64, label: &'static str, kind: ContrastiveKind) -> Case {
    let mut rng = seeding::stream(seed, label);
    let mut store = ParamStore::new();
    // Entries stay small so the triplet hinge is strictly active:
    // distances stay below the unit margin.
    for name in ["u_long", "u_short", "p_long", "p_short"] {
        store.insert(
            name,
            Tensor::vector(rand_vec(&mut rng, D, -0.2, 0.2)),
            true,
            false,
        );
    }
    Case {
        store,
        build: Box::new(move |s| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let root = losses::contrastive_total(
                &mut g,
                kind,
                1.0,
                bound.id("u_long"),
                bound.id("u_short"),
                bound.id("p_long"),
                bound.id("p_short"),
            )
            .unwrap();
            (g, bound, root)
        }),
    }
}

fn fusion_case(seed: u64) -> Case {
    let mut rng = seeding::stream(seed, "gradsuite/fusion");
    let mut store = ParamStore::new();
    let net = Mlp::new(&mut store, &mut rng, "fuse", 4 * D, &[D], 1, false);
    for name in ["h", "target", "u_long", "u_short"] {
        store.insert(
            name,
            Tensor::vector(rand_vec(&mut rng, D, -1.0, 1.0)),
            true,
            false,
        );
    }
    let c = Tensor::vector(rand_vec(&mut rng, D, -1.0, 1.0));
    Case {
        store,
        build: Box::new(move |s| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let feat = g
                .concat(&[
                    bound.id("h"),
                    bound.id("target"),
                    bound.id("u_long"),
                    bound.id("u_short"),
                ])
                .unwrap();
            let (logit, _) = net.forward(&mut g, &bound, feat, false).unwrap();
            let scalar = g.reshape(logit, &[]).unwrap();
            let alpha = g.sigmoid(scalar);
            let weighted_long = g.mul(alpha, bound.id("u_long")).unwrap();
            let complement = g.affine_const(alpha, -1.0, 1.0);
            let weighted_short = g.mul(complement, bound.id("u_short")).unwrap();
            let fused = g.add(weighted_long, weighted_short).unwrap();
            let cv = g.input(c.clone());
            let root = g.dot(fused, cv).unwrap();
            (g, bound, root)
        }),
    }
}

fn prediction_case(seed: u64) -> Case {
    let mut rng = seeding::stream(seed, "gradsuite/pred");
    let mut store = ParamStore::new();
    let net = Mlp::new(&mut store, &mut rng, "pred", 2 * D, &[6, 4], 1, true);
    let x = Tensor::matrix(BATCH, 2 * D, rand_vec(&mut rng, BATCH * 2 * D, -1.0, 1.0));
    Case {
        store,
        build: Box::new(move |s| {
            let mut g = Graph::new();
            let bound = s.bind(&mut g);
            let input = g.input(x.clone());
            let (out, _) = net.forward(&mut g, &bound, input, true).unwrap();
            let flat = g.reshape(out, &[BATCH]).unwrap();
            let probs = g.sigmoid(flat);
            let root = losses::nll_one_positive(&mut g, probs).unwrap();
            (g, bound, root)
        }),
    }
}

fn joint_case(seed: u64) -> Case {
    let config = ModelConfig {
        embed_dim: 4,
        pred_hidden: vec![6, 5],
        contrastive: ContrastiveKind::Bpr,
        attention: AttentionKind::Mlp,
        rnn_cell: RnnKind::TimeLstm,
        ..ModelConfig::default()
    };
    let model = Model::new(&config, 3, 12, seed).unwrap();
    let mut rng = seeding::stream(seed, "gradsuite/joint");
    let t_long = timings(&mut rng, 8);
    let t_short = timings(&mut rng, 3);
    let store = model.store.clone();
    Case {
        store,
        build: Box::new(move |s| {
            let mut probe = model.clone();
            probe.store = s.clone();
            let batch = [
                crate::model::ExampleView {
                    user: 0,
                    prefix: &[0, 1, 2, 3, 4, 5, 6, 7],
                    timings: &t_long,
                    candidates: &[8, 9, 11],
                },
                crate::model::ExampleView {
                    user: 1,
                    prefix: &[8, 9, 10],
                    timings: &t_short,
                    candidates: &[0, 5, 7],
                },
            ];
            let (g, bound, joint, _) = probe.joint_loss_graph(&batch).unwrap();
            (g, bound, joint)
        }),
    }
}

/// Run every case over the given seeds. `tolerance` bounds the worst
/// relative error between analytic and central-difference gradients.
pub fn run_full_suite(seeds: &[u64], epsilon: f64, tolerance: f64) -> Vec<SuiteCheck> {
    let layer_limit = Some(10);
    let mut out = Vec::new();
    out.push(run_case(
        "mlp_batchnorm_eval",
        seeds,
        epsilon,
        tolerance,
        layer_limit,
        &mlp_batchnorm_eval,
    ));
    out.push(run_case("gru", seeds, epsilon, tolerance, layer_limit, &|s| {
        rnn_case(s, "gradsuite/gru", RnnKind::Gru)
    }));
    out.push(run_case("lstm", seeds, epsilon, tolerance, layer_limit, &|s| {
        rnn_case(s, "gradsuite/lstm", RnnKind::Lstm)
    }));
    out.push(run_case(
        "time_lstm",
        seeds,
        epsilon,
        tolerance,
        layer_limit,
        &|s| rnn_case(s, "gradsuite/time_lstm", RnnKind::TimeLstm),
    ));
    out.push(run_case(
        "attention_mlp",
        seeds,
        epsilon,
        tolerance,
        layer_limit,
        &|s| attention_case(s, "gradsuite/att_mlp", AttentionKind::Mlp),
    ));
    out.push(run_case(
        "attention_inner_product",
        seeds,
        epsilon,
        tolerance,
        layer_limit,
        &|s| attention_case(s, "gradsuite/att_ip", AttentionKind::InnerProduct),
    ));
    out.push(run_case(
        "contrastive_bpr",
        seeds,
        epsilon,
        tolerance,
        None,
        &|s| contrastive_case(s, "gradsuite/con_bpr", ContrastiveKind::Bpr),
    ));
    out.push(run_case(
        "contrastive_triplet",
        seeds,
        epsilon,
        tolerance,
        None,
        &|s| contrastive_case(s, "gradsuite/con_triplet", ContrastiveKind::Triplet),
    ));
    out.push(run_case(
        "fusion",
        seeds,
        epsilon,
        tolerance,
        layer_limit,
        &fusion_case,
    ));
    out.push(run_case(
        "prediction",
        seeds,
        epsilon,
        tolerance,
        layer_limit,
        &prediction_case,
    ));
    out.push(run_case(
        "joint_loss",
        seeds,
        epsilon,
        tolerance,
        Some(4),
        &joint_case,
    ));
    out
}
