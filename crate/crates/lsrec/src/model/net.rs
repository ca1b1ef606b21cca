//! The two-encoder interest model.
//!
//! One encoder pools raw item embeddings with query-conditioned
//! attention to capture stable preferences; the other runs a recurrent
//! cell over the prefix and pools its outputs to capture the current
//! session. First-principles proxies (history mean, recent-k mean)
//! anchor each encoder through pairwise alignment losses, a gated
//! fusion mixes the two interests per candidate item, and a batch-norm
//! MLP scores the interaction.

use thiserror::Error;

use crate::autodiff::{AdamConfig, AdamState, Bound, Graph, GraphError, NodeId, ParamStore};
use crate::nn::{
    commit_stats, init, AttentionScorer, Mlp, RnnCell, RnnKind, StatUpdate, StepTiming,
};
use crate::seeding;

use super::config::{ConfigError, ModelConfig};
use super::losses;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown user id {0}")]
    UnknownUser(usize),
    #[error("unknown item id {0}")]
    UnknownItem(usize),
    #[error("history prefix must be nonempty")]
    EmptyPrefix,
    #[error("timing features misaligned: prefix {prefix} vs timings {timings}")]
    MisalignedTimings { prefix: usize, timings: usize },
    #[error("candidate set must be nonempty")]
    EmptyCandidates,
    #[error("batch must be nonempty")]
    EmptyBatch,
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
}

/// Borrowed view of one example: a user, their history prefix with
/// per-step interval features, and the candidate items to score. For
/// training the first candidate is the positive.
#[derive(Debug, Clone, Copy)]
pub struct ExampleView<'a> {
    pub user: usize,
    pub prefix: &'a [usize],
    pub timings: &'a [StepTiming],
    pub candidates: &'a [usize],
}

/// Forward values read out of one example's graph for analysis.
#[derive(Debug, Clone)]
pub struct InterestSnapshot {
    pub q_long: Vec<f64>,
    pub q_short: Vec<f64>,
    pub u_long: Vec<f64>,
    pub u_short: Vec<f64>,
    pub p_long: Option<Vec<f64>>,
    pub p_short: Option<Vec<f64>>,
    pub long_weights: Vec<f64>,
    pub short_weights: Vec<f64>,
}

/// Per-candidate outputs of an evaluation pass.
#[derive(Debug, Clone)]
pub struct ScoredCandidates {
    /// Interaction probability per candidate.
    pub scores: Vec<f64>,
    /// Fusion weight on the long-term interest per candidate. When an
    /// override was supplied this echoes the override.
    pub alphas: Vec<f64>,
}

/// Values observed during one optimizer step.
#[derive(Debug, Clone)]
pub struct TrainStats {
    pub joint: f64,
    pub rec_sum: f64,
    pub con_sum: f64,
    pub examples: usize,
    /// Examples whose prefix exceeded the alignment threshold.
    pub aligned_examples: usize,
}

struct Encoded {
    q_long: NodeId,
    q_short: NodeId,
    u_long: NodeId,
    u_short: NodeId,
    long_weights: NodeId,
    short_weights: NodeId,
    fusion_state: Option<NodeId>,
    proxies: Option<(NodeId, NodeId)>,
}

/// Parts of a joint-loss graph exposed for inspection and training.
pub struct JointParts {
    pub rec_sum: NodeId,
    pub con_sum: Option<NodeId>,
    pub stat_updates: Vec<StatUpdate>,
}

/// The model: hyperparameters, a parameter store holding every named
/// tensor, and shape metadata for each sub-network.
#[derive(Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub n_users: usize,
    pub n_items: usize,
    att_long: AttentionScorer,
    att_short: AttentionScorer,
    query_gru: Option<RnnCell>,
    short_rnn: RnnCell,
    fusion_gru: Option<RnnCell>,
    fuse_mlp: Mlp,
    pred_mlp: Mlp,
}

impl Model {
    /// Build a freshly initialized model. Every layer draws from its
    /// own labeled stream of `seed`, so shapes and seed fully determine
    /// the initial tensors.
    pub fn new(
        config: &ModelConfig,
        n_users: usize,
        n_items: usize,
        seed: u64,
    ) -> Result<Model, ModelError> {
        config.validate()?;
        assert!(n_users > 0 && n_items > 0, "empty id space");
        let d = config.embed_dim;
        let mut store = ParamStore::new();

        let mut r = seeding::stream(seed, "init/item_emb");
        store.insert(
            "item_emb",
            init::glorot_uniform(&mut r, n_items, d),
            true,
            true,
        );
        let mut r = seeding::stream(seed, "init/user_emb");
        store.insert(
            "user_emb",
            init::glorot_uniform(&mut r, n_users, d),
            true,
            true,
        );
        let mut r = seeding::stream(seed, "init/w_long");
        store.insert("w_long", init::glorot_uniform(&mut r, d, d), true, true);
        let mut r = seeding::stream(seed, "init/w_short");
        store.insert("w_short", init::glorot_uniform(&mut r, d, d), true, true);

        let mut r = seeding::stream(seed, "init/att_long");
        let att_long = AttentionScorer::new(&mut store, &mut r, "att_long", d, config.attention);
        let mut r = seeding::stream(seed, "init/att_short");
        let att_short = AttentionScorer::new(&mut store, &mut r, "att_short", d, config.attention);

        let query_gru = if config.evolution {
            let mut r = seeding::stream(seed, "init/query_gru");
            Some(RnnCell::new(
                &mut store,
                &mut r,
                "query_gru",
                d,
                d,
                RnnKind::Gru,
            ))
        } else {
            let mut r = seeding::stream(seed, "init/user_short_emb");
            store.insert(
                "user_short_emb",
                init::glorot_uniform(&mut r, n_users, d),
                true,
                true,
            );
            None
        };

        let mut r = seeding::stream(seed, "init/short_rnn");
        let short_rnn = RnnCell::new(&mut store, &mut r, "short_rnn", d, d, config.rnn_cell);

        let fusion_gru = if config.fusion_gru {
            let mut r = seeding::stream(seed, "init/fusion_gru");
            Some(RnnCell::new(
                &mut store,
                &mut r,
                "fusion_gru",
                d,
                d,
                RnnKind::Gru,
            ))
        } else {
            None
        };

        let fuse_in = if config.fusion_gru { 4 * d } else { 3 * d };
        let mut r = seeding::stream(seed, "init/fuse_mlp");
        let fuse_mlp = Mlp::new(&mut store, &mut r, "fuse_mlp", fuse_in, &[d], 1, false);

        let mut r = seeding::stream(seed, "init/pred_mlp");
        let pred_mlp = Mlp::new(
            &mut store,
            &mut r,
            "pred_mlp",
            2 * d,
            &config.pred_hidden,
            1,
            true,
        );

        Ok(Model {
            config: config.clone(),
            store,
            n_users,
            n_items,
            att_long,
            att_short,
            query_gru,
            short_rnn,
            fusion_gru,
            fuse_mlp,
            pred_mlp,
        })
    }

    fn validate_example(&self, ex: &ExampleView) -> Result<(), ModelError> {
        if ex.user >= self.n_users {
            return Err(ModelError::UnknownUser(ex.user));
        }
        if ex.prefix.is_empty() {
            return Err(ModelError::EmptyPrefix);
        }
        if ex.prefix.len() != ex.timings.len() {
            return Err(ModelError::MisalignedTimings {
                prefix: ex.prefix.len(),
                timings: ex.timings.len(),
            });
        }
        for &i in ex.prefix.iter().chain(ex.candidates.iter()) {
            if i >= self.n_items {
                return Err(ModelError::UnknownItem(i));
            }
        }
        Ok(())
    }

    /// Encoders and (optionally) proxies for one example. The prefix is
    /// used as given; truncation to `max_seq_len` is the data layer's
    /// contract.
    fn encode(
        &self,
        g: &mut Graph,
        bound: &Bound,
        ex: &ExampleView,
        with_proxies: bool,
    ) -> Result<Encoded, ModelError> {
        self.validate_example(ex)?;
        let t = ex.prefix.len();
        let emb = bound.id("item_emb");
        let prefix_emb = g.rows(emb, ex.prefix)?;
        let xs: Vec<NodeId> = (0..t)
            .map(|j| g.row(prefix_emb, j))
            .collect::<Result<_, _>>()?;
        let no_timing = vec![StepTiming::default(); t];

        let q_long = g.row(bound.id("user_emb"), ex.user)?;
        let q_short = match &self.query_gru {
            Some(cell) => *cell.run(g, bound, &xs, &no_timing)?.last().unwrap(),
            None => g.row(bound.id("user_short_emb"), ex.user)?,
        };

        let keys_long = g.matmul(prefix_emb, bound.id("w_long"))?;
        let long_weights = self.att_long.weights(g, bound, keys_long, q_long)?;
        let u_long = g.matmul(long_weights, prefix_emb)?;

        let outs = self.short_rnn.run(g, bound, &xs, ex.timings)?;
        let o_mat = g.stack_rows(&outs)?;
        let keys_short = g.matmul(o_mat, bound.id("w_short"))?;
        let short_weights = self.att_short.weights(g, bound, keys_short, q_short)?;
        let u_short = g.matmul(short_weights, o_mat)?;

        let fusion_state = match &self.fusion_gru {
            Some(cell) => Some(*cell.run(g, bound, &xs, &no_timing)?.last().unwrap()),
            None => None,
        };

        let proxies = if with_proxies && t > self.config.proxy_threshold {
            let p_long = g.mean_rows(prefix_emb)?;
            let k = self.config.recent_window;
            let recent: Vec<usize> = (t - k..t).collect();
            let recent_emb = g.rows(prefix_emb, &recent)?;
            let p_short = g.mean_rows(recent_emb)?;
            Some((p_long, p_short))
        } else {
            None
        };

        Ok(Encoded {
            q_long,
            q_short,
            u_long,
            u_short,
            long_weights,
            short_weights,
            fusion_state,
            proxies,
        })
    }

    /// Gate and mix the two interests for one candidate. Returns the
    /// fusion weight (scalar node) and the fused interest vector.
    fn fuse(
        &self,
        g: &mut Graph,
        bound: &Bound,
        enc: &Encoded,
        target_emb: NodeId,
        alpha_override: Option<f64>,
    ) -> Result<(NodeId, NodeId), GraphError> {
        let alpha = match alpha_override {
            Some(v) => g.scalar(v),
            None => {
                let mut parts = Vec::with_capacity(4);
                if let Some(h) = enc.fusion_state {
                    parts.push(h);
                }
                parts.extend_from_slice(&[target_emb, enc.u_long, enc.u_short]);
                let feat = g.concat(&parts)?;
                let (logit, _) = self.fuse_mlp.forward(g, bound, feat, false)?;
                let scalar = g.reshape(logit, &[])?;
                g.sigmoid(scalar)
            }
        };
        let weighted_long = g.mul(alpha, enc.u_long)?;
        let complement = g.affine_const(alpha, -1.0, 1.0);
        let weighted_short = g.mul(complement, enc.u_short)?;
        let fused = g.add(weighted_long, weighted_short)?;
        Ok((alpha, fused))
    }

    /// Score each candidate in eval mode (pure function of parameters).
    /// `alpha_override` forces the fusion weight: 1.0 keeps only the
    /// long-term interest, 0.0 only the short-term one.
    pub fn score_candidates(
        &self,
        ex: &ExampleView,
        alpha_override: Option<f64>,
    ) -> Result<ScoredCandidates, ModelError> {
        if ex.candidates.is_empty() {
            return Err(ModelError::EmptyCandidates);
        }
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);
        let enc = self.encode(&mut g, &bound, ex, false)?;
        let cand_emb = g.rows(bound.id("item_emb"), ex.candidates)?;
        let mut rows = Vec::with_capacity(ex.candidates.len());
        let mut alphas = Vec::with_capacity(ex.candidates.len());
        for c in 0..ex.candidates.len() {
            let e_tgt = g.row(cand_emb, c)?;
            let (alpha, fused) = self.fuse(&mut g, &bound, &enc, e_tgt, alpha_override)?;
            alphas.push(g.value(alpha).item());
            rows.push(g.concat(&[fused, e_tgt])?);
        }
        let feat = g.stack_rows(&rows)?;
        let (logits, _) = self.pred_mlp.forward(&mut g, &bound, feat, false)?;
        let flat = g.reshape(logits, &[ex.candidates.len()])?;
        let probs = g.sigmoid(flat);
        Ok(ScoredCandidates {
            scores: g.value(probs).data().to_vec(),
            alphas,
        })
    }

    /// Forward the encoders once and read out every analysis quantity.
    pub fn interest_snapshot(&self, ex: &ExampleView) -> Result<InterestSnapshot, ModelError> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);
        let enc = self.encode(&mut g, &bound, ex, true)?;
        let read = |id: NodeId| g.value(id).data().to_vec();
        Ok(InterestSnapshot {
            q_long: read(enc.q_long),
            q_short: read(enc.q_short),
            u_long: read(enc.u_long),
            u_short: read(enc.u_short),
            p_long: enc.proxies.map(|(p, _)| read(p)),
            p_short: enc.proxies.map(|(_, p)| read(p)),
            long_weights: read(enc.long_weights),
            short_weights: read(enc.short_weights),
        })
    }

    /// Build the full training objective for a batch:
    /// per-example recommendation loss plus the weighted alignment
    /// loss where proxies exist, summed over the batch, plus the L2
    /// penalty over weight-decay parameters. When the alignment weight
    /// is zero its entire subgraph (proxies included) is skipped, so
    /// the objective is bit-identical across alignment kinds.
    pub fn joint_loss_graph(
        &self,
        batch: &[ExampleView],
    ) -> Result<(Graph, Bound, NodeId, JointParts), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let beta = self.config.contrastive_weight;
        let use_alignment = beta > 0.0;
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);

        let mut rows = Vec::new();
        let mut spans = Vec::with_capacity(batch.len());
        let mut con_terms: Vec<Option<NodeId>> = Vec::with_capacity(batch.len());
        for ex in batch {
            if ex.candidates.is_empty() {
                return Err(ModelError::EmptyCandidates);
            }
            let enc = self.encode(&mut g, &bound, ex, use_alignment)?;
            let cand_emb = g.rows(bound.id("item_emb"), ex.candidates)?;
            let offset = rows.len();
            for c in 0..ex.candidates.len() {
                let e_tgt = g.row(cand_emb, c)?;
                let (_, fused) = self.fuse(&mut g, &bound, &enc, e_tgt, None)?;
                rows.push(g.concat(&[fused, e_tgt])?);
            }
            spans.push((offset, ex.candidates.len()));
            con_terms.push(match enc.proxies {
                Some((p_long, p_short)) => Some(losses::contrastive_total(
                    &mut g,
                    self.config.contrastive,
                    self.config.margin,
                    enc.u_long,
                    enc.u_short,
                    p_long,
                    p_short,
                )?),
                None => None,
            });
        }

        let feat = g.stack_rows(&rows)?;
        let (logits, stat_updates) = self.pred_mlp.forward(&mut g, &bound, feat, true)?;
        let flat = g.reshape(logits, &[rows.len()])?;
        let probs = g.sigmoid(flat);

        let mut rec_sum: Option<NodeId> = None;
        let mut con_sum: Option<NodeId> = None;
        let mut total: Option<NodeId> = None;
        for ((offset, len), con) in spans.iter().zip(&con_terms) {
            let ex_probs = g.slice(probs, *offset, *len)?;
            let rec = losses::nll_one_positive(&mut g, ex_probs)?;
            rec_sum = Some(match rec_sum {
                Some(s) => g.add(s, rec)?,
                None => rec,
            });
            let term = match con {
                Some(c) => {
                    con_sum = Some(match con_sum {
                        Some(s) => g.add(s, *c)?,
                        None => *c,
                    });
                    let scaled = g.affine_const(*c, beta, 0.0);
                    g.add(rec, scaled)?
                }
                None => rec,
            };
            total = Some(match total {
                Some(t) => g.add(t, term)?,
                None => term,
            });
        }
        let mut joint = total.expect("nonempty batch");

        if self.config.l2_weight > 0.0 {
            let mut penalty: Option<NodeId> = None;
            for e in self.store.entries() {
                if !(e.trainable && e.weight_decay) {
                    continue;
                }
                let sq = g.sum_sq(bound.id(&e.name));
                penalty = Some(match penalty {
                    Some(p) => g.add(p, sq)?,
                    None => sq,
                });
            }
            if let Some(p) = penalty {
                let scaled = g.affine_const(p, self.config.l2_weight, 0.0);
                joint = g.add(joint, scaled)?;
            }
        }

        Ok((
            g,
            bound,
            joint,
            JointParts {
                rec_sum: rec_sum.expect("nonempty batch"),
                con_sum,
                stat_updates,
            },
        ))
    }

    /// One optimizer step over a batch: forward, backward, Adam update,
    /// then commit batch-norm running statistics.
    pub fn train_batch(
        &mut self,
        batch: &[ExampleView],
        adam: &mut AdamState,
        adam_cfg: &AdamConfig,
    ) -> Result<TrainStats, ModelError> {
        let (mut g, bound, joint, parts) = self.joint_loss_graph(batch)?;
        let stats = TrainStats {
            joint: g.value(joint).item(),
            rec_sum: g.value(parts.rec_sum).item(),
            con_sum: parts.con_sum.map(|c| g.value(c).item()).unwrap_or(0.0),
            examples: batch.len(),
            aligned_examples: batch
                .iter()
                .filter(|ex| ex.prefix.len() > self.config.proxy_threshold)
                .count(),
        };
        if !stats.joint.is_finite() {
            return Err(ModelError::NonFinite {
                what: "joint loss",
                value: stats.joint,
            });
        }
        let grads = g.backward(joint)?;
        let collected = self.store.collect_grads(&bound, &grads);
        adam.apply(&mut self.store, adam_cfg, &collected);
        commit_stats(&mut self.store, &parts.stat_updates);
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradcheck, Tensor};
    use crate::model::config::ContrastiveKind;
    use crate::nn::AttentionKind;
    use std::collections::HashMap;

    fn tiny_config(d: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: d,
            pred_hidden: vec![10, 7],
            ..ModelConfig::default()
        }
    }

    fn zero_params_with_prefix(model: &mut Model, prefix: &str) {
        let names: Vec<String> = model
            .store
            .entries()
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| e.name.clone())
            .collect();
        for n in names {
            for v in model.store.get_mut(&n).data_mut() {
                *v = 0.0;
            }
        }
    }

    fn flat_timings(n: usize) -> Vec<StepTiming> {
        (0..n)
            .map(|j| StepTiming {
                since_prev: if j == 0 { 0.0 } else { 0.3 },
                until_target: 0.7,
            })
            .collect()
    }

    fn example<'a>(
        user: usize,
        prefix: &'a [usize],
        timings: &'a [StepTiming],
        candidates: &'a [usize],
    ) -> ExampleView<'a> {
        ExampleView {
            user,
            prefix,
            timings,
            candidates,
        }
    }

    #[test]
    fn single_item_prefix_long_interest_is_that_embedding() {
        let model = Model::new(&tiny_config(4), 3, 10, 42).unwrap();
        let prefix = [7usize];
        let timings = flat_timings(1);
        let snap = model
            .interest_snapshot(&example(1, &prefix, &timings, &[]))
            .unwrap();
        assert_eq!(snap.long_weights, vec![1.0]);
        assert_eq!(snap.u_long, model.store.get("item_emb").row(7).to_vec());
    }

    #[test]
    fn identical_history_items_collapse_long_interest() {
        let model = Model::new(&tiny_config(4), 3, 10, 43).unwrap();
        let prefix = [2usize; 6];
        let timings = flat_timings(6);
        let snap = model
            .interest_snapshot(&example(0, &prefix, &timings, &[]))
            .unwrap();
        let e = model.store.get("item_emb").row(2);
        for (a, b) in snap.u_long.iter().zip(e) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scorer_averages_embeddings() {
        let mut model = Model::new(&tiny_config(4), 3, 10, 44).unwrap();
        zero_params_with_prefix(&mut model, "att_long");
        let prefix = [1usize, 4, 8];
        let timings = flat_timings(3);
        let snap = model
            .interest_snapshot(&example(0, &prefix, &timings, &[]))
            .unwrap();
        let emb = model.store.get("item_emb");
        for j in 0..4 {
            let mean = (emb.row(1)[j] + emb.row(4)[j] + emb.row(8)[j]) / 3.0;
            assert!((snap.u_long[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn long_weights_form_convex_combination() {
        let model = Model::new(&tiny_config(6), 4, 20, 45).unwrap();
        for t in [1usize, 3, 9, 14] {
            let prefix: Vec<usize> = (0..t).map(|j| (j * 7) % 20).collect();
            let timings = flat_timings(t);
            let snap = model
                .interest_snapshot(&example(2, &prefix, &timings, &[]))
                .unwrap();
            assert!(snap.long_weights.iter().all(|w| *w >= 0.0));
            let sum: f64 = snap.long_weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn long_query_is_prefix_independent() {
        let model = Model::new(&tiny_config(4), 3, 10, 46).unwrap();
        let t1 = flat_timings(2);
        let t2 = flat_timings(5);
        let a = model
            .interest_snapshot(&example(1, &[0, 1], &t1, &[]))
            .unwrap();
        let b = model
            .interest_snapshot(&example(1, &[5, 6, 7, 8, 9], &t2, &[]))
            .unwrap();
        assert_eq!(a.q_long, b.q_long);
    }

    #[test]
    fn zero_query_gru_gives_zero_short_query() {
        let mut model = Model::new(&tiny_config(4), 3, 10, 47).unwrap();
        zero_params_with_prefix(&mut model, "query_gru");
        let timings = flat_timings(1);
        let snap = model
            .interest_snapshot(&example(0, &[3], &timings, &[]))
            .unwrap();
        assert_eq!(snap.q_short, vec![0.0; 4]);
    }

    #[test]
    fn static_short_query_when_evolution_disabled() {
        let cfg = ModelConfig {
            evolution: false,
            ..tiny_config(4)
        };
        let model = Model::new(&cfg, 3, 10, 48).unwrap();
        let t1 = flat_timings(2);
        let t2 = flat_timings(4);
        let a = model
            .interest_snapshot(&example(2, &[0, 1], &t1, &[]))
            .unwrap();
        let b = model
            .interest_snapshot(&example(2, &[9, 8, 7, 6], &t2, &[]))
            .unwrap();
        assert_eq!(a.q_short, b.q_short);
        assert_eq!(a.q_short, model.store.get("user_short_emb").row(2).to_vec());
    }

    #[test]
    fn single_step_short_interest_is_rnn_output() {
        let cfg = ModelConfig {
            rnn_cell: RnnKind::Gru,
            ..tiny_config(4)
        };
        let mut model = Model::new(&cfg, 3, 10, 49).unwrap();
        zero_params_with_prefix(&mut model, "short_rnn");
        let timings = flat_timings(1);
        let snap = model
            .interest_snapshot(&example(0, &[5], &timings, &[]))
            .unwrap();
        // Zero GRU from the zero state stays at zero, and with t=1 the
        // attention weight is 1, so u_short equals that output exactly.
        assert_eq!(snap.short_weights, vec![1.0]);
        assert_eq!(snap.u_short, vec![0.0; 4]);
    }

    #[test]
    fn proxies_absent_at_or_below_threshold() {
        let model = Model::new(&tiny_config(4), 3, 10, 50).unwrap();
        // proxy_threshold defaults to 5; t = 3 and t = 5 must have none.
        for t in [3usize, 5] {
            let prefix: Vec<usize> = (0..t).collect();
            let timings = flat_timings(t);
            let snap = model
                .interest_snapshot(&example(0, &prefix, &timings, &[]))
                .unwrap();
            assert!(snap.p_long.is_none() && snap.p_short.is_none());
        }
    }

    #[test]
    fn proxies_are_history_and_recent_means() {
        let cfg = ModelConfig {
            recent_window: 2,
            ..tiny_config(4)
        };
        let model = Model::new(&cfg, 3, 10, 51).unwrap();
        let prefix = [0usize, 1, 2, 3, 4, 5];
        let timings = flat_timings(6);
        let snap = model
            .interest_snapshot(&example(0, &prefix, &timings, &[]))
            .unwrap();
        let emb = model.store.get("item_emb");
        let p_long = snap.p_long.unwrap();
        let p_short = snap.p_short.unwrap();
        for j in 0..4 {
            let full: f64 = (0..6).map(|i| emb.row(i)[j]).sum::<f64>() / 6.0;
            let recent = (emb.row(4)[j] + emb.row(5)[j]) / 2.0;
            assert!((p_long[j] - full).abs() < 1e-12);
            assert!((p_short[j] - recent).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_items_make_both_proxies_equal() {
        let model = Model::new(&tiny_config(4), 3, 10, 52).unwrap();
        let prefix = [6usize; 8];
        let timings = flat_timings(8);
        let snap = model
            .interest_snapshot(&example(0, &prefix, &timings, &[]))
            .unwrap();
        let e = model.store.get("item_emb").row(6).to_vec();
        let p_long = snap.p_long.unwrap();
        let p_short = snap.p_short.unwrap();
        for j in 0..4 {
            assert!((p_long[j] - e[j]).abs() < 1e-12);
            assert!((p_short[j] - e[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn long_proxy_permutation_invariant_short_interest_not() {
        let model = Model::new(&tiny_config(4), 3, 12, 53).unwrap();
        let prefix = [0usize, 3, 5, 7, 9, 11, 2];
        let permuted = [2usize, 9, 0, 11, 5, 7, 3];
        let timings = flat_timings(7);
        let a = model
            .interest_snapshot(&example(0, &prefix, &timings, &[]))
            .unwrap();
        let b = model
            .interest_snapshot(&example(0, &permuted, &timings, &[]))
            .unwrap();
        let pa = a.p_long.unwrap();
        let pb = b.p_long.unwrap();
        for j in 0..4 {
            assert!((pa[j] - pb[j]).abs() < 1e-12, "p_long must ignore order");
        }
        let moved: f64 = a
            .u_short
            .iter()
            .zip(&b.u_short)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(moved > 1e-9, "u_short must be order-sensitive");
    }

    #[test]
    fn zero_gate_splits_fusion_in_half() {
        let mut model = Model::new(&tiny_config(4), 3, 10, 54).unwrap();
        zero_params_with_prefix(&mut model, "fuse_mlp");
        let timings = flat_timings(3);
        let scored = model
            .score_candidates(&example(0, &[1, 2, 3], &timings, &[4, 5]), None)
            .unwrap();
        for a in scored.alphas {
            assert_eq!(a, 0.5);
        }
    }

    #[test]
    fn saturated_gate_bias_pins_alpha_to_one() {
        let mut model = Model::new(&tiny_config(4), 3, 10, 55).unwrap();
        zero_params_with_prefix(&mut model, "fuse_mlp");
        for v in model.store.get_mut("fuse_mlp.out.b").data_mut() {
            *v = 50.0;
        }
        let timings = flat_timings(3);
        let scored = model
            .score_candidates(&example(0, &[1, 2, 3], &timings, &[4]), None)
            .unwrap();
        assert!((scored.alphas[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_is_exact_convex_combination() {
        let model = Model::new(&tiny_config(4), 3, 10, 56).unwrap();
        let timings = flat_timings(4);
        let ex = example(1, &[0, 2, 4, 6], &timings, &[8]);
        let mut g = Graph::new();
        let bound = model.store.bind(&mut g);
        let enc = model.encode(&mut g, &bound, &ex, false).unwrap();
        let cand_emb = g.rows(bound.id("item_emb"), ex.candidates).unwrap();
        let e_tgt = g.row(cand_emb, 0).unwrap();
        let (alpha, fused) = model.fuse(&mut g, &bound, &enc, e_tgt, None).unwrap();
        let a = g.value(alpha).item();
        assert!(a > 0.0 && a < 1.0, "gate must stay in the open interval");
        let ul = g.value(enc.u_long).data().to_vec();
        let us = g.value(enc.u_short).data().to_vec();
        let got = g.value(fused).data().to_vec();
        for j in 0..4 {
            // Recomputed in the same operation order as the graph.
            let want = a * ul[j] + (1.0 - a) * us[j];
            assert_eq!(got[j], want);
        }
    }

    #[test]
    fn alpha_override_echoes_and_selects_side() {
        let model = Model::new(&tiny_config(4), 3, 10, 57).unwrap();
        let timings = flat_timings(3);
        let ex = example(0, &[1, 2, 3], &timings, &[4, 5, 6]);
        let long_only = model.score_candidates(&ex, Some(1.0)).unwrap();
        let short_only = model.score_candidates(&ex, Some(0.0)).unwrap();
        assert_eq!(long_only.alphas, vec![1.0; 3]);
        assert_eq!(short_only.alphas, vec![0.0; 3]);
        let gap: f64 = long_only
            .scores
            .iter()
            .zip(&short_only.scores)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(gap > 0.0, "sides must score differently in general");
    }

    #[test]
    fn zero_final_layer_predicts_half() {
        let mut model = Model::new(&tiny_config(4), 3, 10, 58).unwrap();
        zero_params_with_prefix(&mut model, "pred_mlp.out");
        let timings = flat_timings(3);
        let scored = model
            .score_candidates(&example(0, &[1, 2, 3], &timings, &[4, 5]), None)
            .unwrap();
        assert_eq!(scored.scores, vec![0.5, 0.5]);
    }

    #[test]
    fn scores_stay_in_open_unit_interval() {
        let model = Model::new(&tiny_config(4), 3, 10, 59).unwrap();
        let timings = flat_timings(3);
        let scored = model
            .score_candidates(&example(0, &[1, 2, 3], &timings, &[0, 4, 9]), None)
            .unwrap();
        assert!(scored.scores.iter().all(|s| *s > 0.0 && *s < 1.0));
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let model = Model::new(&tiny_config(4), 3, 10, 60).unwrap();
        let timings = flat_timings(1);
        let err = model
            .score_candidates(&example(9, &[1], &timings, &[2]), None)
            .unwrap_err();
        assert!(matches!(err, ModelError::UnknownUser(9)));
        let err = model
            .score_candidates(&example(0, &[10], &timings, &[2]), None)
            .unwrap_err();
        assert!(matches!(err, ModelError::UnknownItem(10)));
        let err = model
            .score_candidates(&example(0, &[1], &timings, &[99]), None)
            .unwrap_err();
        assert!(matches!(err, ModelError::UnknownItem(99)));
    }

    #[test]
    fn short_prefix_joint_loss_reduces_to_rec_loss() {
        let cfg = ModelConfig {
            l2_weight: 0.0,
            ..tiny_config(4)
        };
        let mut model = Model::new(&cfg, 3, 10, 61).unwrap();
        // t = 2 <= proxy_threshold, lambda = 0: joint == rec exactly.
        let timings = flat_timings(2);
        let batch = [example(0, &[1, 2], &timings, &[3, 4, 5])];
        let (g, _, joint, parts) = model.joint_loss_graph(&batch).unwrap();
        assert_eq!(g.value(joint).item(), g.value(parts.rec_sum).item());
        assert!(parts.con_sum.is_none());
        drop(g);
        // And the batch trains without constructing any alignment term.
        let mut adam = AdamState::new(&model.store);
        let stats = model
            .train_batch(&batch, &mut adam, &AdamConfig::with_lr(0.001))
            .unwrap();
        assert_eq!(stats.con_sum, 0.0);
        assert_eq!(stats.aligned_examples, 0);
    }

    #[test]
    fn zero_alignment_weight_disables_contrastive_term() {
        let cfg = ModelConfig {
            contrastive_weight: 0.0,
            ..tiny_config(4)
        };
        let model = Model::new(&cfg, 3, 10, 62).unwrap();
        let timings = flat_timings(7);
        let prefix = [0usize, 1, 2, 3, 4, 5, 6];
        let batch = [example(0, &prefix, &timings, &[7, 8])];
        let (g, _, joint, parts) = model.joint_loss_graph(&batch).unwrap();
        assert!(parts.con_sum.is_none());
        // joint = rec + lambda * sum of squared decay params.
        let l2: f64 = model
            .store
            .entries()
            .iter()
            .filter(|e| e.trainable && e.weight_decay)
            .flat_map(|e| e.tensor.data().iter().map(|v| v * v))
            .sum();
        let want = g.value(parts.rec_sum).item() + cfg.l2_weight * l2;
        assert!((g.value(joint).item() - want).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_gradients_verify_on_miniature_batch() {
        let cfg = ModelConfig {
            contrastive: ContrastiveKind::Bpr,
            attention: AttentionKind::Mlp,
            rnn_cell: RnnKind::TimeLstm,
            ..tiny_config(4)
        };
        let model = Model::new(&cfg, 3, 12, 63).unwrap();
        let t_long = flat_timings(8);
        let t_short = flat_timings(3);
        let prefix_long = [0usize, 1, 2, 3, 4, 5, 6, 7];
        let prefix_short = [8usize, 9, 10];
        let batch = [
            example(0, &prefix_long, &t_long, &[8, 9, 11]),
            example(1, &prefix_short, &t_short, &[0, 5, 7]),
        ];
        let analytic: HashMap<String, Tensor> = {
            let (mut g, bound, joint, _) = model.joint_loss_graph(&batch).unwrap();
            let grads = g.backward(joint).unwrap();
            model
                .store
                .trainable_names()
                .into_iter()
                .map(|n| {
                    let t = grads.grad_or_zeros(bound.id(&n), model.store.get(&n).shape());
                    (n, t)
                })
                .collect()
        };
        let mut f = |s: &ParamStore| {
            let mut probe = model.clone();
            probe.store = s.clone();
            let (g, _, joint, _) = probe.joint_loss_graph(&batch).unwrap();
            g.value(joint).item()
        };
        let report = gradcheck::check_all(
            &mut model.store.clone(),
            &analytic,
            gradcheck::DEFAULT_EPSILON,
            1e-4,
            Some(6),
            &mut f,
        );
        assert!(report.passed(), "worst: {:?}", report.worst);
    }

    #[test]
    fn training_step_moves_parameters_and_stats() {
        let mut model = Model::new(&tiny_config(4), 3, 10, 64).unwrap();
        let before = model.store.get("item_emb").data().to_vec();
        let stats_before = model.store.get("pred_mlp.bn0.running_mean").data().to_vec();
        let mut adam = AdamState::new(&model.store);
        let timings = flat_timings(6);
        let prefix = [0usize, 1, 2, 3, 4, 5];
        let batch = [
            example(0, &prefix, &timings, &[6, 7]),
            example(1, &prefix, &timings, &[8, 9]),
        ];
        let stats = model
            .train_batch(&batch, &mut adam, &AdamConfig::with_lr(0.01))
            .unwrap();
        assert!(stats.joint.is_finite());
        assert_eq!(stats.examples, 2);
        assert_eq!(stats.aligned_examples, 2);
        assert!(stats.con_sum > 0.0);
        assert_ne!(model.store.get("item_emb").data(), before.as_slice());
        assert_ne!(
            model.store.get("pred_mlp.bn0.running_mean").data(),
            stats_before.as_slice()
        );
        assert_eq!(adam.step, 1);
    }
}
