//! Recurrent cells: GRU, LSTM, and a time-aware LSTM.
//!
//! Conventions, fixed here and relied on by tests:
//!
//! GRU:  z = σ(W_z[x,h] + b_z), r = σ(W_r[x,h] + b_r),
//!       h̃ = tanh(W_h[x, r⊙h] + b_h), h' = (1−z)⊙h + z⊙h̃.
//!
//! LSTM: i, f, o = σ(W_*[x,h] + b_*), g = tanh(W_g[x,h] + b_g),
//!       c' = f⊙c + i⊙g, h' = o⊙tanh(c').
//!
//! Time-aware LSTM: an LSTM plus two time gates driven by per-step
//! interval features, each a log-scaled nonnegative scalar:
//!       T1 = σ(W_t1·x + σ(Δt1·V_t1) + b_t1)
//!       T2 = σ(W_t2·x + σ(Δt2·V_t2) + b_t2)
//!       c' = f⊙T2⊙c + i⊙T1⊙g, h' = o⊙tanh(c').
//! Δt1 is the gap since the previous event and gates the fresh input;
//! Δt2 is the horizon to the prediction time and gates the carried
//! memory. Both must be nonnegative.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, GraphError, NodeId, ParamStore, Tensor};

use super::init;

/// Cell selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RnnKind {
    Gru,
    Lstm,
    TimeLstm,
}

impl RnnKind {
    pub fn parse(s: &str) -> Option<RnnKind> {
        match s {
            "gru" => Some(RnnKind::Gru),
            "lstm" => Some(RnnKind::Lstm),
            "time_lstm" => Some(RnnKind::TimeLstm),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RnnKind::Gru => "gru",
            RnnKind::Lstm => "lstm",
            RnnKind::TimeLstm => "time_lstm",
        }
    }
}

/// Per-step interval features for time-aware cells. Plain cells ignore
/// them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTiming {
    /// log(1 + seconds since the previous interaction); 0 for the first.
    pub since_prev: f64,
    /// log(1 + seconds until the target interaction).
    pub until_target: f64,
}

/// Hidden state threaded through a sequence.
#[derive(Debug, Clone, Copy)]
pub enum RnnState {
    Gru { h: NodeId },
    Lstm { h: NodeId, c: NodeId },
}

impl RnnState {
    /// The step output (the hidden vector).
    pub fn output(&self) -> NodeId {
        match self {
            RnnState::Gru { h } => *h,
            RnnState::Lstm { h, .. } => *h,
        }
    }
}

/// A recurrent cell of some kind; parameters live in the store under
/// the given name prefix.
#[derive(Debug, Clone)]
pub struct RnnCell {
    kind: RnnKind,
    prefix: String,
    pub in_dim: usize,
    pub hidden: usize,
}

fn gate(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, out: usize) {
    store.insert(
        &format!("{name}.w"),
        init::glorot_uniform(rng, in_dim, out),
        true,
        true,
    );
    store.insert(&format!("{name}.b"), init::zeros_vector(out), true, false);
}

impl RnnCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        kind: RnnKind,
    ) -> Self {
        assert!(in_dim > 0 && hidden > 0, "cell widths must be positive");
        let joint = in_dim + hidden;
        match kind {
            RnnKind::Gru => {
                for gname in ["z", "r", "h"] {
                    gate(store, rng, &format!("{prefix}.{gname}"), joint, hidden);
                }
            }
            RnnKind::Lstm | RnnKind::TimeLstm => {
                for gname in ["i", "f", "o", "g"] {
                    gate(store, rng, &format!("{prefix}.{gname}"), joint, hidden);
                }
                if kind == RnnKind::TimeLstm {
                    for tname in ["t1", "t2"] {
                        store.insert(
                            &format!("{prefix}.{tname}.w"),
                            init::glorot_uniform(rng, in_dim, hidden),
                            true,
                            true,
                        );
                        store.insert(
                            &format!("{prefix}.{tname}.v"),
                            init::glorot_vector(rng, 1, hidden, hidden),
                            true,
                            true,
                        );
                        store.insert(
                            &format!("{prefix}.{tname}.b"),
                            init::zeros_vector(hidden),
                            true,
                            false,
                        );
                    }
                }
            }
        }
        RnnCell {
            kind,
            prefix: prefix.to_string(),
            in_dim,
            hidden,
        }
    }

    pub fn kind(&self) -> RnnKind {
        self.kind
    }

    /// Zero state bound into the graph.
    pub fn initial_state(&self, g: &mut Graph) -> RnnState {
        let zeros = Tensor::vector(vec![0.0; self.hidden]);
        match self.kind {
            RnnKind::Gru => RnnState::Gru {
                h: g.input(zeros),
            },
            RnnKind::Lstm | RnnKind::TimeLstm => RnnState::Lstm {
                h: g.input(zeros.clone()),
                c: g.input(zeros),
            },
        }
    }

    fn gate_out(
        &self,
        g: &mut Graph,
        bound: &Bound,
        name: &str,
        joint: NodeId,
    ) -> Result<NodeId, GraphError> {
        let w = bound.id(&format!("{}.{name}.w", self.prefix));
        let b = bound.id(&format!("{}.{name}.b", self.prefix));
        let a = g.matmul(joint, w)?;
        g.add(a, b)
    }

    /// One step. `timing` is consumed only by the time-aware cell.
    pub fn step(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: NodeId,
        state: RnnState,
        timing: StepTiming,
    ) -> Result<RnnState, GraphError> {
        match (self.kind, state) {
            (RnnKind::Gru, RnnState::Gru { h }) => {
                let joint = g.concat(&[x, h])?;
                let z_pre = self.gate_out(g, bound, "z", joint)?;
                let z = g.sigmoid(z_pre);
                let r_pre = self.gate_out(g, bound, "r", joint)?;
                let r = g.sigmoid(r_pre);
                let rh = g.mul(r, h)?;
                let joint_r = g.concat(&[x, rh])?;
                let cand_pre = self.gate_out(g, bound, "h", joint_r)?;
                let cand = g.tanh(cand_pre);
                let keep = g.affine_const(z, -1.0, 1.0);
                let a = g.mul(keep, h)?;
                let b = g.mul(z, cand)?;
                let h_next = g.add(a, b)?;
                Ok(RnnState::Gru { h: h_next })
            }
            (RnnKind::Lstm, RnnState::Lstm { h, c }) => {
                let joint = g.concat(&[x, h])?;
                let (i, f, o, cand) = self.lstm_gates(g, bound, joint)?;
                let fc = g.mul(f, c)?;
                let ig = g.mul(i, cand)?;
                let c_next = g.add(fc, ig)?;
                let tc = g.tanh(c_next);
                let h_next = g.mul(o, tc)?;
                Ok(RnnState::Lstm {
                    h: h_next,
                    c: c_next,
                })
            }
            (RnnKind::TimeLstm, RnnState::Lstm { h, c }) => {
                if timing.since_prev < 0.0 || timing.until_target < 0.0 {
                    return Err(GraphError::InvalidArgument {
                        op: "time_lstm_step",
                        msg: format!(
                            "interval features must be nonnegative, got ({}, {})",
                            timing.since_prev, timing.until_target
                        ),
                    });
                }
                let joint = g.concat(&[x, h])?;
                let (i, f, o, cand) = self.lstm_gates(g, bound, joint)?;
                let t1 = self.time_gate(g, bound, "t1", x, timing.since_prev)?;
                let t2 = self.time_gate(g, bound, "t2", x, timing.until_target)?;
                let ft = g.mul(f, t2)?;
                let fc = g.mul(ft, c)?;
                let it = g.mul(i, t1)?;
                let ig = g.mul(it, cand)?;
                let c_next = g.add(fc, ig)?;
                let tc = g.tanh(c_next);
                let h_next = g.mul(o, tc)?;
                Ok(RnnState::Lstm {
                    h: h_next,
                    c: c_next,
                })
            }
            _ => unreachable!("state kind mismatch"),
        }
    }

    fn lstm_gates(
        &self,
        g: &mut Graph,
        bound: &Bound,
        joint: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId, NodeId), GraphError> {
        let i_pre = self.gate_out(g, bound, "i", joint)?;
        let i = g.sigmoid(i_pre);
        let f_pre = self.gate_out(g, bound, "f", joint)?;
        let f = g.sigmoid(f_pre);
        let o_pre = self.gate_out(g, bound, "o", joint)?;
        let o = g.sigmoid(o_pre);
        let g_pre = self.gate_out(g, bound, "g", joint)?;
        let cand = g.tanh(g_pre);
        Ok((i, f, o, cand))
    }

    fn time_gate(
        &self,
        g: &mut Graph,
        bound: &Bound,
        name: &str,
        x: NodeId,
        dt: f64,
    ) -> Result<NodeId, GraphError> {
        let w = bound.id(&format!("{}.{name}.w", self.prefix));
        let v = bound.id(&format!("{}.{name}.v", self.prefix));
        let b = bound.id(&format!("{}.{name}.b", self.prefix));
        let wx = g.matmul(x, w)?;
        let dt_node = g.scalar(dt);
        let vdt = g.mul(dt_node, v)?;
        let inner = g.sigmoid(vdt);
        let s = g.add(wx, inner)?;
        let s = g.add(s, b)?;
        Ok(g.sigmoid(s))
    }

    /// Run a whole sequence from the zero state; returns every step's
    /// output in order.
    pub fn run(
        &self,
        g: &mut Graph,
        bound: &Bound,
        inputs: &[NodeId],
        timings: &[StepTiming],
    ) -> Result<Vec<NodeId>, GraphError> {
        assert_eq!(inputs.len(), timings.len(), "timing misaligned with inputs");
        let mut state = self.initial_state(g);
        let mut outs = Vec::with_capacity(inputs.len());
        for (x, t) in inputs.iter().zip(timings) {
            state = self.step(g, bound, *x, state, *t)?;
            outs.push(state.output());
        }
        Ok(outs)
    }
}
