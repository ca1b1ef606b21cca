//! In-graph loss terms: pairwise alignment objectives, the four-way
//! alignment total, and the per-example recommendation loss.

use crate::autodiff::{Graph, GraphError, NodeId};

use super::config::ContrastiveKind;

/// Probabilities are clipped to `[CLAMP, 1-CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-12;

/// `softplus(<a,q> - <a,p>)`: drives `a` toward `p` and away from `q`
/// under inner-product similarity.
pub fn bpr_pair(
    g: &mut Graph,
    anchor: NodeId,
    positive: NodeId,
    negative: NodeId,
) -> Result<NodeId, GraphError> {
    let sim_p = g.dot(anchor, positive)?;
    let sim_q = g.dot(anchor, negative)?;
    let gap = g.sub(sim_q, sim_p)?;
    Ok(g.softplus(gap))
}

/// `max{d(a,p) - d(a,q) + m, 0}` with Euclidean `d`.
pub fn triplet_pair(
    g: &mut Graph,
    anchor: NodeId,
    positive: NodeId,
    negative: NodeId,
    margin: f64,
) -> Result<NodeId, GraphError> {
    let d_p = g.euclid(anchor, positive)?;
    let d_q = g.euclid(anchor, negative)?;
    let gap = g.sub(d_p, d_q)?;
    let shifted = g.affine_const(gap, 1.0, margin);
    Ok(g.relu(shifted))
}

fn pair(
    g: &mut Graph,
    kind: ContrastiveKind,
    margin: f64,
    anchor: NodeId,
    positive: NodeId,
    negative: NodeId,
) -> Result<NodeId, GraphError> {
    match kind {
        ContrastiveKind::Bpr => bpr_pair(g, anchor, positive, negative),
        ContrastiveKind::Triplet => triplet_pair(g, anchor, positive, negative, margin),
    }
}

/// Four symmetric alignment terms tying each interest representation
/// to its own proxy and each proxy back to its own representation:
/// `f(u_l,p_l,p_s) + f(p_l,u_l,u_s) + f(u_s,p_s,p_l) + f(p_s,u_s,u_l)`.
pub fn contrastive_total(
    g: &mut Graph,
    kind: ContrastiveKind,
    margin: f64,
    u_long: NodeId,
    u_short: NodeId,
    p_long: NodeId,
    p_short: NodeId,
) -> Result<NodeId, GraphError> {
    let t1 = pair(g, kind, margin, u_long, p_long, p_short)?;
    let t2 = pair(g, kind, margin, p_long, u_long, u_short)?;
    let t3 = pair(g, kind, margin, u_short, p_short, p_long)?;
    let t4 = pair(g, kind, margin, p_short, u_short, u_long)?;
    let a = g.add(t1, t2)?;
    let b = g.add(t3, t4)?;
    g.add(a, b)
}

/// Mean negative log-likelihood over one candidate set whose first
/// entry is the positive: `-(1/N)[log y_1 + sum_{j>1} log(1 - y_j)]`.
/// `probs` is a `[N]` vector of raw probabilities.
pub fn nll_one_positive(g: &mut Graph, probs: NodeId) -> Result<NodeId, GraphError> {
    let t = g.value(probs);
    if t.rank() != 1 || t.numel() == 0 {
        return Err(GraphError::BadRank {
            op: "nll_one_positive",
            expected: 1,
            shape: t.shape().to_vec(),
        });
    }
    let n = t.numel();
    let clamped = g.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pos = g.slice(clamped, 0, 1)?;
    let log_pos = g.log(pos);
    let combined = if n > 1 {
        let neg = g.slice(clamped, 1, n - 1)?;
        let one_minus = g.affine_const(neg, -1.0, 1.0);
        let log_neg = g.log(one_minus);
        g.concat(&[log_pos, log_neg])?
    } else {
        log_pos
    };
    let m = g.mean(combined)?;
    Ok(g.affine_const(m, -1.0, 0.0))
}
