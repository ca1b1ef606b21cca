//! Ranking metrics: AUC, GAUC, MRR, NDCG@K.
//!
//! Ties are handled explicitly everywhere: tied positive/negative
//! pairs earn half credit in AUC, and a tied positive takes the
//! average rank of its tie group for MRR and NDCG. Toy models produce
//! ties often, so this is load-bearing, not pedantry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC needs at least one positive and one negative")]
    DegenerateLabels,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("no user with a valid AUC")]
    NoValidUser,
    #[error("no instances")]
    EmptyInput,
}

fn check_scores(scores: &[f64]) -> Result<(), MetricsError> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(MetricsError::NonFiniteScore(i)),
        None => Ok(()),
    }
}

/// Probability a uniformly random positive outranks a uniformly random
/// negative, ties counting half. Exact pair counting, aggregated over
/// sorted tie groups.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    check_scores(scores)?;
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut correct = 0u64;
    let mut tied = 0u64;
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut pos_here = 0u64;
        let mut neg_here = 0u64;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        correct += pos_here * negatives_below;
        tied += pos_here * neg_here;
        negatives_below += neg_here;
        i = j;
    }
    let pairs = (positives * negatives) as f64;
    Ok((correct as f64 + 0.5 * tied as f64) / pairs)
}

/// Scores pooled over one user's test instances.
#[derive(Debug, Clone)]
pub struct UserScores {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaucResult {
    pub value: f64,
    /// Users contributing to the average.
    pub users: usize,
    /// Users skipped for lacking both label classes.
    pub skipped: usize,
}

/// Instance-count-weighted mean of per-user AUCs. Users without both a
/// positive and a negative are skipped and counted.
pub fn gauc(users: &[UserScores]) -> Result<GaucResult, MetricsError> {
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut contributing = 0;
    let mut skipped = 0;
    for u in users {
        match auc(&u.scores, &u.labels) {
            Ok(a) => {
                weighted += u.instances as f64 * a;
                weight += u.instances as f64;
                contributing += 1;
            }
            Err(MetricsError::DegenerateLabels) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if contributing == 0 {
        return Err(MetricsError::NoValidUser);
    }
    Ok(GaucResult {
        value: weighted / weight,
        users: contributing,
        skipped,
    })
}

/// 1-based rank of the positive among all candidates, tied scores
/// resolved to the average rank of the tie group.
pub fn positive_rank(scores: &[f64], positive: usize) -> f64 {
    let s = scores[positive];
    let above = scores.iter().filter(|x| **x > s).count();
    let tied = scores
        .iter()
        .enumerate()
        .filter(|(i, x)| *i != positive && **x == s)
        .count();
    (1 + above) as f64 + tied as f64 / 2.0
}

pub fn reciprocal_rank(scores: &[f64], positive: usize) -> f64 {
    1.0 / positive_rank(scores, positive)
}

/// Single-relevant-item NDCG: 1/log2(rank+1) inside the cutoff, else 0.
pub fn ndcg_at_k(rank: f64, k: usize) -> f64 {
    assert!(k >= 1, "cutoff must be at least 1");
    if rank <= k as f64 {
        1.0 / (rank + 1.0).log2()
    } else {
        0.0
    }
}

/// One scored evaluation instance; `positive` indexes into `scores`.
#[derive(Debug, Clone)]
pub struct InstanceScores {
    pub user: usize,
    pub scores: Vec<f64>,
    pub positive: usize,
}

/// Aggregate metrics over a set of instances, serialized to both a
/// flat key=value text file and JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub instances: usize,
    pub users: usize,
    pub skipped_users: usize,
    pub auc: f64,
    pub gauc: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub ndcg_k: usize,
}

impl MetricsReport {
    /// Pooled AUC over every candidate of every instance, GAUC over
    /// per-user pools, and mean reciprocal rank / NDCG per instance.
    pub fn from_instances(
        instances: &[InstanceScores],
        ndcg_k: usize,
    ) -> Result<MetricsReport, MetricsError> {
        if instances.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let mut pooled_scores = Vec::new();
        let mut pooled_labels = Vec::new();
        let mut by_user: std::collections::BTreeMap<usize, UserScores> =
            std::collections::BTreeMap::new();
        let mut rr_sum = 0.0;
        let mut ndcg_sum = 0.0;
        for inst in instances {
            check_scores(&inst.scores)?;
            let entry = by_user.entry(inst.user).or_insert_with(|| UserScores {
                scores: Vec::new(),
                labels: Vec::new(),
                instances: 0,
            });
            entry.instances += 1;
            for (i, s) in inst.scores.iter().enumerate() {
                let label = i == inst.positive;
                pooled_scores.push(*s);
                pooled_labels.push(label);
                entry.scores.push(*s);
                entry.labels.push(label);
            }
            let rank = positive_rank(&inst.scores, inst.positive);
            rr_sum += 1.0 / rank;
            ndcg_sum += ndcg_at_k(rank, ndcg_k);
        }
        let users: Vec<UserScores> = by_user.into_values().collect();
        let g = gauc(&users)?;
        Ok(MetricsReport {
            instances: instances.len(),
            users: g.users,
            skipped_users: g.skipped,
            auc: auc(&pooled_scores, &pooled_labels)?,
            gauc: g.value,
            mrr: rr_sum / instances.len() as f64,
            ndcg: ndcg_sum / instances.len() as f64,
            ndcg_k,
        })
    }

    /// Flat key=value rendering, one metric per line.
    pub fn to_kv_text(&self) -> String {
        format!(
            "instances={}\nusers={}\nskipped_users={}\nauc={:.6}\ngauc={:.6}\nmrr={:.6}\nndcg@{}={:.6}\n",
            self.instances,
            self.users,
            self.skipped_users,
            self.auc,
            self.gauc,
            self.mrr,
            self.ndcg_k,
            self.ndcg
        )
    }
}
