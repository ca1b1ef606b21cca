//! Analysis suite: counterfactual history protocols, one-side
//! evaluation, fusion-weight statistics, fixed-weight sweeps, and the
//! disentanglement report measuring each interest against its proxy.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Driver, TrainingExample};
use crate::metrics::{InstanceScores, MetricsError, MetricsReport};
use crate::model::{Model, ModelError};
use crate::seeding;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("behavior tag index {0} out of range")]
    UnknownTag(usize),
    #[error("no examples to evaluate")]
    NoExamples,
}

/// Which interest the fusion gate is forced to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Long,
    Short,
    Both,
}

impl Side {
    pub fn alpha_override(self) -> Option<f64> {
        match self {
            Side::Long => Some(1.0),
            Side::Short => Some(0.0),
            Side::Both => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Long => "long",
            Side::Short => "short",
            Side::Both => "both",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "long" => Ok(Side::Long),
            "short" => Ok(Side::Short),
            "both" => Ok(Side::Both),
            other => Err(format!("unknown side {other:?} (long|short|both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    None,
    Shuffle,
    Truncate,
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(ProtocolKind::None),
            "shuffle" => Ok(ProtocolKind::Shuffle),
            "truncate" => Ok(ProtocolKind::Truncate),
            other => Err(format!(
                "unknown protocol {other:?} (none|shuffle|truncate)"
            )),
        }
    }
}

/// Counterfactual history transformation applied before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub truncate_k: usize,
    pub seed: u64,
}

impl ProtocolSpec {
    pub fn none() -> Self {
        ProtocolSpec {
            kind: ProtocolKind::None,
            truncate_k: 0,
            seed: 0,
        }
    }

    pub fn shuffle(seed: u64) -> Self {
        ProtocolSpec {
            kind: ProtocolKind::Shuffle,
            truncate_k: 0,
            seed,
        }
    }

    pub fn truncate(k: usize) -> Self {
        assert!(k >= 1, "truncation must keep at least one item");
        ProtocolSpec {
            kind: ProtocolKind::Truncate,
            truncate_k: k,
            seed: 0,
        }
    }
}

/// Transform one example's history; candidates are never touched.
/// SHUFFLE permutes the items across the fixed time slots, so the
/// interval features stay those of the (unchanged) slot timestamps.
/// TRUNCATE keeps the most recent min(k, t) items and restarts the
/// first kept step's backward interval at zero.
pub fn apply_protocol(example: &TrainingExample, spec: &ProtocolSpec) -> TrainingExample {
    let mut out = example.clone();
    match spec.kind {
        ProtocolKind::None => {}
        ProtocolKind::Shuffle => {
            let index = ((example.user as u64) << 32) | example.position as u64;
            let mut rng = seeding::indexed_stream(spec.seed, "protocol/shuffle", index);
            out.prefix.shuffle(&mut rng);
        }
        ProtocolKind::Truncate => {
            assert!(spec.truncate_k >= 1, "truncation must keep at least one item");
            let t = out.prefix.len();
            if spec.truncate_k < t {
                let start = t - spec.truncate_k;
                out.prefix.drain(..start);
                out.timings.drain(..start);
                out.timings[0].since_prev = 0.0;
            }
        }
    }
    out
}

/// Score every example under a side override and protocol, then
/// aggregate. The positive is candidate 0 by construction.
pub fn evaluate<'a>(
    model: &Model,
    examples: impl IntoIterator<Item = &'a TrainingExample>,
    side: Side,
    protocol: &ProtocolSpec,
    ndcg_k: usize,
) -> Result<MetricsReport, EvalError> {
    let mut instances = Vec::new();
    for example in examples {
        let transformed = apply_protocol(example, protocol);
        let scored = model.score_candidates(&transformed.view(), side.alpha_override())?;
        instances.push(InstanceScores {
            user: transformed.user,
            scores: scored.scores,
            positive: 0,
        });
    }
    if instances.is_empty() {
        return Err(EvalError::NoExamples);
    }
    Ok(MetricsReport::from_instances(&instances, ndcg_k)?)
}

/// Evaluation with one interest side kept and the other discarded.
pub fn one_side_eval(
    model: &Model,
    examples: &[TrainingExample],
    side: Side,
    ndcg_k: usize,
) -> Result<MetricsReport, EvalError> {
    evaluate(model, examples, side, &ProtocolSpec::none(), ndcg_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

fn summarize(values: &[f64]) -> AlphaSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    AlphaSummary {
        mean,
        stddev: var.sqrt(),
        count: values.len(),
    }
}

/// Fusion-weight statistics grouped by behavior tag and, where ground
/// truth exists, by planted driver. The gate emits one weight per
/// candidate, so both populations are reported: the weight on the
/// positive candidate alone, and the weights on all candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaStats {
    pub by_tag_positive: BTreeMap<String, AlphaSummary>,
    pub by_tag_all: BTreeMap<String, AlphaSummary>,
    pub by_driver_positive: BTreeMap<String, AlphaSummary>,
    pub by_driver_all: BTreeMap<String, AlphaSummary>,
}

pub fn alpha_stats(
    model: &Model,
    examples: &[TrainingExample],
    tags: &[String],
) -> Result<AlphaStats, EvalError> {
    let mut tag_positive: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut tag_all: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut driver_positive: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut driver_all: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for example in examples {
        let tag = tags
            .get(example.tag)
            .ok_or(EvalError::UnknownTag(example.tag))?
            .clone();
        let scored = model.score_candidates(&example.view(), None)?;
        tag_positive
            .entry(tag.clone())
            .or_default()
            .push(scored.alphas[0]);
        tag_all
            .entry(tag)
            .or_default()
            .extend_from_slice(&scored.alphas);
        if let Some(driver) = example.driver {
            let key = driver.as_str().to_string();
            driver_positive
                .entry(key.clone())
                .or_default()
                .push(scored.alphas[0]);
            driver_all
                .entry(key)
                .or_default()
                .extend_from_slice(&scored.alphas);
        }
    }
    let fold = |m: BTreeMap<String, Vec<f64>>| {
        m.into_iter().map(|(k, v)| (k, summarize(&v))).collect()
    };
    Ok(AlphaStats {
        by_tag_positive: fold(tag_positive),
        by_tag_all: fold(tag_all),
        by_driver_positive: fold(driver_positive),
        by_driver_all: fold(driver_all),
    })
}

/// One sweep cell: a forced fusion weight, or the learned gate when
/// `alpha` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub alpha: Option<f64>,
    pub report: MetricsReport,
}

/// Evaluate under each fixed fusion weight, then append the adaptive
/// gate for comparison.
pub fn fixed_alpha_sweep(
    model: &Model,
    examples: &[TrainingExample],
    alphas: &[f64],
    ndcg_k: usize,
) -> Result<Vec<SweepEntry>, EvalError> {
    let mut entries = Vec::with_capacity(alphas.len() + 1);
    for &alpha in alphas {
        assert!((0.0..=1.0).contains(&alpha), "fusion weight outside [0,1]");
        let mut instances = Vec::new();
        for example in examples {
            let scored = model.score_candidates(&example.view(), Some(alpha))?;
            instances.push(InstanceScores {
                user: example.user,
                scores: scored.scores,
                positive: 0,
            });
        }
        if instances.is_empty() {
            return Err(EvalError::NoExamples);
        }
        entries.push(SweepEntry {
            alpha: Some(alpha),
            report: MetricsReport::from_instances(&instances, ndcg_k)?,
        });
    }
    entries.push(SweepEntry {
        alpha: None,
        report: one_side_eval(model, examples, Side::Both, ndcg_k)?,
    });
    Ok(entries)
}

/// One evaluation per truncation length, in the given order.
pub fn truncate_curve(
    model: &Model,
    examples: &[TrainingExample],
    ks: &[usize],
    side: Side,
    ndcg_k: usize,
) -> Result<Vec<(usize, MetricsReport)>, EvalError> {
    assert!(!ks.is_empty(), "need at least one truncation length");
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let report = evaluate(model, examples, side, &ProtocolSpec::truncate(k), ndcg_k)?;
        out.push((k, report));
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// How cleanly the two interests separate: mean cosines between each
/// encoder output and both proxies (over examples long enough to have
/// proxies), fusion-weight statistics, one-side metrics, and
/// driver-stratified metrics where ground truth exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub cos_long_long: f64,
    pub cos_long_short: f64,
    pub cos_short_short: f64,
    pub cos_short_long: f64,
    pub proxy_examples: usize,
    pub alpha: AlphaStats,
    pub sides: BTreeMap<String, MetricsReport>,
    pub by_driver: BTreeMap<String, MetricsReport>,
}

pub fn disentanglement_report(
    model: &Model,
    examples: &[TrainingExample],
    tags: &[String],
    ndcg_k: usize,
) -> Result<DisentanglementReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::NoExamples);
    }
    let mut sums = [0.0f64; 4];
    let mut proxy_examples = 0;
    for example in examples {
        let snap = model.interest_snapshot(&example.view())?;
        let (Some(p_long), Some(p_short)) = (snap.p_long, snap.p_short) else {
            continue;
        };
        sums[0] += cosine(&snap.u_long, &p_long);
        sums[1] += cosine(&snap.u_long, &p_short);
        sums[2] += cosine(&snap.u_short, &p_short);
        sums[3] += cosine(&snap.u_short, &p_long);
        proxy_examples += 1;
    }
    let denominator = proxy_examples.max(1) as f64;

    let mut sides = BTreeMap::new();
    for side in [Side::Long, Side::Short, Side::Both] {
        sides.insert(
            side.as_str().to_string(),
            one_side_eval(model, examples, side, ndcg_k)?,
        );
    }

    let mut by_driver = BTreeMap::new();
    for driver in [Driver::Long, Driver::Short] {
        let stratum = examples.iter().filter(|e| e.driver == Some(driver));
        if stratum.clone().next().is_some() {
            by_driver.insert(
                driver.as_str().to_string(),
                evaluate(model, stratum, Side::Both, &ProtocolSpec::none(), ndcg_k)?,
            );
        }
    }

    Ok(DisentanglementReport {
        cos_long_long: sums[0] / denominator,
        cos_long_short: sums[1] / denominator,
        cos_short_short: sums[2] / denominator,
        cos_short_long: sums[3] / denominator,
        proxy_examples,
        alpha: alpha_stats(model, examples, tags)?,
        sides,
        by_driver,
    })
}
