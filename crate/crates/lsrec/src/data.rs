//! Dataset ingestion, filtering, splitting, training-example
//! construction, and a synthetic generator with planted long/short
//! interest structure.
//!
//! Input format: CSV or TSV with a header naming the columns
//! `user_id,item_id,timestamp,behavior` (any column order). The
//! synthetic generator emits the same format plus a sidecar
//! `user_id,position,driver` labeling which interest drove each
//! interaction.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::StepTiming;
use crate::seeding;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("missing column {0}")]
    MissingColumn(&'static str),
    #[error("no interaction rows")]
    Empty,
    #[error("split boundaries out of order: t_val {t_val} must be < t_test {t_test}")]
    BadBoundaries { t_val: i64, t_test: i64 },
    #[error("user {0} has interacted with the whole catalog; cannot sample negatives")]
    CatalogExhausted(String),
    #[error("sidecar: {0}")]
    BadSidecar(String),
    #[error("generator config: {0}")]
    BadGenerator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }

    /// Guess from the file extension; anything but `.tsv` reads as CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Format::Tsv,
            _ => Format::Csv,
        }
    }
}

/// Which behavior rows to keep at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BehaviorFilter {
    All,
    Tag(String),
}

impl Default for BehaviorFilter {
    fn default() -> Self {
        BehaviorFilter::Tag("click".to_string())
    }
}

impl FromStr for BehaviorFilter {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "all" {
            BehaviorFilter::All
        } else {
            BehaviorFilter::Tag(s.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
    pub behavior: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Ground-truth interest driver planted by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Long,
    Short,
}

impl Driver {
    pub fn as_str(self) -> &'static str {
        match self {
            Driver::Long => "long",
            Driver::Short => "short",
        }
    }
}

impl FromStr for Driver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "long" => Ok(Driver::Long),
            "short" => Ok(Driver::Short),
            other => Err(format!("unknown driver label {other:?}")),
        }
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One ground-truth row of the generator sidecar: `position` indexes
/// the user's time-sorted sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverLabel {
    pub user_id: String,
    pub position: usize,
    pub driver: Driver,
}

#[derive(Debug, Clone)]
pub struct Interaction {
    pub item: usize,
    pub timestamp: i64,
    pub tag: usize,
    pub driver: Option<Driver>,
    pub split: Split,
}

/// Dense-id dataset: per-user sequences sorted by timestamp, ties kept
/// in input order.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    pub user_names: Vec<String>,
    pub item_names: Vec<String>,
    pub behavior_tags: Vec<String>,
    pub sequences: Vec<Vec<Interaction>>,
}

impl InteractionDataset {
    pub fn n_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }
}

/// How to place the two split boundaries on the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitBoundaries {
    /// Explicit timestamps, `t_val < t_test`. Targets before `t_val`
    /// are train, in `[t_val, t_test)` val, at or after `t_test` test.
    Explicit { t_val: i64, t_test: i64 },
    /// Boundaries at the given quantiles of the pooled timestamps.
    Quantiles { val: f64, test: f64 },
}

impl Default for SplitBoundaries {
    fn default() -> Self {
        SplitBoundaries::Quantiles {
            val: 0.8,
            test: 0.9,
        }
    }
}

/// One supervised instance: the history before a target interaction,
/// interval features per history step, and the candidate items to
/// rank. `candidates[0]` is the observed positive.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub user: usize,
    pub prefix: Vec<usize>,
    pub timings: Vec<StepTiming>,
    pub candidates: Vec<usize>,
    pub split: Split,
    pub tag: usize,
    pub driver: Option<Driver>,
    /// Index of the positive in the user's full sequence.
    pub position: usize,
}

impl TrainingExample {
    pub fn view(&self) -> crate::model::ExampleView<'_> {
        crate::model::ExampleView {
            user: self.user,
            prefix: &self.prefix,
            timings: &self.timings,
            candidates: &self.candidates,
        }
    }
}

/// Parse an interaction file. Every row must parse; the behavior
/// filter is applied after validation.
pub fn load_interactions(
    path: &Path,
    format: Format,
    filter: &BehaviorFilter,
) -> Result<Vec<InteractionRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &'static str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(DataError::MissingColumn(name))
    };
    let (ui, ii, ti, bi) = (
        col("user_id")?,
        col("item_id")?,
        col("timestamp")?,
        col("behavior")?,
    );

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<&str, DataError> {
            row.get(i).ok_or(DataError::Parse {
                line,
                msg: "short row".to_string(),
            })
        };
        let timestamp: i64 = field(ti)?.trim().parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("timestamp {:?} is not an integer", field(ti).unwrap()),
        })?;
        if timestamp < 0 {
            return Err(DataError::Parse {
                line,
                msg: format!("negative timestamp {timestamp}"),
            });
        }
        records.push(InteractionRecord {
            user_id: field(ui)?.to_string(),
            item_id: field(ii)?.to_string(),
            timestamp,
            behavior: field(bi)?.to_string(),
        });
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    if let BehaviorFilter::Tag(tag) = filter {
        records.retain(|r| &r.behavior == tag);
    }
    Ok(records)
}

/// Write interactions in the canonical CSV layout.
pub fn write_interactions(path: &Path, records: &[InteractionRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "item_id", "timestamp", "behavior"])?;
    for r in records {
        w.write_record([
            r.user_id.as_str(),
            r.item_id.as_str(),
            &r.timestamp.to_string(),
            r.behavior.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_drivers(path: &Path, labels: &[DriverLabel]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "position", "driver"])?;
    for l in labels {
        w.write_record([
            l.user_id.as_str(),
            &l.position.to_string(),
            l.driver.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_drivers(path: &Path) -> Result<Vec<DriverLabel>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut labels = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |msg: String| DataError::Parse { line, msg };
        let get = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        labels.push(DriverLabel {
            user_id: get(0).to_string(),
            position: get(1)
                .parse()
                .map_err(|_| parse_err(format!("position {:?} is not an integer", get(1))))?,
            driver: get(2).parse().map_err(parse_err)?,
        });
    }
    Ok(labels)
}

/// Iteratively drop users and items with fewer than `threshold`
/// interactions until nothing changes.
pub fn core_filter(mut records: Vec<InteractionRecord>, threshold: usize) -> Vec<InteractionRecord> {
    assert!(threshold >= 1, "core threshold must be at least 1");
    loop {
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for r in &records {
            *user_counts.entry(&r.user_id).or_default() += 1;
            *item_counts.entry(&r.item_id).or_default() += 1;
        }
        let keep: Vec<bool> = records
            .iter()
            .map(|r| user_counts[r.user_id.as_str()] >= threshold && item_counts[r.item_id.as_str()] >= threshold)
            .collect();
        if keep.iter().all(|k| *k) {
            return records;
        }
        let mut it = keep.iter();
        records.retain(|_| *it.next().unwrap());
    }
}

fn quantile(sorted: &[i64], q: f64) -> i64 {
    let idx = ((sorted.len() as f64 * q) as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Assemble the dense-id dataset: remap string ids (sorted order),
/// time-sort each user's sequence stably, tag splits by the
/// interaction's own timestamp, and attach any driver labels.
pub fn build_dataset(
    records: &[InteractionRecord],
    drivers: &[DriverLabel],
    boundaries: &SplitBoundaries,
) -> Result<InteractionDataset, DataError> {
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let (t_val, t_test) = match *boundaries {
        SplitBoundaries::Explicit { t_val, t_test } => {
            if t_val >= t_test {
                return Err(DataError::BadBoundaries { t_val, t_test });
            }
            (t_val, t_test)
        }
        SplitBoundaries::Quantiles { val, test } => {
            let mut ts: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
            ts.sort_unstable();
            (quantile(&ts, val), quantile(&ts, test))
        }
    };

    let sorted_unique = |mut v: Vec<String>| {
        v.sort_unstable();
        v.dedup();
        v
    };
    let user_names = sorted_unique(records.iter().map(|r| r.user_id.clone()).collect());
    let item_names = sorted_unique(records.iter().map(|r| r.item_id.clone()).collect());
    let behavior_tags = sorted_unique(records.iter().map(|r| r.behavior.clone()).collect());
    let index = |names: &[String]| -> HashMap<String, usize> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect()
    };
    let user_index = index(&user_names);
    let item_index = index(&item_names);
    let tag_index = index(&behavior_tags);

    let mut sequences: Vec<Vec<Interaction>> = vec![Vec::new(); user_names.len()];
    for r in records {
        let split = if r.timestamp < t_val {
            Split::Train
        } else if r.timestamp < t_test {
            Split::Val
        } else {
            Split::Test
        };
        sequences[user_index[&r.user_id]].push(Interaction {
            item: item_index[&r.item_id],
            timestamp: r.timestamp,
            tag: tag_index[&r.behavior],
            driver: None,
            split,
        });
    }
    for seq in &mut sequences {
        seq.sort_by_key(|i| i.timestamp);
    }

    for l in drivers {
        let u = *user_index
            .get(&l.user_id)
            .ok_or_else(|| DataError::BadSidecar(format!("unknown user {}", l.user_id)))?;
        let seq = &mut sequences[u];
        if l.position >= seq.len() {
            return Err(DataError::BadSidecar(format!(
                "user {} position {} out of range {}",
                l.user_id,
                l.position,
                seq.len()
            )));
        }
        seq[l.position].driver = Some(l.driver);
    }

    Ok(InteractionDataset {
        user_names,
        item_names,
        behavior_tags,
        sequences,
    })
}

/// One example per interaction position in the requested split, with
/// `n_negatives` uniform draws per example excluding everything the
/// user ever interacted with. Deterministic given (dataset, seed).
pub fn build_examples(
    ds: &InteractionDataset,
    split: Split,
    n_negatives: usize,
    max_seq_len: usize,
    seed: u64,
) -> Result<Vec<TrainingExample>, DataError> {
    assert!(n_negatives >= 1, "need at least one negative");
    assert!(max_seq_len >= 1, "need at least one history slot");
    let label = match split {
        Split::Train => "negatives/train",
        Split::Val => "negatives/val",
        Split::Test => "negatives/test",
    };
    let n_items = ds.n_items();
    let mut examples = Vec::new();
    for (user, seq) in ds.sequences.iter().enumerate() {
        if seq.len() < 2 {
            continue;
        }
        let interacted: HashSet<usize> = seq.iter().map(|i| i.item).collect();
        if interacted.len() >= n_items {
            return Err(DataError::CatalogExhausted(ds.user_names[user].clone()));
        }
        let mut rng = seeding::indexed_stream(seed, label, user as u64);
        for t in 1..seq.len() {
            let target = &seq[t];
            if target.split != split {
                continue;
            }
            let start = t.saturating_sub(max_seq_len);
            let kept = &seq[start..t];
            let prefix: Vec<usize> = kept.iter().map(|i| i.item).collect();
            let timings: Vec<StepTiming> = kept
                .iter()
                .enumerate()
                .map(|(j, i)| StepTiming {
                    since_prev: if j == 0 {
                        0.0
                    } else {
                        ((i.timestamp - kept[j - 1].timestamp) as f64).ln_1p()
                    },
                    until_target: ((target.timestamp - i.timestamp) as f64).ln_1p(),
                })
                .collect();
            let mut candidates = Vec::with_capacity(1 + n_negatives);
            candidates.push(target.item);
            for _ in 0..n_negatives {
                loop {
                    let draw = rng.random_range(0..n_items);
                    if !interacted.contains(&draw) {
                        candidates.push(draw);
                        break;
                    }
                }
            }
            examples.push(TrainingExample {
                user,
                prefix,
                timings,
                candidates,
                split,
                tag: target.tag,
                driver: target.driver,
                position: t,
            });
        }
    }
    Ok(examples)
}

/// Synthetic-data shape: users draw a fixed topic mixture, a session
/// topic drifts over time, and each interaction is driven either by
/// the stable mixture (LONG) or the current session topic (SHORT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_topics: usize,
    pub items_per_topic: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    /// Probability an interaction follows the long-term mixture.
    pub w_long: f64,
    /// Per-step probability the session topic is redrawn.
    pub drift_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_users: 200,
            n_items: 500,
            n_topics: 20,
            items_per_topic: 25,
            seq_len_min: 30,
            seq_len_max: 60,
            w_long: 0.5,
            drift_rate: 0.2,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| Err(DataError::BadGenerator(msg));
        if self.n_users == 0 || self.n_items == 0 {
            return fail("need at least one user and one item".to_string());
        }
        if self.n_topics == 0 || self.n_topics > self.n_items {
            return fail(format!(
                "{} topics do not fit {} items",
                self.n_topics, self.n_items
            ));
        }
        if self.items_per_topic == 0 || self.n_topics * self.items_per_topic > self.n_items {
            return fail(format!(
                "{} topics x {} items/topic exceeds catalog {}",
                self.n_topics, self.items_per_topic, self.n_items
            ));
        }
        if self.seq_len_min < 2 || self.seq_len_min > self.seq_len_max {
            return fail(format!(
                "bad sequence length range {}..{}",
                self.seq_len_min, self.seq_len_max
            ));
        }
        if !(0.0..=1.0).contains(&self.w_long) || !(0.0..=1.0).contains(&self.drift_rate) {
            return fail("w_long and drift_rate must lie in [0,1]".to_string());
        }
        Ok(())
    }
}

const DIRICHLET_ALPHA: f64 = 0.15;
const START_WINDOW_SECS: i64 = 30 * 86_400;
const GAP_MIN_SECS: i64 = 1_800;
const GAP_MAX_SECS: i64 = 14_400;

/// Symmetric Dirichlet draw via normalized Gamma(alpha, 1) samples.
fn dirichlet_mixture<R: Rng>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("valid shape");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 {
        draws.iter().map(|g| g / sum).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Generate interactions plus ground-truth driver labels. Every row's
/// behavior is "click". Bit-identical across runs for a fixed seed.
pub fn synthesize(
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(Vec<InteractionRecord>, Vec<DriverLabel>), DataError> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for u in 0..cfg.n_users {
        let user_id = format!("u{u:06}");
        let mut rng = seeding::indexed_stream(seed, "gen/user", u as u64);
        let len = rng.random_range(cfg.seq_len_min..=cfg.seq_len_max);
        let mixture = dirichlet_mixture(&mut rng, cfg.n_topics, DIRICHLET_ALPHA);
        let topic_dist = WeightedIndex::new(&mixture).expect("positive mixture");
        // session walk is uniform over all topics, independent of the long-term mixture
        let mut session_topic = rng.random_range(0..cfg.n_topics);
        let mut clock = rng.random_range(0..START_WINDOW_SECS);
        for position in 0..len {
            if position > 0 {
                if rng.random_range(0.0..1.0) < cfg.drift_rate {
                    session_topic = rng.random_range(0..cfg.n_topics);
                }
                clock += rng.random_range(GAP_MIN_SECS..=GAP_MAX_SECS);
            }
            let driver = if rng.random_range(0.0..1.0) < cfg.w_long {
                Driver::Long
            } else {
                Driver::Short
            };
            let topic = match driver {
                Driver::Long => topic_dist.sample(&mut rng),
                Driver::Short => session_topic,
            };
            let item = topic * cfg.items_per_topic + rng.random_range(0..cfg.items_per_topic);
            records.push(InteractionRecord {
                user_id: user_id.clone(),
                item_id: format!("i{item:06}"),
                timestamp: clock,
                behavior: "click".to_string(),
            });
            labels.push(DriverLabel {
                user_id: user_id.clone(),
                position,
                driver,
            });
        }
    }
    Ok((records, labels))
}
