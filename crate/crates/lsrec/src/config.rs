//! Run configuration: a flat key=value file with typed validation.
//!
//! Lines are `key=value`; `#` starts a comment. Unknown keys are
//! rejected. Command-line `--set key=value` pairs override file
//! values. List-valued keys (`pred_hidden`, `sweep_alphas`,
//! `truncate_ks`) separate elements with commas; the sweep command
//! reserves `|` inside values for grid expansion, so a single run
//! never sees it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{BehaviorFilter, GeneratorConfig, Split};
use crate::eval::{ProtocolKind, Side};
use crate::model::{ContrastiveKind, ModelConfig};
use crate::nn::{AttentionKind, RnnKind};

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("key {key}: cannot parse {value:?} as {want}")]
    BadValue {
        key: String,
        value: String,
        want: &'static str,
    },
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ConfigError),
    #[error("{0}")]
    Invalid(String),
}

/// Everything one run needs: model shape, optimizer schedule, data
/// sources and split, evaluation cell, and generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub train_negatives: usize,
    pub eval_negatives: usize,
    pub ndcg_k: usize,
    pub data_path: Option<PathBuf>,
    pub drivers_path: Option<PathBuf>,
    pub behavior_filter: BehaviorFilter,
    pub core_threshold: usize,
    pub t_val: Option<i64>,
    pub t_test: Option<i64>,
    pub split_val: f64,
    pub split_test: f64,
    pub out_dir: PathBuf,
    pub eval_split: Split,
    pub protocol: ProtocolKind,
    pub protocol_seed: u64,
    pub truncate_k: usize,
    pub side: Side,
    pub fixed_alpha: Option<f64>,
    pub sweep_alphas: Vec<f64>,
    pub truncate_ks: Vec<usize>,
    pub gen: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            lr: 0.001,
            batch_size: 500,
            epochs: 10,
            patience: 3,
            seed: 42,
            train_negatives: 4,
            eval_negatives: 99,
            ndcg_k: 2,
            data_path: None,
            drivers_path: None,
            behavior_filter: BehaviorFilter::default(),
            core_threshold: 10,
            t_val: None,
            t_test: None,
            split_val: 0.8,
            split_test: 0.9,
            out_dir: PathBuf::from("runs/default"),
            eval_split: Split::Test,
            protocol: ProtocolKind::None,
            protocol_seed: 17,
            truncate_k: 10,
            side: Side::Both,
            fixed_alpha: None,
            sweep_alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            truncate_ks: vec![5, 10, 20, 40],
            gen: GeneratorConfig::default(),
        }
    }
}

fn parse_as<T: std::str::FromStr>(
    key: &str,
    value: &str,
    want: &'static str,
) -> Result<T, RunConfigError> {
    value.trim().parse().map_err(|_| RunConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        want,
    })
}

fn parse_list<T: std::str::FromStr>(
    key: &str,
    value: &str,
    want: &'static str,
) -> Result<Vec<T>, RunConfigError> {
    value
        .split(',')
        .map(|part| parse_as(key, part, want))
        .collect()
}

fn join_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Set one key. Every key that `echo_map` emits is accepted here.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), RunConfigError> {
        let v = value.trim();
        match key {
            "embed_dim" => self.model.embed_dim = parse_as(key, v, "usize")?,
            "recent_window" => self.model.recent_window = parse_as(key, v, "usize")?,
            "proxy_threshold" => self.model.proxy_threshold = parse_as(key, v, "usize")?,
            "contrastive_weight" => self.model.contrastive_weight = parse_as(key, v, "f64")?,
            "l2_weight" => self.model.l2_weight = parse_as(key, v, "f64")?,
            "margin" => self.model.margin = parse_as(key, v, "f64")?,
            "contrastive" => {
                self.model.contrastive =
                    ContrastiveKind::parse(v).ok_or_else(|| RunConfigError::BadValue {
                        key: key.to_string(),
                        value: v.to_string(),
                        want: "bpr|triplet",
                    })?
            }
            "rnn_cell" => {
                self.model.rnn_cell =
                    RnnKind::parse(v).ok_or_else(|| RunConfigError::BadValue {
                        key: key.to_string(),
                        value: v.to_string(),
                        want: "gru|lstm|time_lstm",
                    })?
            }
            "attention" => {
                self.model.attention =
                    AttentionKind::parse(v).ok_or_else(|| RunConfigError::BadValue {
                        key: key.to_string(),
                        value: v.to_string(),
                        want: "mlp|inner_product",
                    })?
            }
            "evolution" => self.model.evolution = parse_as(key, v, "bool")?,
            "fusion_gru" => self.model.fusion_gru = parse_as(key, v, "bool")?,
            "max_seq_len" => self.model.max_seq_len = parse_as(key, v, "usize")?,
            "pred_hidden" => self.model.pred_hidden = parse_list(key, v, "usize list")?,
            "lr" => self.lr = parse_as(key, v, "f64")?,
            "batch_size" => self.batch_size = parse_as(key, v, "usize")?,
            "epochs" => self.epochs = parse_as(key, v, "usize")?,
            "patience" => self.patience = parse_as(key, v, "usize")?,
            "seed" => self.seed = parse_as(key, v, "u64")?,
            "train_negatives" => self.train_negatives = parse_as(key, v, "usize")?,
            "eval_negatives" => self.eval_negatives = parse_as(key, v, "usize")?,
            "ndcg_k" => self.ndcg_k = parse_as(key, v, "usize")?,
            "data_path" => self.data_path = Some(PathBuf::from(v)),
            "drivers_path" => self.drivers_path = Some(PathBuf::from(v)),
            "behavior_filter" => {
                self.behavior_filter = v.parse().expect("infallible");
            }
            "core_threshold" => self.core_threshold = parse_as(key, v, "usize")?,
            "t_val" => self.t_val = Some(parse_as(key, v, "i64")?),
            "t_test" => self.t_test = Some(parse_as(key, v, "i64")?),
            "split_val" => self.split_val = parse_as(key, v, "f64")?,
            "split_test" => self.split_test = parse_as(key, v, "f64")?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "eval_split" => {
                self.eval_split = match v {
                    "train" => Split::Train,
                    "val" => Split::Val,
                    "test" => Split::Test,
                    _ => {
                        return Err(RunConfigError::BadValue {
                            key: key.to_string(),
                            value: v.to_string(),
                            want: "train|val|test",
                        })
                    }
                }
            }
            "protocol" => self.protocol = parse_as(key, v, "none|shuffle|truncate")?,
            "protocol_seed" => self.protocol_seed = parse_as(key, v, "u64")?,
            "truncate_k" => self.truncate_k = parse_as(key, v, "usize")?,
            "side" => self.side = parse_as(key, v, "long|short|both")?,
            "fixed_alpha" => self.fixed_alpha = Some(parse_as(key, v, "f64")?),
            "sweep_alphas" => self.sweep_alphas = parse_list(key, v, "f64 list")?,
            "truncate_ks" => self.truncate_ks = parse_list(key, v, "usize list")?,
            "gen_users" => self.gen.n_users = parse_as(key, v, "usize")?,
            "gen_items" => self.gen.n_items = parse_as(key, v, "usize")?,
            "gen_topics" => self.gen.n_topics = parse_as(key, v, "usize")?,
            "gen_items_per_topic" => self.gen.items_per_topic = parse_as(key, v, "usize")?,
            "gen_seq_min" => self.gen.seq_len_min = parse_as(key, v, "usize")?,
            "gen_seq_max" => self.gen.seq_len_max = parse_as(key, v, "usize")?,
            "gen_w_long" => self.gen.w_long = parse_as(key, v, "f64")?,
            "gen_drift" => self.gen.drift_rate = parse_as(key, v, "f64")?,
            _ => return Err(RunConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parse file text; later lines override earlier ones.
    pub fn apply_text(&mut self, text: &str) -> Result<(), RunConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(RunConfigError::BadLine(i + 1))?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, RunConfigError> {
        let mut config = RunConfig::default();
        config.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(config)
    }

    /// Apply `--set key=value` overrides, which win over file values.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), RunConfigError> {
        for s in sets {
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| RunConfigError::Invalid(format!("--set needs key=value, got {s:?}")))?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RunConfigError> {
        self.model.validate()?;
        self.gen.validate().map_err(|e| RunConfigError::Invalid(e.to_string()))?;
        let fail = |msg: String| Err(RunConfigError::Invalid(msg));
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".to_string());
        }
        if self.train_negatives == 0 || self.eval_negatives == 0 {
            return fail("negative counts must be at least 1".to_string());
        }
        if self.ndcg_k == 0 {
            return fail("ndcg_k must be at least 1".to_string());
        }
        match (self.t_val, self.t_test) {
            (Some(a), Some(b)) if a >= b => {
                return fail(format!("t_val {a} must be earlier than t_test {b}"))
            }
            (Some(_), None) | (None, Some(_)) => {
                return fail("t_val and t_test must be set together".to_string())
            }
            _ => {}
        }
        if !(0.0 < self.split_val && self.split_val < self.split_test && self.split_test < 1.0) {
            return fail(format!(
                "split quantiles must satisfy 0 < val < test < 1, got {} and {}",
                self.split_val, self.split_test
            ));
        }
        if self.protocol == ProtocolKind::Truncate && self.truncate_k == 0 {
            return fail("truncate_k must be at least 1".to_string());
        }
        if let Some(a) = self.fixed_alpha {
            if !(0.0..=1.0).contains(&a) {
                return fail(format!("fixed_alpha must lie in [0,1], got {a}"));
            }
        }
        if self.sweep_alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return fail("sweep_alphas must lie in [0,1]".to_string());
        }
        if self.truncate_ks.is_empty() || self.truncate_ks.contains(&0) {
            return fail("truncate_ks must be nonempty positive lengths".to_string());
        }
        Ok(())
    }

    /// Full resolved configuration as sorted key=value pairs; the echo
    /// written into every output file. Unset optional keys are omitted,
    /// and parsing the echo back reproduces this config exactly.
    pub fn echo_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("embed_dim", self.model.embed_dim.to_string());
        put("recent_window", self.model.recent_window.to_string());
        put("proxy_threshold", self.model.proxy_threshold.to_string());
        put(
            "contrastive_weight",
            self.model.contrastive_weight.to_string(),
        );
        put("l2_weight", self.model.l2_weight.to_string());
        put("margin", self.model.margin.to_string());
        put("contrastive", self.model.contrastive.as_str().to_string());
        put("rnn_cell", self.model.rnn_cell.as_str().to_string());
        put("attention", self.model.attention.as_str().to_string());
        put("evolution", self.model.evolution.to_string());
        put("fusion_gru", self.model.fusion_gru.to_string());
        put("max_seq_len", self.model.max_seq_len.to_string());
        put("pred_hidden", join_list(&self.model.pred_hidden));
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("patience", self.patience.to_string());
        put("seed", self.seed.to_string());
        put("train_negatives", self.train_negatives.to_string());
        put("eval_negatives", self.eval_negatives.to_string());
        put("ndcg_k", self.ndcg_k.to_string());
        if let Some(p) = &self.data_path {
            put("data_path", p.display().to_string());
        }
        if let Some(p) = &self.drivers_path {
            put("drivers_path", p.display().to_string());
        }
        put(
            "behavior_filter",
            match &self.behavior_filter {
                BehaviorFilter::All => "all".to_string(),
                BehaviorFilter::Tag(t) => t.clone(),
            },
        );
        put("core_threshold", self.core_threshold.to_string());
        if let Some(t) = self.t_val {
            put("t_val", t.to_string());
        }
        if let Some(t) = self.t_test {
            put("t_test", t.to_string());
        }
        put("split_val", self.split_val.to_string());
        put("split_test", self.split_test.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("eval_split", self.eval_split.as_str().to_string());
        put(
            "protocol",
            match self.protocol {
                ProtocolKind::None => "none",
                ProtocolKind::Shuffle => "shuffle",
                ProtocolKind::Truncate => "truncate",
            }
            .to_string(),
        );
        put("protocol_seed", self.protocol_seed.to_string());
        put("truncate_k", self.truncate_k.to_string());
        put("side", self.side.as_str().to_string());
        if let Some(a) = self.fixed_alpha {
            put("fixed_alpha", a.to_string());
        }
        put("sweep_alphas", join_list(&self.sweep_alphas));
        put("truncate_ks", join_list(&self.truncate_ks));
        put("gen_users", self.gen.n_users.to_string());
        put("gen_items", self.gen.n_items.to_string());
        put("gen_topics", self.gen.n_topics.to_string());
        put("gen_items_per_topic", self.gen.items_per_topic.to_string());
        put("gen_seq_min", self.gen.seq_len_min.to_string());
        put("gen_seq_max", self.gen.seq_len_max.to_string());
        put("gen_w_long", self.gen.w_long.to_string());
        put("gen_drift", self.gen.drift_rate.to_string());
        m
    }

    pub fn echo_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.echo_map() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// Expand a config file into a run grid: values containing `|` split
/// into variants, and the grid is their cartesian product in key
/// order. Keys without `|` are shared by every run.
pub fn expand_grid(text: &str) -> Result<Vec<BTreeMap<String, String>>, RunConfigError> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(RunConfigError::BadLine(i + 1))?;
        let variants: Vec<String> = value.split('|').map(|v| v.trim().to_string()).collect();
        axes.push((key.trim().to_string(), variants));
    }
    let mut runs: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
    for (key, variants) in axes {
        let mut next = Vec::with_capacity(runs.len() * variants.len());
        for run in &runs {
            for v in &variants {
                let mut grown = run.clone();
                grown.insert(key.clone(), v.clone());
                next.push(grown);
            }
        }
        runs = next;
    }
    // Reject grids that do not form valid configs up front.
    for run in &runs {
        let mut probe = RunConfig::default();
        for (k, v) in run {
            probe.apply(k, v)?;
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips_through_the_parser() {
        let mut config = RunConfig::default();
        config
            .apply_text(
                "embed_dim=16\n\
                 # tuned down for a quick run\n\
                 contrastive=bpr\n\
                 pred_hidden=10,7\n\
                 data_path=data/things.csv\n\
                 fixed_alpha=0.25\n\
                 lr=0.01  # inline comment\n",
            )
            .unwrap();
        assert_eq!(config.model.embed_dim, 16);
        assert_eq!(config.model.contrastive, ContrastiveKind::Bpr);
        assert_eq!(config.model.pred_hidden, vec![10, 7]);
        assert_eq!(config.lr, 0.01);
        let mut back = RunConfig::default();
        back.apply_text(&config.echo_text()).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.echo_text(), config.echo_text());
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        let mut config = RunConfig::default();
        let err = config.apply_text("learning_rate=0.1\n").unwrap_err();
        assert!(matches!(err, RunConfigError::UnknownKey(_)));
        let err = config.apply_text("just words\n").unwrap_err();
        assert!(matches!(err, RunConfigError::BadLine(1)));
        let err = config.apply_text("epochs=many\n").unwrap_err();
        assert!(matches!(err, RunConfigError::BadValue { .. }));
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut config = RunConfig::default();
        config.apply_text("lr=0.01\nseed=1\n").unwrap();
        config
            .apply_overrides(&["lr=0.5".to_string(), "batch_size=8".to_string()])
            .unwrap();
        assert_eq!(config.lr, 0.5);
        assert_eq!(config.seed, 1);
        assert_eq!(config.batch_size, 8);
    }

    #[test]
    fn validation_catches_inconsistent_settings() {
        let mut config = RunConfig::default();
        config.apply("lr", "0").unwrap();
        assert!(config.validate().is_err());
        let mut config = RunConfig::default();
        config.apply("t_val", "100").unwrap();
        assert!(config.validate().is_err());
        config.apply("t_test", "50").unwrap();
        assert!(config.validate().is_err());
        config.apply("t_test", "200").unwrap();
        config.validate().unwrap();
    }

    #[test]
    fn grid_expansion_is_a_cartesian_product() {
        let runs = expand_grid(
            "lr=0.001|0.01\n\
             embed_dim=8|16|32\n\
             seed=7\n",
        )
        .unwrap();
        assert_eq!(runs.len(), 6);
        assert!(runs.iter().all(|r| r["seed"] == "7"));
        let lrs: Vec<&str> = runs.iter().map(|r| r["lr"].as_str()).collect();
        assert_eq!(lrs, vec!["0.001", "0.001", "0.001", "0.01", "0.01", "0.01"]);
        let pairs: std::collections::HashSet<(&str, &str)> = runs
            .iter()
            .map(|r| (r["lr"].as_str(), r["embed_dim"].as_str()))
            .collect();
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn grid_with_bad_values_fails_up_front() {
        assert!(expand_grid("lr=0.1|fast\n").is_err());
        assert!(expand_grid("mystery=1\n").is_err());
    }
}
