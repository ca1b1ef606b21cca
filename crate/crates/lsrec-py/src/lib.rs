//! Python bindings: corpus synthesis plus a train/evaluate session
//! wrapping the core crate. The surface mirrors the CLI verbs.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use lsrec::data::{
    self, BehaviorFilter, Format, GeneratorConfig, Split, SplitBoundaries, TrainingExample,
};
use lsrec::eval::{self, ProtocolSpec, Side};
use lsrec::model::{checkpoint, ContrastiveKind, ModelConfig};
use lsrec::train::Trainer;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_side(s: &str) -> PyResult<Side> {
    match s {
        "long" => Ok(Side::Long),
        "short" => Ok(Side::Short),
        "both" => Ok(Side::Both),
        other => Err(value_err(format!(
            "unknown side {other:?}, expected long|short|both"
        ))),
    }
}

/// Generate a synthetic interaction corpus and write
/// `interactions.csv` plus `drivers.csv` into `out_dir`.
/// Returns the number of interactions written.
#[pyfunction]
#[pyo3(signature = (
    out_dir,
    n_users = 60,
    n_items = 200,
    n_topics = 10,
    items_per_topic = 20,
    seq_len_min = 15,
    seq_len_max = 25,
    w_long = 0.5,
    drift_rate = 0.2,
    seed = 7,
))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    out_dir: PathBuf,
    n_users: usize,
    n_items: usize,
    n_topics: usize,
    items_per_topic: usize,
    seq_len_min: usize,
    seq_len_max: usize,
    w_long: f64,
    drift_rate: f64,
    seed: u64,
) -> PyResult<usize> {
    let cfg = GeneratorConfig {
        n_users,
        n_items,
        n_topics,
        items_per_topic,
        seq_len_min,
        seq_len_max,
        w_long,
        drift_rate,
    };
    let (records, labels) = data::synthesize(&cfg, seed).map_err(value_err)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    data::write_interactions(&out_dir.join("interactions.csv"), &records).map_err(runtime_err)?;
    data::write_drivers(&out_dir.join("drivers.csv"), &labels).map_err(runtime_err)?;
    Ok(records.len())
}

/// A loaded corpus plus a model and optimizer. Construct it from CSV
/// paths, call `train`, then `evaluate` or `save`.
#[pyclass]
struct Session {
    trainer: Trainer,
    train_set: Vec<TrainingExample>,
    val_set: Vec<TrainingExample>,
    test_set: Vec<TrainingExample>,
    tags: Vec<String>,
    ndcg_k: usize,
}

impl Session {
    fn split(&self, name: &str) -> PyResult<&[TrainingExample]> {
        match name {
            "train" => Ok(&self.train_set),
            "val" => Ok(&self.val_set),
            "test" => Ok(&self.test_set),
            other => Err(value_err(format!(
                "unknown split {other:?}, expected train|val|test"
            ))),
        }
    }
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (
        data_path,
        drivers_path = None,
        behavior = "click",
        core_threshold = 1,
        embed_dim = 16,
        contrastive = "triplet",
        contrastive_weight = 0.1,
        margin = 1.0,
        lr = 0.001,
        seed = 7,
        max_seq_len = 50,
        train_negatives = 9,
        eval_negatives = 49,
        ndcg_k = 2,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        data_path: PathBuf,
        drivers_path: Option<PathBuf>,
        behavior: &str,
        core_threshold: usize,
        embed_dim: usize,
        contrastive: &str,
        contrastive_weight: f64,
        margin: f64,
        lr: f64,
        seed: u64,
        max_seq_len: usize,
        train_negatives: usize,
        eval_negatives: usize,
        ndcg_k: usize,
    ) -> PyResult<Session> {
        let filter = match behavior {
            "all" => BehaviorFilter::All,
            tag => BehaviorFilter::Tag(tag.to_string()),
        };
        let records = data::load_interactions(&data_path, Format::from_path(&data_path), &filter)
            .map_err(value_err)?;
        let records = data::core_filter(records, core_threshold);
        let drivers = match &drivers_path {
            Some(p) => data::load_drivers(p).map_err(value_err)?,
            None => Vec::new(),
        };
        let ds = data::build_dataset(&records, &drivers, &SplitBoundaries::default())
            .map_err(value_err)?;

        let kind = ContrastiveKind::parse(contrastive)
            .ok_or_else(|| value_err(format!("unknown contrastive kind {contrastive:?}")))?;
        let config = ModelConfig {
            embed_dim,
            contrastive_weight,
            margin,
            contrastive: kind,
            max_seq_len,
            pred_hidden: vec![2 * embed_dim, embed_dim],
            ..ModelConfig::default()
        };

        let train_set = data::build_examples(&ds, Split::Train, train_negatives, max_seq_len, seed)
            .map_err(value_err)?;
        let val_set = data::build_examples(&ds, Split::Val, eval_negatives, max_seq_len, seed)
            .map_err(value_err)?;
        let test_set = data::build_examples(&ds, Split::Test, eval_negatives, max_seq_len, seed)
            .map_err(value_err)?;

        let trainer =
            Trainer::new(&config, ds.n_users(), ds.n_items(), seed, lr).map_err(value_err)?;
        Ok(Session {
            trainer,
            train_set,
            val_set,
            test_set,
            tags: ds.behavior_tags,
            ndcg_k,
        })
    }

    /// Run `epochs` passes over the training split. Returns one dict
    /// per epoch with the mean loss terms over that epoch's steps.
    #[pyo3(signature = (epochs = 1, batch_size = 32))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        epochs: usize,
        batch_size: usize,
    ) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for _ in 0..epochs {
            let mut steps = 0u64;
            let mut joint = 0.0;
            let mut rec = 0.0;
            let mut con = 0.0;
            let stats = self
                .trainer
                .run_epoch(&self.train_set, batch_size, |r| {
                    steps += 1;
                    joint += r.joint;
                    rec += r.rec_mean;
                    con += r.con_mean;
                    Ok(())
                })
                .map_err(runtime_err)?;
            let n = steps.max(1) as f64;
            let row = PyDict::new(py);
            row.set_item("epoch", stats.epoch)?;
            row.set_item("steps", steps)?;
            row.set_item("joint", joint / n)?;
            row.set_item("rec", rec / n)?;
            row.set_item("con", con / n)?;
            out.append(row)?;
        }
        Ok(out)
    }

    /// Ranking metrics on one split. `side` forces the long-only or
    /// short-only interest pathway; `both` uses the learned fusion.
    #[pyo3(signature = (split = "test", side = "both"))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        split: &str,
        side: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let examples = self.split(split)?;
        let report = eval::evaluate(
            &self.trainer.model,
            examples,
            parse_side(side)?,
            &ProtocolSpec::none(),
            self.ndcg_k,
        )
        .map_err(runtime_err)?;
        let row = PyDict::new(py);
        row.set_item("instances", report.instances)?;
        row.set_item("users", report.users)?;
        row.set_item("auc", report.auc)?;
        row.set_item("gauc", report.gauc)?;
        row.set_item("mrr", report.mrr)?;
        row.set_item("ndcg", report.ndcg)?;
        row.set_item("ndcg_k", report.ndcg_k)?;
        Ok(row)
    }

    /// Mean fusion weight over positive candidates grouped by the
    /// ground-truth driver of the target, when driver labels exist.
    fn alpha_by_driver<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let stats = eval::alpha_stats(&self.trainer.model, &self.test_set, &self.tags)
            .map_err(runtime_err)?;
        let row = PyDict::new(py);
        for (driver, summary) in &stats.by_driver_positive {
            row.set_item(driver, summary.mean)?;
        }
        Ok(row)
    }

    /// Write a checkpoint restorable by the CLI `evaluate` and `suite`
    /// commands.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(
            Path::new(&path),
            &self.trainer.model,
            &self.trainer.adam,
            &self.trainer.progress,
            &self.trainer.rng_cursor(),
        )
        .map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(train={}, val={}, test={})",
            self.train_set.len(),
            self.val_set.len(),
            self.test_set.len()
        )
    }
}

#[pymodule]
fn lsrec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_class::<Session>()?;
    Ok(())
}
