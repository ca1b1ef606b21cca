//! Mini-batch training loop: seeded shuffling, Adam updates, per-epoch
//! validation bookkeeping, and early stopping. All state needed to
//! resume bit-exactly lives in the trainer and serializes through
//! [`crate::model::checkpoint`].

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AdamConfig, AdamState};
use crate::data::TrainingExample;
use crate::eval::{self, EvalError, Side};
use crate::metrics::MetricsReport;
use crate::model::checkpoint::{Loaded, RngCursor, TrainProgress};
use crate::model::{ExampleView, Model, ModelConfig, ModelError};
use crate::seeding;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no training examples")]
    Empty,
}

/// One optimizer step as logged: losses are per-example means within
/// the batch, `con_mean` over the examples long enough to align.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub examples: usize,
    pub aligned: usize,
    pub joint: f64,
    pub rec_mean: f64,
    pub con_mean: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: u64,
    pub seconds: f64,
}

/// Model plus optimizer plus shuffle stream. The shuffle stream is the
/// only RNG the loop consumes, so persisting its word position is
/// enough to resume the exact batch order.
pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    pub adam_config: AdamConfig,
    pub progress: TrainProgress,
    pub seed: u64,
    shuffle: ChaCha8Rng,
}

impl Trainer {
    pub fn new(
        config: &ModelConfig,
        n_users: usize,
        n_items: usize,
        seed: u64,
        lr: f64,
    ) -> Result<Trainer, ModelError> {
        let model = Model::new(config, n_users, n_items, seed)?;
        let adam = AdamState::new(&model.store);
        Ok(Trainer {
            model,
            adam,
            adam_config: AdamConfig::with_lr(lr),
            progress: TrainProgress::default(),
            seed,
            shuffle: seeding::stream(seed, "train/shuffle"),
        })
    }

    /// Continue from a checkpoint; restores the shuffle stream to the
    /// exact word it would have reached.
    pub fn resume(loaded: Loaded, lr: f64) -> Trainer {
        let mut shuffle = seeding::stream(loaded.rng.seed, "train/shuffle");
        shuffle.set_word_pos(loaded.rng.word_pos);
        Trainer {
            model: loaded.model,
            adam: loaded.adam,
            adam_config: AdamConfig::with_lr(lr),
            progress: loaded.progress,
            seed: loaded.rng.seed,
            shuffle,
        }
    }

    pub fn rng_cursor(&self) -> RngCursor {
        RngCursor {
            seed: self.seed,
            word_pos: self.shuffle.get_word_pos(),
        }
    }

    /// One pass over the training set in a fresh shuffled order. The
    /// step callback sees every optimizer step in sequence.
    pub fn run_epoch(
        &mut self,
        train: &[TrainingExample],
        batch_size: usize,
        mut on_step: impl FnMut(&StepRecord) -> Result<(), TrainError>,
    ) -> Result<EpochStats, TrainError> {
        assert!(batch_size > 0, "batch_size must be positive");
        if train.is_empty() {
            return Err(TrainError::Empty);
        }
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.shuffle);
        let epoch = self.progress.epoch;
        let mut steps = 0u64;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<ExampleView> = chunk.iter().map(|&i| train[i].view()).collect();
            let stats = self
                .model
                .train_batch(&batch, &mut self.adam, &self.adam_config)?;
            self.progress.step += 1;
            steps += 1;
            let record = StepRecord {
                epoch,
                step: self.progress.step,
                examples: stats.examples,
                aligned: stats.aligned_examples,
                joint: stats.joint,
                rec_mean: stats.rec_sum / stats.examples as f64,
                con_mean: if stats.aligned_examples > 0 {
                    stats.con_sum / stats.aligned_examples as f64
                } else {
                    0.0
                },
            };
            on_step(&record)?;
        }
        self.progress.epoch += 1;
        Ok(EpochStats {
            epoch,
            steps,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Standard-path validation metrics (adaptive fusion, no protocol).
    pub fn validate(
        &self,
        val: &[TrainingExample],
        ndcg_k: usize,
    ) -> Result<MetricsReport, TrainError> {
        Ok(eval::one_side_eval(&self.model, val, Side::Both, ndcg_k)?)
    }

    /// Record the epoch's validation score. Returns true when it
    /// improves on the best so far; otherwise bumps the bad-epoch
    /// counter that [`Trainer::should_stop`] watches.
    pub fn observe_metric(&mut self, value: f64) -> bool {
        if value > self.progress.best_metric {
            self.progress.best_metric = value;
            self.progress.bad_epochs = 0;
            true
        } else {
            self.progress.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self, patience: usize) -> bool {
        self.progress.bad_epochs >= patience
    }
}
