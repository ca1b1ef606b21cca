//! Versioned binary checkpoints.
//!
//! Layout: the magic bytes `LSRK`, a little-endian u32 format version,
//! a little-endian u64 header length, a JSON header (model
//! hyperparameters, id-space sizes, training progress, RNG cursor,
//! optimizer step), then a tensor section. The tensor section is a
//! little-endian u64 block count followed by one block per tensor:
//! u16 name length, UTF-8 name, u8 rank, little-endian u64 dims,
//! little-endian f64 payload. Model tensors (batch-norm running stats
//! included) are stored under their parameter names; Adam moments
//! under `adam.m.<name>` and `adam.v.<name>`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamState, Tensor};

use super::config::ModelConfig;
use super::net::{Model, ModelError};

const MAGIC: &[u8; 4] = b"LSRK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("header encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

/// Where the training-loop RNG stands: the master seed plus the word
/// position of the shuffle stream, enough to resume sampling exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RngCursor {
    pub seed: u64,
    #[serde(with = "u128_as_string")]
    pub word_pos: u128,
}

mod u128_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        v.to_string().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Training-loop position for resumption and early stopping.
/// `best_metric` starts at negative infinity, which JSON cannot carry,
/// so it round-trips as an optional value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub epoch: usize,
    pub step: u64,
    #[serde(with = "metric_or_null")]
    pub best_metric: f64,
    pub bad_epochs: usize,
}

mod metric_or_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { Some(*v) } else { None }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl Default for TrainProgress {
    fn default() -> Self {
        TrainProgress {
            epoch: 0,
            step: 0,
            best_metric: f64::NEG_INFINITY,
            bad_epochs: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    n_users: usize,
    n_items: usize,
    progress: TrainProgress,
    rng: RngCursor,
    adam_step: u64,
}

/// Everything a resumed run needs.
pub struct Loaded {
    pub model: Model,
    pub adam: AdamState,
    pub progress: TrainProgress,
    pub rng: RngCursor,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<(), CheckpointError> {
    let bytes = name.as_bytes();
    assert!(bytes.len() <= u16::MAX as usize, "tensor name too long");
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    w.write_all(&[t.rank() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], CheckpointError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor), CheckpointError> {
    let name_len = u16::from_le_bytes(read_exact_array(r)?) as usize;
    let mut name_buf = vec![0u8; name_len];
    r.read_exact(&mut name_buf)?;
    let name = String::from_utf8(name_buf)
        .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
    let rank = read_exact_array::<R, 1>(r)?[0] as usize;
    if rank > 2 {
        return Err(CheckpointError::Corrupt(format!(
            "tensor {name} has rank {rank}"
        )));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(read_exact_array(r)?) as usize;
        shape.push(d);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(f64::from_le_bytes(read_exact_array(r)?));
    }
    let t = match shape.len() {
        0 => Tensor::scalar(data[0]),
        1 => Tensor::vector(data),
        _ => Tensor::matrix(shape[0], shape[1], data),
    };
    Ok((name, t))
}

/// Write a complete checkpoint to `path`.
pub fn save(
    path: &Path,
    model: &Model,
    adam: &AdamState,
    progress: &TrainProgress,
    rng: &RngCursor,
) -> Result<(), CheckpointError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        n_users: model.n_users,
        n_items: model.n_items,
        progress: *progress,
        rng: *rng,
        adam_step: adam.step,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;

    let trainable = model.store.trainable_names();
    let count = model.store.len() + 2 * trainable.len();
    w.write_all(&(count as u64).to_le_bytes())?;
    for e in model.store.entries() {
        write_tensor(&mut w, &e.name, &e.tensor)?;
    }
    assert_eq!(adam.m.len(), trainable.len(), "optimizer state misaligned");
    for (name, t) in trainable.iter().zip(&adam.m) {
        write_tensor(&mut w, &format!("adam.m.{name}"), t)?;
    }
    for (name, t) in trainable.iter().zip(&adam.v) {
        write_tensor(&mut w, &format!("adam.v.{name}"), t)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint and reconstruct the model and optimizer exactly.
/// Every parameter the rebuilt model expects must be present with a
/// matching shape, and no unknown tensor may remain.
pub fn load(path: &Path) -> Result<Loaded, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact_array::<_, 4>(&mut r)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(read_exact_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(read_exact_array(&mut r)?) as usize;
    let mut header_buf = vec![0u8; header_len];
    r.read_exact(&mut header_buf)?;
    let header: Header = serde_json::from_slice(&header_buf)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(header.format_version));
    }

    let count = u64::from_le_bytes(read_exact_array(&mut r)?) as usize;
    let mut blocks: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let (name, t) = read_tensor(&mut r)?;
        if blocks.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Corrupt(format!(
                "duplicate tensor block {name}"
            )));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }

    let mut model = Model::new(&header.config, header.n_users, header.n_items, header.rng.seed)?;
    let names: Vec<String> = model
        .store
        .entries()
        .iter()
        .map(|e| e.name.clone())
        .collect();
    for name in &names {
        let stored = blocks
            .remove(name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("missing tensor {name}")))?;
        let slot = model.store.get_mut(name);
        if stored.shape() != slot.shape() {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {name}: file shape {:?}, model shape {:?}",
                stored.shape(),
                slot.shape()
            )));
        }
        *slot = stored;
    }

    let mut adam = AdamState::new(&model.store);
    adam.step = header.adam_step;
    let trainable = model.store.trainable_names();
    for (i, name) in trainable.iter().enumerate() {
        for (prefix, dst) in [("adam.m", &mut adam.m), ("adam.v", &mut adam.v)] {
            let key = format!("{prefix}.{name}");
            let stored = blocks
                .remove(&key)
                .ok_or_else(|| CheckpointError::Mismatch(format!("missing tensor {key}")))?;
            if stored.shape() != dst[i].shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor {key}: file shape {:?}, model shape {:?}",
                    stored.shape(),
                    dst[i].shape()
                )));
            }
            dst[i] = stored;
        }
    }
    if let Some(name) = blocks.keys().next() {
        return Err(CheckpointError::Mismatch(format!(
            "unexpected tensor {name}"
        )));
    }

    Ok(Loaded {
        model,
        adam,
        progress: header.progress,
        rng: header.rng,
    })
}

/// Guard for resuming: the checkpoint must have been written by a run
/// with the same hyperparameters and id-space sizes.
pub fn expect_compatible(
    loaded: &Loaded,
    config: &ModelConfig,
    n_users: usize,
    n_items: usize,
) -> Result<(), CheckpointError> {
    if &loaded.model.config != config {
        return Err(CheckpointError::Mismatch(
            "model hyperparameters differ from the checkpoint".into(),
        ));
    }
    if loaded.model.n_users != n_users || loaded.model.n_items != n_items {
        return Err(CheckpointError::Mismatch(format!(
            "id space {}x{} differs from checkpoint {}x{}",
            n_users, n_items, loaded.model.n_users, loaded.model.n_items
        )));
    }
    Ok(())
}
