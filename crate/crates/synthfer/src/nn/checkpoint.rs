//! Model persistence: `model.json` (architecture, seed, epoch, tensor
//! table, CRC32) plus `weights.bin` (little-endian f32).
//!
//! The weight file concatenates tensors in a documented, stable order —
//! for each block: bottleneck weight, branch 0–2 weights, pool-conv
//! weight, bn gamma/beta/running-mean/running-var, then (if present)
//! shortcut conv weight and shortcut bn gamma/beta/running-mean/
//! running-var; finally head weight and bias. Running statistics are
//! stored as f32 like everything else; loading re-widens them to f64.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{BatchNorm1d, Conv1d};
use crate::nn::{InceptionTime, InceptionTimeConfig, Scalar};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

const META_FILE: &str = "model.json";
const WEIGHTS_FILE: &str = "weights.bin";

/// Contents of `model.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub config: InceptionTimeConfig,
    /// Seed the parameters were originally initialized from.
    pub init_seed: u64,
    /// Number of completed training epochs at save time.
    pub epoch: usize,
    /// Length of the frozen block prefix.
    pub frozen_prefix: usize,
    /// Tensor table in file order.
    pub tensors: Vec<TensorEntry>,
    pub weights_len_bytes: u64,
    pub weights_crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

/// A tensor slot during checkpoint traversal: trainable parameters carry
/// the model scalar type, batch-norm running statistics are f64.
enum Slot<'a, S> {
    Params(&'a mut [S]),
    Stats(&'a mut [f64]),
}

impl<S> Slot<'_, S> {
    fn len(&self) -> usize {
        match self {
            Slot::Params(p) => p.len(),
            Slot::Stats(s) => s.len(),
        }
    }
}

/// Visits every persisted tensor in file order.
fn for_each_tensor<S: Scalar>(
    model: &mut InceptionTime<S>,
    f: &mut impl FnMut(String, Slot<'_, S>),
) {
    fn conv<S: Scalar>(name: String, c: &mut Conv1d<S>, f: &mut impl FnMut(String, Slot<'_, S>)) {
        f(format!("{name}.weight"), Slot::Params(&mut c.weight));
        if let Some(b) = &mut c.bias {
            f(format!("{name}.bias"), Slot::Params(b.as_mut_slice()));
        }
    }
    fn bn<S: Scalar>(name: String, b: &mut BatchNorm1d<S>, f: &mut impl FnMut(String, Slot<'_, S>)) {
        f(format!("{name}.gamma"), Slot::Params(&mut b.gamma));
        f(format!("{name}.beta"), Slot::Params(&mut b.beta));
        f(format!("{name}.running_mean"), Slot::Stats(&mut b.running_mean));
        f(format!("{name}.running_var"), Slot::Stats(&mut b.running_var));
    }

    for (d, block) in model.blocks.iter_mut().enumerate() {
        if let Some(b) = &mut block.bottleneck {
            conv(format!("block{d}.bottleneck"), b, f);
        }
        for (i, br) in block.branches.iter_mut().enumerate() {
            conv(format!("block{d}.branch{i}"), br, f);
        }
        conv(format!("block{d}.pool_conv"), &mut block.pool_conv, f);
        bn(format!("block{d}.bn"), &mut block.bn, f);
        if let Some((sc, sc_bn)) = &mut block.shortcut {
            conv(format!("block{d}.shortcut.conv"), sc, f);
            bn(format!("block{d}.shortcut.bn"), sc_bn, f);
        }
    }
    f("head.weight".into(), Slot::Params(&mut model.head.weight));
    f("head.bias".into(), Slot::Params(&mut model.head.bias));
}

/// Writes `model.json` and `weights.bin` into `dir` (created if missing).
pub fn save_checkpoint<S: Scalar>(
    model: &mut InceptionTime<S>,
    dir: &Path,
    epoch: usize,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    let mut hasher = crc32fast::Hasher::new();
    let mut bytes: Vec<u8> = Vec::new();
    for_each_tensor(model, &mut |name, slot| {
        tensors.push(TensorEntry { name, len: slot.len() });
        match slot {
            Slot::Params(p) => {
                for v in p.iter() {
                    bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
                }
            }
            Slot::Stats(s) => {
                for v in s.iter() {
                    bytes.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    });
    hasher.update(&bytes);
    let meta = CheckpointMeta {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config: model.cfg,
        init_seed: model.init_seed,
        epoch,
        frozen_prefix: model.blocks.iter().take_while(|b| b.frozen).count(),
        tensors,
        weights_len_bytes: bytes.len() as u64,
        weights_crc32: hasher.finalize(),
    };

    let mut w = BufWriter::new(fs::File::create(dir.join(WEIGHTS_FILE))?);
    w.write_all(&bytes)?;
    w.flush()?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Loads a checkpoint directory back into a model (plus its metadata).
///
/// Verifies the schema version, byte length, CRC32, and the tensor table
/// against the architecture before any value lands in the model.
pub fn load_checkpoint<S: Scalar>(dir: &Path) -> Result<(InceptionTime<S>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)
        .map_err(|e| Error::Manifest(format!("unreadable model.json: {e}")))?;
    if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported checkpoint schema {} (expected {CHECKPOINT_SCHEMA_VERSION})",
            meta.schema_version
        )));
    }
    let bytes = fs::read(dir.join(WEIGHTS_FILE))?;
    if bytes.len() as u64 != meta.weights_len_bytes {
        return Err(Error::DimensionMismatch(format!(
            "weights.bin holds {} bytes, manifest declares {}",
            bytes.len(),
            meta.weights_len_bytes
        )));
    }
    let actual_crc = crc32fast::hash(&bytes);
    if actual_crc != meta.weights_crc32 {
        return Err(Error::ChecksumMismatch { expected: meta.weights_crc32, actual: actual_crc });
    }

    let mut model: InceptionTime<S> = InceptionTime::new(meta.config, meta.init_seed)?;
    model.set_freeze(meta.frozen_prefix)?;

    let mut offset = 0usize; // in f32 elements
    let mut cursor = 0usize; // tensor table index
    let mut problem: Option<Error> = None;
    for_each_tensor(&mut model, &mut |name, slot| {
        if problem.is_some() {
            return;
        }
        let Some(entry) = meta.tensors.get(cursor) else {
            problem = Some(Error::Manifest(format!(
                "tensor table ended before model tensor {name}"
            )));
            return;
        };
        cursor += 1;
        if entry.name != name || entry.len != slot.len() {
            problem = Some(Error::Manifest(format!(
                "tensor table mismatch: file has {} ({} values), model expects {} ({} values)",
                entry.name,
                entry.len,
                name,
                slot.len()
            )));
            return;
        }
        let end = offset + slot.len() * 4;
        if end > bytes.len() {
            problem = Some(Error::DimensionMismatch(format!(
                "weights.bin too short for tensor {name}"
            )));
            return;
        }
        let mut chunk = bytes[offset..end].chunks_exact(4);
        match slot {
            Slot::Params(p) => {
                for v in p.iter_mut() {
                    let raw = chunk.next().unwrap();
                    *v = S::from_f64(f32::from_le_bytes(raw.try_into().unwrap()) as f64);
                }
            }
            Slot::Stats(s) => {
                for v in s.iter_mut() {
                    let raw = chunk.next().unwrap();
                    *v = f32::from_le_bytes(raw.try_into().unwrap()) as f64;
                }
            }
        }
        offset = end;
    });
    if let Some(e) = problem {
        return Err(e);
    }
    if cursor != meta.tensors.len() {
        return Err(Error::Manifest(format!(
            "tensor table has {} extra entries",
            meta.tensors.len() - cursor
        )));
    }
    if offset != bytes.len() {
        return Err(Error::DimensionMismatch(format!(
            "weights.bin has {} trailing bytes",
            bytes.len() - offset
        )));
    }
    Ok((model, meta))
}
