//! On-disk dataset format.
//!
//! A dataset is a directory holding `manifest.json` (schema version, seed,
//! counts, per-sequence records with byte offsets, CRC32 of the data file)
//! and `sequences.bin` (each record's `[T x 14]` values as little-endian
//! 32-bit floats, row-major, concatenated in record order).

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetMeta, LabeledSequence, Provenance, SequenceDataset};
use crate::error::{Error, Result};
use crate::signalgen::{EmotionLabel, Ethnicity, Gender, ViewingAngle, NUM_CHANNELS};

/// Current manifest schema version.
pub const DATASET_SCHEMA_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const DATA_FILE: &str = "sequences.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    name: String,
    seed: u64,
    description: String,
    total_sequences: usize,
    label_counts: BTreeMap<String, usize>,
    data_crc32: u32,
    data_len_bytes: u64,
    fold_of: Option<Vec<usize>>,
    records: Vec<Record>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    label: EmotionLabel,
    signal_id: String,
    identity_id: String,
    ethnicity: Ethnicity,
    gender: Gender,
    angle: ViewingAngle,
    provenance: Provenance,
    native_len: usize,
    len: usize,
    byte_offset: u64,
}

/// Writes a dataset into `dir` (created if missing) as
/// `manifest.json` + `sequences.bin`.
pub fn save_dataset(dataset: &SequenceDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut hasher = crc32fast::Hasher::new();
    let mut records = Vec::with_capacity(dataset.len());
    let mut offset = 0u64;
    {
        let file = std::fs::File::create(dir.join(DATA_FILE))?;
        let mut writer = BufWriter::new(file);
        for seq in &dataset.sequences {
            records.push(Record {
                id: seq.id.clone(),
                label: seq.label,
                signal_id: seq.signal_id.clone(),
                identity_id: seq.identity_id.clone(),
                ethnicity: seq.ethnicity,
                gender: seq.gender,
                angle: seq.angle,
                provenance: seq.provenance,
                native_len: seq.native_len,
                len: seq.len(),
                byte_offset: offset,
            });
            for row in &seq.values {
                for &v in row {
                    let bytes = v.to_le_bytes();
                    hasher.update(&bytes);
                    writer.write_all(&bytes)?;
                }
            }
            offset += (seq.len() * NUM_CHANNELS * 4) as u64;
        }
        writer.flush()?;
    }

    let mut label_counts = BTreeMap::new();
    for (label, &count) in EmotionLabel::ALL.iter().zip(&dataset.label_counts()) {
        label_counts.insert(label.name().to_string(), count);
    }
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA_VERSION,
        name: dataset.meta.name.clone(),
        seed: dataset.meta.seed,
        description: dataset.meta.description.clone(),
        total_sequences: dataset.len(),
        label_counts,
        data_crc32: hasher.finalize(),
        data_len_bytes: offset,
        fold_of: dataset.fold_of.clone(),
        records,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

/// Loads a dataset previously written by [`save_dataset`].
///
/// A corrupt manifest, a data file whose checksum does not match, and
/// records whose offsets or lengths disagree with the data file all fail
/// with distinct errors; no partial dataset is ever returned.
pub fn load_dataset(dir: &Path) -> Result<SequenceDataset> {
    let manifest_text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::Manifest(format!("{} is not a valid manifest: {e}", MANIFEST_FILE)))?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported schema version {} (expected {DATASET_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.records.len() != manifest.total_sequences {
        return Err(Error::Manifest(format!(
            "manifest lists {} records but declares {} sequences",
            manifest.records.len(),
            manifest.total_sequences
        )));
    }
    if let Some(fold_of) = &manifest.fold_of {
        if fold_of.len() != manifest.records.len() {
            return Err(Error::Manifest(format!(
                "fold assignment covers {} of {} sequences",
                fold_of.len(),
                manifest.records.len()
            )));
        }
    }

    let data = std::fs::read(dir.join(DATA_FILE))?;
    if data.len() as u64 != manifest.data_len_bytes {
        return Err(Error::DimensionMismatch(format!(
            "{DATA_FILE} holds {} bytes, manifest declares {}",
            data.len(),
            manifest.data_len_bytes
        )));
    }
    let actual_crc = crc32fast::hash(&data);
    if actual_crc != manifest.data_crc32 {
        return Err(Error::ChecksumMismatch { expected: manifest.data_crc32, actual: actual_crc });
    }

    let mut sequences = Vec::with_capacity(manifest.records.len());
    let mut expected_offset = 0u64;
    for record in &manifest.records {
        if record.byte_offset != expected_offset {
            return Err(Error::DimensionMismatch(format!(
                "record {} declares byte offset {}, expected {}",
                record.id, record.byte_offset, expected_offset
            )));
        }
        let n_bytes = record.len * NUM_CHANNELS * 4;
        let start = expected_offset as usize;
        let end = start + n_bytes;
        if end > data.len() {
            return Err(Error::DimensionMismatch(format!(
                "record {} extends past the end of {DATA_FILE}",
                record.id
            )));
        }
        let mut values = Vec::with_capacity(record.len);
        for t in 0..record.len {
            let row_start = start + t * NUM_CHANNELS * 4;
            values.push(std::array::from_fn(|c| {
                let p = row_start + c * 4;
                f32::from_le_bytes([data[p], data[p + 1], data[p + 2], data[p + 3]])
            }));
        }
        sequences.push(LabeledSequence {
            id: record.id.clone(),
            values,
            label: record.label,
            signal_id: record.signal_id.clone(),
            identity_id: record.identity_id.clone(),
            gender: record.gender,
            ethnicity: record.ethnicity,
            angle: record.angle,
            provenance: record.provenance,
            native_len: record.native_len,
        });
        expected_offset = end as u64;
    }
    if expected_offset != manifest.data_len_bytes {
        return Err(Error::DimensionMismatch(format!(
            "records cover {} bytes but {DATA_FILE} holds {}",
            expected_offset, manifest.data_len_bytes
        )));
    }

    let meta = DatasetMeta {
        name: manifest.name,
        seed: manifest.seed,
        description: manifest.description,
    };
    let mut dataset = SequenceDataset::new(meta, sequences)?;
    dataset.fold_of = manifest.fold_of;
    Ok(dataset)
}
