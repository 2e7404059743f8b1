//! Checkpoint format.
//!
//! JSON with tensors as base64-encoded little-endian f32 blobs inside
//! BTreeMaps, so serialization is deterministic and a save/load/save
//! round-trip is byte-identical. A checkpoint carries everything a resumed
//! run needs to reproduce the uninterrupted run exactly: model parameters,
//! normalization buffers, optimizer velocity, the memory bank (stage 1),
//! counters, and the config snapshot. Random streams are key-derived from
//! (seed, epoch, ...), so the seed plus counters fully restore them.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::distill::MemoryBank;
use crate::models::EncoderConfig;
use crate::nn::{BufferSet, ParamSet};

use super::CliError;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorBlob {
    pub shape: Vec<usize>,
    pub data: String,
}

impl TensorBlob {
    pub fn from_slice(shape: &[usize], values: &[f32]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self { shape: shape.to_vec(), data: BASE64.encode(bytes) }
    }

    pub fn to_vec(&self) -> Result<Vec<f32>, CliError> {
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| CliError::Checkpoint(format!("bad tensor data: {e}")))?;
        if bytes.len() % 4 != 0 || bytes.len() / 4 != self.shape.iter().product::<usize>() {
            return Err(CliError::Checkpoint(format!(
                "tensor byte length {} does not match shape {:?}",
                bytes.len(),
                self.shape
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BankState {
    pub capacity: usize,
    pub dim: usize,
    pub cursor: usize,
    pub fill: usize,
    pub data: TensorBlob,
}

/// Counters that, together with the config seed, restore every random
/// stream (streams are derived per (seed, purpose, epoch, ...)).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RngStates {
    pub base_seed: u64,
    pub epochs_completed: usize,
    pub steps_completed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Producing stage: "aux", "vspp" or "finetune".
    pub stage: String,
    pub encoder_config: EncoderConfig,
    pub epoch: usize,
    pub step: u64,
    /// Primary network parameters (stage 1: the student).
    pub tensors: BTreeMap<String, TensorBlob>,
    pub buffers: BTreeMap<String, TensorBlob>,
    /// Stage-1 teacher state; absent elsewhere.
    pub teacher_tensors: Option<BTreeMap<String, TensorBlob>>,
    pub teacher_buffers: Option<BTreeMap<String, TensorBlob>>,
    pub optimizer_velocity: TensorBlob,
    pub bank: Option<BankState>,
    pub rng: RngStates,
    pub config_hash: String,
    pub config_toml: String,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CliError::Checkpoint(format!("corrupt checkpoint {}: {e}", path.display())))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CliError::Checkpoint(format!(
                "unsupported checkpoint format {} (expected {})",
                ckpt.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(ckpt)
    }
}

pub fn params_to_blobs(params: &ParamSet) -> BTreeMap<String, TensorBlob> {
    params
        .ids()
        .map(|id| {
            (
                params.name(id).to_string(),
                TensorBlob::from_slice(params.shape(id), params.slice(id)),
            )
        })
        .collect()
}

pub fn buffers_to_blobs(buffers: &BufferSet) -> BTreeMap<String, TensorBlob> {
    buffers
        .ids()
        .map(|id| {
            (
                buffers.name(id).to_string(),
                TensorBlob::from_slice(buffers.shape(id), buffers.slice(id)),
            )
        })
        .collect()
}

/// Overwrite every parameter of `params` from the blob map. The name sets
/// must match exactly; a missing or extra tensor means the checkpoint was
/// produced by a different architecture.
pub fn load_params_from_blobs(
    params: &mut ParamSet,
    blobs: &BTreeMap<String, TensorBlob>,
) -> Result<(), CliError> {
    if params.tensor_count() != blobs.len() {
        return Err(CliError::ConfigMismatch(
            "parameter set",
            format!("{} tensors in model, {} in checkpoint", params.tensor_count(), blobs.len()),
        ));
    }
    for id in params.ids().collect::<Vec<_>>() {
        let name = params.name(id).to_string();
        let blob = blobs.get(&name).ok_or_else(|| {
            CliError::ConfigMismatch("parameter set", format!("checkpoint lacks tensor {name}"))
        })?;
        if blob.shape != params.shape(id) {
            return Err(CliError::ConfigMismatch(
                "tensor shape",
                format!("{name}: {:?} vs {:?}", params.shape(id), blob.shape),
            ));
        }
        let values = blob.to_vec()?;
        params.slice_mut(id).copy_from_slice(&values);
    }
    Ok(())
}

pub fn load_buffers_from_blobs(
    buffers: &mut BufferSet,
    blobs: &BTreeMap<String, TensorBlob>,
) -> Result<(), CliError> {
    if buffers.tensor_count() != blobs.len() {
        return Err(CliError::ConfigMismatch(
            "buffer set",
            format!("{} buffers in model, {} in checkpoint", buffers.tensor_count(), blobs.len()),
        ));
    }
    for id in buffers.ids().collect::<Vec<_>>() {
        let name = buffers.name(id).to_string();
        let blob = blobs.get(&name).ok_or_else(|| {
            CliError::ConfigMismatch("buffer set", format!("checkpoint lacks buffer {name}"))
        })?;
        let values = blob.to_vec()?;
        if values.len() != buffers.slice(id).len() {
            return Err(CliError::ConfigMismatch(
                "buffer shape",
                format!("{name}: {:?} vs {:?}", buffers.shape(id), blob.shape),
            ));
        }
        buffers.slice_mut(id).copy_from_slice(&values);
    }
    Ok(())
}

/// Copy every `encoder.`-prefixed tensor and buffer from checkpoint blobs
/// into `model`, leaving head tensors untouched. Errors when the checkpoint
/// lacks an encoder tensor the model has, or shapes disagree.
pub fn copy_encoder_state(
    model: &mut crate::models::VideoModel,
    tensors: &BTreeMap<String, TensorBlob>,
    buffers: &BTreeMap<String, TensorBlob>,
) -> Result<(), CliError> {
    for id in model.params.ids().collect::<Vec<_>>() {
        let name = model.params.name(id).to_string();
        if !name.starts_with("encoder.") {
            continue;
        }
        let blob = tensors.get(&name).ok_or_else(|| {
            CliError::ConfigMismatch("encoder tensors", format!("checkpoint lacks {name}"))
        })?;
        if blob.shape != model.params.shape(id) {
            return Err(CliError::ConfigMismatch(
                "encoder tensor shape",
                format!("{name}: {:?} vs {:?}", model.params.shape(id), blob.shape),
            ));
        }
        let values = blob.to_vec()?;
        model.params.slice_mut(id).copy_from_slice(&values);
    }
    for id in model.buffers.ids().collect::<Vec<_>>() {
        let name = model.buffers.name(id).to_string();
        if !name.starts_with("encoder.") {
            continue;
        }
        let blob = buffers.get(&name).ok_or_else(|| {
            CliError::ConfigMismatch("encoder buffers", format!("checkpoint lacks {name}"))
        })?;
        let values = blob.to_vec()?;
        if values.len() != model.buffers.slice(id).len() {
            return Err(CliError::ConfigMismatch(
                "encoder buffer shape",
                format!("{name}: {:?} vs {:?}", model.buffers.shape(id), blob.shape),
            ));
        }
        model.buffers.slice_mut(id).copy_from_slice(&values);
    }
    Ok(())
}

pub fn bank_to_state(bank: &MemoryBank) -> BankState {
    let (storage, cursor, fill) = bank.raw_state();
    BankState {
        capacity: bank.capacity(),
        dim: bank.dim(),
        cursor,
        fill,
        data: TensorBlob::from_slice(&[bank.capacity(), bank.dim()], storage),
    }
}

pub fn bank_from_state(state: &BankState) -> Result<MemoryBank, CliError> {
    let storage = state.data.to_vec()?;
    if storage.len() != state.capacity * state.dim {
        return Err(CliError::Checkpoint("bank blob size mismatch".into()));
    }
    Ok(MemoryBank::from_raw_state(
        state.capacity,
        state.dim,
        storage,
        state.cursor,
        state.fill,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_from_scratch, EncoderFamily, HeadSpec};

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            family: EncoderFamily::Plain3d,
            stage_widths: vec![4, 8],
            blocks_per_stage: 1,
            temporal_stride_from: 2,
            clip_frames: 4,
            clip_size: 8,
        }
    }

    #[test]
    fn blob_round_trip_is_exact() {
        let values: Vec<f32> = vec![0.1, -3.25e-8, 1.0, f32::MIN_POSITIVE, 7.7e12];
        let blob = TensorBlob::from_slice(&[5], &values);
        assert_eq!(blob.to_vec().unwrap(), values);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = init_from_scratch(&tiny(), HeadSpec::Classify { classes: 3 }, 11);
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            stage: "finetune".into(),
            encoder_config: tiny(),
            epoch: 2,
            step: 17,
            tensors: params_to_blobs(&model.params),
            buffers: buffers_to_blobs(&model.buffers),
            teacher_tensors: None,
            teacher_buffers: None,
            optimizer_velocity: TensorBlob::from_slice(&[4], &[0.0, 1.0, -2.0, 0.5]),
            bank: None,
            rng: RngStates { base_seed: 11, epochs_completed: 2, steps_completed: 17 },
            config_hash: "deadbeef".into(),
            config_toml: "stage = \"finetune\"".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        ckpt.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn params_round_trip_through_blobs() {
        let model = init_from_scratch(&tiny(), HeadSpec::Classify { classes: 3 }, 5);
        let blobs = params_to_blobs(&model.params);
        let mut other = init_from_scratch(&tiny(), HeadSpec::Classify { classes: 3 }, 6);
        assert_ne!(model.params.data(), other.params.data());
        load_params_from_blobs(&mut other.params, &blobs).unwrap();
        assert_eq!(model.params.data(), other.params.data());
    }

    #[test]
    fn architecture_mismatch_is_detected() {
        let model = init_from_scratch(&tiny(), HeadSpec::Classify { classes: 3 }, 5);
        let blobs = params_to_blobs(&model.params);
        let mut bigger = tiny();
        bigger.stage_widths = vec![4, 16];
        let mut other = init_from_scratch(&bigger, HeadSpec::Classify { classes: 3 }, 6);
        assert!(load_params_from_blobs(&mut other.params, &blobs).is_err());
    }

    #[test]
    fn bank_state_round_trip() {
        use ndarray::Array2;
        let mut bank = MemoryBank::new(4, 2);
        let mut rows = Array2::<f32>::zeros((3, 2));
        for (i, x) in [0.6f32, 0.8, 1.0].iter().enumerate() {
            rows.row_mut(i).assign(&ndarray::arr1(&[*x, (1.0 - x * x).max(0.0).sqrt()]));
        }
        bank.enqueue(rows.view()).unwrap();
        let state = bank_to_state(&bank);
        let restored = bank_from_state(&state).unwrap();
        assert_eq!(restored.fill(), bank.fill());
        assert_eq!(restored.contents_in_age_order(), bank.contents_in_age_order());
    }
}
