//! Run configuration: profile defaults, TOML overlay, canonical hashing.
//!
//! A config file only needs the keys it wants to change; everything else
//! comes from the chosen profile. The `paper` profile carries the published
//! hyperparameters (batch 30, SGD momentum 0.9, weight decay 5e-4, initial
//! learning rate 1e-3 with a 0.1 decay every 6 epochs, 20 pretraining and 25
//! finetuning epochs, bank capacity 16384, teacher momentum 0.999,
//! temperatures 0.02, K=16, Z=4, Q=4, crop 112). The `desk` profile trades
//! them for settings that train on a laptop CPU in minutes.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentPolicy;
use crate::distill::DistillHyper;
use crate::models::{EncoderConfig, EncoderFamily, HeadDims};
use crate::pretext::VsppLossWeights;
use crate::sampling::SamplerParams;

use super::CliError;

pub const ENV_DATA_ROOT: &str = "SEGPACE_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Aux,
    Vspp,
    Finetune,
    Evaluate,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Aux => write!(f, "aux"),
            Stage::Vspp => write!(f, "vspp"),
            Stage::Finetune => write!(f, "finetune"),
            Stage::Evaluate => write!(f, "evaluate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Manifest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    /// Manifest path for `source = "manifest"`; relative paths resolve under
    /// the SEGPACE_DATA_ROOT environment variable when it is set.
    pub manifest: String,
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    pub base_speed_min: f32,
    pub base_speed_max: f32,
    /// Dataset seed, independent of the run seed so matched-seed A/B runs
    /// share one dataset.
    pub data_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub clip_len: usize,
    pub segments: usize,
    pub max_rate: usize,
}

impl SamplerConfig {
    pub fn params(&self, num_frames: usize) -> Result<SamplerParams, crate::sampling::SamplingError> {
        SamplerParams::new(num_frames, self.clip_len, self.segments, self.max_rate)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub family: EncoderFamily,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub temporal_stride_from: usize,
    pub embed_dim: usize,
    pub predictor_hidden: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_epochs: usize,
    pub sgd_momentum: f32,
    pub weight_decay: f32,
}

impl OptimConfig {
    pub fn lr_at(&self, epoch: usize) -> f32 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_epochs.max(1)) as i32)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillSection {
    pub bank_capacity: usize,
    pub teacher_momentum: f32,
    pub gamma_teacher: f32,
    pub gamma_student: f32,
}

impl DistillSection {
    pub fn hyper(&self) -> DistillHyper {
        DistillHyper {
            teacher_momentum: self.teacher_momentum,
            gamma_teacher: self.gamma_teacher,
            gamma_student: self.gamma_student,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretextSection {
    pub alpha: f32,
    pub beta: f32,
    /// Validation clips drawn per held-out video each epoch.
    pub val_draws_per_video: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneSection {
    pub epochs: usize,
    pub lr: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSection {
    pub clips_per_video: usize,
}

/// The fully resolved configuration; serialized verbatim into every
/// artifact a run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub stage: Stage,
    pub seed: u64,
    pub out_dir: String,
    pub data: DataConfig,
    pub sampler: SamplerConfig,
    pub augment: AugmentPolicy,
    pub model: ModelSection,
    pub optim: OptimConfig,
    pub distill: DistillSection,
    pub pretext: PretextSection,
    pub finetune: FinetuneSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn defaults(profile: Profile) -> Self {
        let desk = matches!(profile, Profile::Desk);
        RunConfig {
            profile,
            stage: Stage::Vspp,
            seed: 7,
            out_dir: "runs".into(),
            data: DataConfig {
                source: DataSource::Synthetic,
                manifest: String::new(),
                num_classes: 4,
                videos_per_class: 50,
                frames_per_video: if desk { 24 } else { 64 },
                frame_size: if desk { 32 } else { 128 },
                base_speed_min: 0.9,
                base_speed_max: 1.5,
                data_seed: 1000,
            },
            sampler: SamplerConfig {
                clip_len: if desk { 8 } else { 16 },
                segments: 4,
                max_rate: 4,
            },
            augment: if desk { AugmentPolicy::desk() } else { AugmentPolicy::paper() },
            model: ModelSection {
                family: EncoderFamily::Plain3d,
                stage_widths: vec![16, 32, 64, 128],
                blocks_per_stage: 1,
                temporal_stride_from: 3,
                embed_dim: 128,
                predictor_hidden: 1024,
            },
            optim: OptimConfig {
                batch_size: if desk { 8 } else { 30 },
                epochs: 20,
                lr: if desk { 1e-2 } else { 1e-3 },
                lr_decay: 0.1,
                lr_decay_epochs: if desk { 12 } else { 6 },
                sgd_momentum: 0.9,
                weight_decay: 5e-4,
            },
            distill: DistillSection {
                bank_capacity: if desk { 1024 } else { 16384 },
                teacher_momentum: if desk { 0.99 } else { 0.999 },
                gamma_teacher: 0.02,
                gamma_student: 0.02,
            },
            pretext: PretextSection { alpha: 1.0, beta: 1.0, val_draws_per_video: 8 },
            finetune: FinetuneSection {
                epochs: if desk { 10 } else { 25 },
                lr: if desk { 3e-2 } else { 3e-3 },
            },
            eval: EvalSection { clips_per_video: 10 },
        }
    }

    /// Parse a TOML file as an overlay on the profile defaults. The file's
    /// own `profile` key picks the default set unless `profile_override`
    /// is given.
    pub fn from_toml_str(
        text: &str,
        profile_override: Option<Profile>,
    ) -> Result<Self, CliError> {
        let user: toml::Value =
            toml::from_str(text).map_err(|e| CliError::Toml(e.to_string()))?;
        let profile = match profile_override {
            Some(p) => p,
            None => match user.get("profile").and_then(|v| v.as_str()) {
                Some("paper") => Profile::Paper,
                Some("desk") | None => Profile::Desk,
                Some(other) => {
                    return Err(CliError::Config(format!("unknown profile `{other}`")))
                }
            },
        };
        let mut merged = toml::Value::try_from(Self::defaults(profile))
            .map_err(|e| CliError::Toml(e.to_string()))?;
        merge_toml(&mut merged, &user);
        if let Some(p) = profile_override {
            // The override also wins over the file's own profile key.
            if let Some(table) = merged.as_table_mut() {
                table.insert(
                    "profile".into(),
                    toml::Value::try_from(p).map_err(|e| CliError::Toml(e.to_string()))?,
                );
            }
        }
        let config: RunConfig =
            merged.try_into().map_err(|e: toml::de::Error| CliError::Toml(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(
        path: &std::path::Path,
        profile_override: Option<Profile>,
    ) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, profile_override)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sampler.clip_len % self.sampler.segments != 0 {
            return Err(CliError::Config(format!(
                "sampler.clip_len {} must be divisible by sampler.segments {}",
                self.sampler.clip_len, self.sampler.segments
            )));
        }
        if self.sampler.clip_len > self.data.frames_per_video
            && matches!(self.data.source, DataSource::Synthetic)
        {
            return Err(CliError::Config(format!(
                "clip_len {} exceeds frames_per_video {}",
                self.sampler.clip_len, self.data.frames_per_video
            )));
        }
        if self.augment.crop_size > self.data.frame_size
            && matches!(self.data.source, DataSource::Synthetic)
        {
            return Err(CliError::Config(format!(
                "crop {} exceeds frame size {}",
                self.augment.crop_size, self.data.frame_size
            )));
        }
        if self.optim.batch_size < 2 {
            return Err(CliError::Config("batch_size must be >= 2 (batch norm)".into()));
        }
        Ok(())
    }

    /// Canonical serialized form: what gets hashed and embedded in
    /// artifacts. The output directory is a runtime location rather than an
    /// experiment parameter, so it is normalized away — matched runs in
    /// different directories produce byte-identical artifacts.
    pub fn to_canonical_toml(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = String::new();
        toml::to_string(&canonical).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_toml().as_bytes());
        hex_string(&digest)
    }

    /// Collision-resistant directory name for this run.
    pub fn run_id(&self) -> String {
        format!("{}-s{}-{}", self.stage, self.seed, &self.hash()[..8])
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            family: self.model.family,
            stage_widths: self.model.stage_widths.clone(),
            blocks_per_stage: self.model.blocks_per_stage,
            temporal_stride_from: self.model.temporal_stride_from,
            clip_frames: self.sampler.clip_len,
            clip_size: self.augment.crop_size,
        }
    }

    pub fn head_dims(&self) -> HeadDims {
        HeadDims { embed_dim: self.model.embed_dim, predictor_hidden: self.model.predictor_hidden }
    }

    pub fn loss_weights(&self) -> VsppLossWeights {
        VsppLossWeights { alpha: self.pretext.alpha, beta: self.pretext.beta }
    }

    pub fn synth_spec(&self) -> crate::dataio::SynthSpec {
        crate::dataio::SynthSpec {
            num_classes: self.data.num_classes,
            videos_per_class: self.data.videos_per_class,
            frames_per_video: self.data.frames_per_video,
            frame_size: self.data.frame_size,
            base_speed_range: (self.data.base_speed_min, self.data.base_speed_max),
            seed: self.data.data_seed,
        }
    }

    /// Open the configured dataset.
    pub fn load_dataset(&self) -> Result<crate::dataio::Dataset, CliError> {
        match self.data.source {
            DataSource::Synthetic => Ok(crate::dataio::generate_synth_dataset(&self.synth_spec())?),
            DataSource::Manifest => {
                let mut path = PathBuf::from(&self.data.manifest);
                if path.is_relative() {
                    if let Ok(root) = std::env::var(ENV_DATA_ROOT) {
                        path = PathBuf::from(root).join(path);
                    }
                }
                Ok(crate::dataio::load_manifest(&path)?)
            }
        }
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Recursively overlay `user` onto `base`; user scalars and arrays replace,
/// user tables merge key by key.
fn merge_toml(base: &mut toml::Value, user: &toml::Value) {
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) => {
            for (key, value) in u {
                match b.get_mut(key) {
                    Some(existing) => merge_toml(existing, value),
                    None => {
                        b.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}
