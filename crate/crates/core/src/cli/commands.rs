//! Command implementations: the orchestration behind the binary.
//!
//! Each command resolves a config, derives a run id from its canonical hash,
//! and writes all artifacts under `<out_dir>/<run_id>/`. Pretraining
//! commands checkpoint after every epoch and can resume from a same-stage
//! checkpoint; the resumed run reproduces the uninterrupted run's metrics
//! exactly because all random streams are keyed by (seed, epoch, ...).

use std::path::{Path, PathBuf};

use ndarray::Array5;
use rand::seq::SliceRandom;

use crate::dataio::{Dataset, Split};
use crate::distill::{AuxTrainer, MemoryBank};
use crate::evalharness::{evaluate_split, EvalProtocol};
use crate::models::{init_from_scratch, make_aux_pair, HeadSpec, VideoModel};
use crate::nn::SgdMomentum;
use crate::pretext::{load_stage1_weights, PretextTrainer};
use crate::rngkey::{derive_rng, hash_str, tag};
use crate::sampling::{sample_vspp, SamplerParams, VsppSample};

use super::checkpoint::{
    bank_from_state, bank_to_state, buffers_to_blobs, load_buffers_from_blobs,
    load_params_from_blobs, params_to_blobs, Checkpoint, RngStates, TensorBlob,
    CHECKPOINT_FORMAT_VERSION,
};
use super::config::{RunConfig, Stage};
use super::metrics::{MetricsFile, MetricsWriter, MetricValue, METRICS_SCHEMA, RESULTS_SCHEMA};
use super::plot::plot_metrics_files;
use super::CliError;

/// Paths produced by one command invocation.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub metrics: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub results: Option<PathBuf>,
}

/// Run directory, namespaced by the config's run id plus a digest of the
/// starting checkpoint when one is given, so runs of one config initialized
/// from different checkpoints never collide.
fn run_dir(config: &RunConfig, init: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut name = config.run_id();
    if let Some(path) = init {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(std::fs::read(path)?);
        let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        name = format!("{name}-i{hex}");
    }
    let dir = PathBuf::from(&config.out_dir).join(name);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn shuffled_epoch_order(indices: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = indices.to_vec();
    let mut rng = derive_rng(seed, &[tag::SHUFFLE, epoch as u64]);
    order.shuffle(&mut rng);
    order
}

fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint_epoch{epoch:03}.json"))
}

/// Stage-1 pretraining over the configured dataset and schedule.
pub fn cmd_pretrain_aux(
    config: &RunConfig,
    resume: Option<&Path>,
) -> Result<RunArtifacts, CliError> {
    let mut config = config.clone();
    config.stage = Stage::Aux;
    config.validate()?;
    let dataset = config.load_dataset()?;
    let train = dataset.split_indices(Split::Train);
    let enc_cfg = config.encoder_config();
    let dims = config.head_dims();

    let (student, teacher) = make_aux_pair(&enc_cfg, dims, config.seed);
    let bank = MemoryBank::new(config.distill.bank_capacity, dims.embed_dim);
    let optimizer = SgdMomentum::new(config.optim.sgd_momentum, config.optim.weight_decay);
    let mut trainer = AuxTrainer::new(student, teacher, bank, optimizer, config.distill.hyper());

    let mut start_epoch = 0usize;
    if let Some(path) = resume {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.stage != "aux" {
            return Err(CliError::Checkpoint(format!(
                "cannot resume aux pretraining from a `{}` checkpoint",
                ckpt.stage
            )));
        }
        if ckpt.config_hash != config.hash() {
            return Err(CliError::ConfigMismatch(
                "resume config hash",
                format!("{} vs {}", ckpt.config_hash, config.hash()),
            ));
        }
        load_params_from_blobs(&mut trainer.student.params, &ckpt.tensors)?;
        load_buffers_from_blobs(&mut trainer.student.buffers, &ckpt.buffers)?;
        let t_tensors = ckpt
            .teacher_tensors
            .as_ref()
            .ok_or_else(|| CliError::Checkpoint("aux checkpoint lacks teacher tensors".into()))?;
        let t_buffers = ckpt
            .teacher_buffers
            .as_ref()
            .ok_or_else(|| CliError::Checkpoint("aux checkpoint lacks teacher buffers".into()))?;
        load_params_from_blobs(&mut trainer.teacher.params, t_tensors)?;
        load_buffers_from_blobs(&mut trainer.teacher.buffers, t_buffers)?;
        let bank_state = ckpt
            .bank
            .as_ref()
            .ok_or_else(|| CliError::Checkpoint("aux checkpoint lacks the memory bank".into()))?;
        trainer.bank = bank_from_state(bank_state)?;
        trainer.optimizer.load_velocity(ckpt.optimizer_velocity.to_vec()?);
        trainer.step = ckpt.step;
        start_epoch = ckpt.epoch;
    }

    let dir = run_dir(&config, resume)?;
    let mut metrics = MetricsWriter::create(
        &dir.join("metrics.csv"),
        METRICS_SCHEMA,
        "aux",
        &config.hash(),
        &config.to_canonical_toml(),
        &["step", "epoch", "kl_loss", "bank_fill", "lr", "prob_sum_err"],
    )?;
    let mut checkpoints = Vec::new();

    for epoch in start_epoch..config.optim.epochs {
        let lr = config.optim.lr_at(epoch);
        let order = shuffled_epoch_order(&train, config.seed, epoch);
        for chunk in order.chunks(config.optim.batch_size) {
            let batch: Vec<&crate::dataio::VideoSource> =
                chunk.iter().map(|&i| &dataset.videos[i]).collect();
            let sampler = config.sampler.params(config.data.frames_per_video)?;
            let stats =
                trainer.train_step(&batch, &sampler, &config.augment, config.seed, epoch, lr)?;
            metrics.write_row(&[
                stats.step.into(),
                stats.epoch.into(),
                stats.kl_loss.into(),
                stats.bank_fill.into(),
                stats.lr.into(),
                stats.prob_sum_err.into(),
            ])?;
        }
        metrics.flush()?;
        let path = checkpoint_path(&dir, epoch + 1);
        save_aux_checkpoint(&trainer, &config, epoch + 1, &path)?;
        checkpoints.push(path);
    }

    Ok(RunArtifacts { run_dir: dir, metrics: Some(metrics.path), checkpoints, results: None })
}

fn save_aux_checkpoint(
    trainer: &AuxTrainer,
    config: &RunConfig,
    epoch: usize,
    path: &Path,
) -> Result<(), CliError> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        stage: "aux".into(),
        encoder_config: config.encoder_config(),
        epoch,
        step: trainer.step,
        tensors: params_to_blobs(&trainer.student.params),
        buffers: buffers_to_blobs(&trainer.student.buffers),
        teacher_tensors: Some(params_to_blobs(&trainer.teacher.params)),
        teacher_buffers: Some(buffers_to_blobs(&trainer.teacher.buffers)),
        optimizer_velocity: TensorBlob::from_slice(
            &[trainer.optimizer.velocity().len()],
            trainer.optimizer.velocity(),
        ),
        bank: Some(bank_to_state(&trainer.bank)),
        rng: RngStates {
            base_seed: config.seed,
            epochs_completed: epoch,
            steps_completed: trainer.step,
        },
        config_hash: config.hash(),
        config_toml: config.to_canonical_toml(),
    };
    ckpt.save(path)
}

/// Fixed validation clip plans: independent of the epoch so accuracy is
/// comparable across epochs, keyed by the run seed for reproducibility.
struct ValSet {
    clips: Vec<Array5<f32>>,
    speed_labels: Vec<Vec<usize>>,
    segment_labels: Vec<Vec<usize>>,
}

fn build_val_set(
    dataset: &Dataset,
    config: &RunConfig,
    crop: usize,
) -> Result<ValSet, CliError> {
    let val = dataset.split_indices(Split::Val);
    let mut clips = Vec::new();
    let mut speeds = Vec::new();
    let mut segments = Vec::new();
    let mut batch_clips = Vec::new();
    let mut batch_speed = Vec::new();
    let mut batch_segment = Vec::new();
    let policy = crate::augment::AugmentPolicy::disabled(crop);
    for &index in &val {
        let video = &dataset.videos[index];
        let sampler = config.sampler.params(video.num_frames)?;
        for rep in 0..config.pretext.val_draws_per_video {
            let mut rng =
                derive_rng(config.seed, &[tag::VAL_DRAW, hash_str(&video.id), rep as u64]);
            let sample = sample_vspp(&sampler, &mut rng)?;
            let clip = crate::dataio::decode_clip(video, &sample)?;
            let cropped = crate::augment::center_crop(&clip, crop)
                .map_err(crate::pretext::PretextError::from)?;
            let _ = &policy;
            batch_clips.push(cropped);
            batch_speed.push(sample.speed_label);
            batch_segment.push(sample.segment_label);
            if batch_clips.len() == config.optim.batch_size {
                clips.push(crate::distill::stack_clips(&batch_clips));
                speeds.push(std::mem::take(&mut batch_speed));
                segments.push(std::mem::take(&mut batch_segment));
                batch_clips.clear();
            }
        }
    }
    if !batch_clips.is_empty() {
        clips.push(crate::distill::stack_clips(&batch_clips));
        speeds.push(batch_speed);
        segments.push(batch_segment);
    }
    Ok(ValSet { clips, speed_labels: speeds, segment_labels: segments })
}

fn validate_pretext(trainer: &PretextTrainer, val: &ValSet) -> Result<(f32, f32), CliError> {
    let mut speed_hits = 0.0f64;
    let mut seg_hits = 0.0f64;
    let mut count = 0usize;
    for ((clips, speeds), segments) in
        val.clips.iter().zip(&val.speed_labels).zip(&val.segment_labels)
    {
        let (_, _, speed_acc, seg_acc) = trainer.eval_on_clips(clips, speeds, segments)?;
        let b = clips.dim().0;
        speed_hits += speed_acc as f64 * b as f64;
        seg_hits += seg_acc as f64 * b as f64;
        count += b;
    }
    Ok((
        (speed_hits / count.max(1) as f64) as f32,
        (seg_hits / count.max(1) as f64) as f32,
    ))
}

/// Stage-2 pretraining; `checkpoint` may be a stage-1 checkpoint (the
/// initialized arm), a stage-2 checkpoint (resume), or absent (the ablation
/// arm trained from scratch).
pub fn cmd_pretrain_vspp(
    config: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<RunArtifacts, CliError> {
    let mut config = config.clone();
    config.stage = Stage::Vspp;
    config.validate()?;
    let dataset = config.load_dataset()?;
    let train = dataset.split_indices(Split::Train);
    let enc_cfg = config.encoder_config();
    let single_segment = config.sampler.segments == 1;

    let mut start_epoch = 0usize;
    let mut trainer = {
        let optimizer = SgdMomentum::new(config.optim.sgd_momentum, config.optim.weight_decay);
        let mut resume_state: Option<Checkpoint> = None;
        let model = match checkpoint {
            None => init_from_scratch(
                &enc_cfg,
                HeadSpec::Pretext {
                    speed_classes: config.sampler.max_rate,
                    segment_classes: config.sampler.segments,
                },
                config.seed,
            ),
            Some(path) => {
                let ckpt = Checkpoint::load(path)?;
                match ckpt.stage.as_str() {
                    "aux" => load_stage1_weights(
                        &ckpt,
                        &enc_cfg,
                        config.sampler.max_rate,
                        config.sampler.segments,
                        config.seed,
                    )?,
                    "vspp" => {
                        if ckpt.config_hash != config.hash() {
                            return Err(CliError::ConfigMismatch(
                                "resume config hash",
                                format!("{} vs {}", ckpt.config_hash, config.hash()),
                            ));
                        }
                        let mut model = init_from_scratch(
                            &enc_cfg,
                            HeadSpec::Pretext {
                                speed_classes: config.sampler.max_rate,
                                segment_classes: config.sampler.segments,
                            },
                            config.seed,
                        );
                        load_params_from_blobs(&mut model.params, &ckpt.tensors)?;
                        load_buffers_from_blobs(&mut model.buffers, &ckpt.buffers)?;
                        start_epoch = ckpt.epoch;
                        resume_state = Some(ckpt);
                        model
                    }
                    other => {
                        return Err(CliError::Checkpoint(format!(
                            "stage-2 pretraining cannot start from a `{other}` checkpoint"
                        )))
                    }
                }
            }
        };
        let mut trainer = PretextTrainer::new(model, optimizer, config.loss_weights());
        if let Some(ckpt) = resume_state {
            trainer.optimizer.load_velocity(ckpt.optimizer_velocity.to_vec()?);
            trainer.step = ckpt.step;
        }
        trainer
    };

    let dir = run_dir(&config, checkpoint)?;
    let header: Vec<&str> = if single_segment {
        vec!["epoch", "total_loss", "speed_loss", "speed_acc", "val_speed_acc", "lr"]
    } else {
        vec![
            "epoch",
            "total_loss",
            "speed_loss",
            "segment_loss",
            "speed_acc",
            "segment_acc",
            "val_speed_acc",
            "val_segment_acc",
            "lr",
        ]
    };
    let mut metrics = MetricsWriter::create(
        &dir.join("metrics.csv"),
        METRICS_SCHEMA,
        "vspp",
        &config.hash(),
        &config.to_canonical_toml(),
        &header,
    )?;
    let val_set = build_val_set(&dataset, &config, config.augment.crop_size)?;
    let mut checkpoints = Vec::new();

    for epoch in start_epoch..config.optim.epochs {
        let lr = config.optim.lr_at(epoch);
        let order = shuffled_epoch_order(&train, config.seed, epoch);
        let mut sums = [0.0f64; 5]; // total, speed, segment, speed_acc, seg_acc
        let mut seen = 0usize;
        for chunk in order.chunks(config.optim.batch_size) {
            let batch: Vec<&crate::dataio::VideoSource> =
                chunk.iter().map(|&i| &dataset.videos[i]).collect();
            let sampler = config.sampler.params(config.data.frames_per_video)?;
            let stats =
                trainer.train_step(&batch, &sampler, &config.augment, config.seed, epoch, lr)?;
            let b = chunk.len() as f64;
            sums[0] += stats.total_loss as f64 * b;
            sums[1] += stats.speed_loss as f64 * b;
            sums[2] += stats.segment_loss as f64 * b;
            sums[3] += stats.speed_acc as f64 * b;
            sums[4] += stats.segment_acc as f64 * b;
            seen += chunk.len();
        }
        let n = seen.max(1) as f64;
        let (val_speed, val_segment) = validate_pretext(&trainer, &val_set)?;
        let row: Vec<MetricValue> = if single_segment {
            vec![
                epoch.into(),
                (sums[0] / n).into(),
                (sums[1] / n).into(),
                (sums[3] / n).into(),
                val_speed.into(),
                lr.into(),
            ]
        } else {
            vec![
                epoch.into(),
                (sums[0] / n).into(),
                (sums[1] / n).into(),
                (sums[2] / n).into(),
                (sums[3] / n).into(),
                (sums[4] / n).into(),
                val_speed.into(),
                val_segment.into(),
                lr.into(),
            ]
        };
        metrics.write_row(&row)?;
        metrics.flush()?;
        let path = checkpoint_path(&dir, epoch + 1);
        save_simple_checkpoint(&trainer.model, &trainer.optimizer, trainer.step, "vspp", &config, epoch + 1, &path)?;
        checkpoints.push(path);
    }

    Ok(RunArtifacts { run_dir: dir, metrics: Some(metrics.path), checkpoints, results: None })
}

#[allow(clippy::too_many_arguments)]
fn save_simple_checkpoint(
    model: &VideoModel,
    optimizer: &SgdMomentum,
    step: u64,
    stage: &str,
    config: &RunConfig,
    epoch: usize,
    path: &Path,
) -> Result<(), CliError> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        stage: stage.into(),
        encoder_config: config.encoder_config(),
        epoch,
        step,
        tensors: params_to_blobs(&model.params),
        buffers: buffers_to_blobs(&model.buffers),
        teacher_tensors: None,
        teacher_buffers: None,
        optimizer_velocity: TensorBlob::from_slice(
            &[optimizer.velocity().len()],
            optimizer.velocity(),
        ),
        bank: None,
        rng: RngStates {
            base_seed: config.seed,
            epochs_completed: epoch,
            steps_completed: step,
        },
        config_hash: config.hash(),
        config_toml: config.to_canonical_toml(),
    };
    ckpt.save(path)
}

/// Supervised finetuning from a pretraining checkpoint, or from scratch when
/// no checkpoint is given (the "minus auxiliary/pretext" baselines).
pub fn cmd_finetune(
    config: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<RunArtifacts, CliError> {
    let mut config = config.clone();
    config.stage = Stage::Finetune;
    config.validate()?;
    let dataset = config.load_dataset()?;
    let enc_cfg = config.encoder_config();
    let classes = config.data.num_classes;

    let mut model = init_from_scratch(&enc_cfg, HeadSpec::Classify { classes }, config.seed);
    if let Some(path) = checkpoint {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.encoder_config != enc_cfg {
            return Err(CliError::ConfigMismatch(
                "encoder config",
                format!("{:?} vs {:?}", ckpt.encoder_config, enc_cfg),
            ));
        }
        super::checkpoint::copy_encoder_state(&mut model, &ckpt.tensors, &ckpt.buffers)?;
    }

    let dir = run_dir(&config, checkpoint)?;
    let mut metrics = MetricsWriter::create(
        &dir.join("metrics.csv"),
        METRICS_SCHEMA,
        "finetune",
        &config.hash(),
        &config.to_canonical_toml(),
        &["epoch", "train_loss", "train_acc", "val_top1", "lr"],
    )?;

    let protocol = EvalProtocol {
        clips_per_video: config.eval.clips_per_video,
        crop_size: config.augment.crop_size,
    };
    let ft = crate::evalharness::FinetuneConfig {
        epochs: 1, // driven epoch by epoch below so metrics interleave
        batch_size: config.optim.batch_size,
        lr: config.finetune.lr,
        lr_decay: config.optim.lr_decay,
        lr_decay_epochs: config.optim.lr_decay_epochs,
        sgd_momentum: config.optim.sgd_momentum,
        weight_decay: config.optim.weight_decay,
        seed: config.seed,
    };

    let train = dataset.split_indices(Split::Train);
    let mut optimizer = SgdMomentum::new(ft.sgd_momentum, ft.weight_decay);
    let mut step = 0u64;
    let mut checkpoints = Vec::new();
    for epoch in 0..config.finetune.epochs {
        let lr = ft.lr * ft.lr_decay.powi((epoch / ft.lr_decay_epochs.max(1)) as i32);
        let order = shuffled_epoch_order(&train, config.seed, epoch);
        let mut loss_sum = 0.0f64;
        let mut hit_sum = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(ft.batch_size) {
            let (clips, labels) = natural_finetune_batch(&dataset, chunk, &config, epoch)?;
            let (loss, hits) = crate::evalharness::classifier_step(
                &mut model,
                &mut optimizer,
                &clips,
                &labels,
                lr,
            )?;
            loss_sum += loss as f64 * chunk.len() as f64;
            hit_sum += hits;
            seen += chunk.len();
            step += 1;
        }
        let (val_top1, _) = evaluate_split(&model, &dataset, Split::Val, &protocol)?;
        metrics.write_row(&[
            epoch.into(),
            (loss_sum / seen.max(1) as f64).into(),
            (hit_sum as f64 / seen.max(1) as f64).into(),
            val_top1.into(),
            lr.into(),
        ])?;
        metrics.flush()?;
    }
    let path = checkpoint_path(&dir, config.finetune.epochs);
    save_simple_checkpoint(&model, &optimizer, step, "finetune", &config, config.finetune.epochs, &path)?;
    checkpoints.push(path);

    Ok(RunArtifacts { run_dir: dir, metrics: Some(metrics.path), checkpoints, results: None })
}

fn natural_finetune_batch(
    dataset: &Dataset,
    indices: &[usize],
    config: &RunConfig,
    epoch: usize,
) -> Result<(Array5<f32>, Vec<usize>), CliError> {
    let mut clips = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &index in indices {
        let video = &dataset.videos[index];
        let label = video
            .label
            .ok_or_else(|| CliError::Config(format!("video {} carries no label", video.id)))?;
        let k = config.sampler.clip_len;
        let params = SamplerParams::new(video.num_frames, k, 1, 1)?;
        let mut rng =
            derive_rng(config.seed, &[tag::SAMPLE, epoch as u64, hash_str(&video.id), 0]);
        let start = rand::Rng::random_range(&mut rng, 0..=video.num_frames - k);
        let plan = crate::sampling::uniform_pace_indices(&params, 1, start)?;
        let clip = crate::dataio::decode_clip(video, &plan)?;
        let key = crate::augment::ViewKey {
            seed: config.seed,
            epoch,
            video_id: &video.id,
            view: 0,
        };
        clips.push(
            crate::augment::augment_clip(&clip, &config.augment, key)
                .map_err(crate::evalharness::EvalError::from)?,
        );
        labels.push(label);
    }
    Ok((crate::distill::stack_clips(&clips), labels))
}

/// Evaluate a finetuned checkpoint on the val and test splits.
pub fn cmd_evaluate(config: &RunConfig, checkpoint: &Path) -> Result<RunArtifacts, CliError> {
    let mut config = config.clone();
    config.stage = Stage::Evaluate;
    config.validate()?;
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.stage != "finetune" {
        return Err(CliError::Checkpoint(format!(
            "evaluation needs a finetuned checkpoint, got stage `{}`",
            ckpt.stage
        )));
    }
    let enc_cfg = config.encoder_config();
    if ckpt.encoder_config != enc_cfg {
        return Err(CliError::ConfigMismatch(
            "encoder config",
            format!("{:?} vs {:?}", ckpt.encoder_config, enc_cfg),
        ));
    }
    let dataset = config.load_dataset()?;
    let mut model = init_from_scratch(
        &enc_cfg,
        HeadSpec::Classify { classes: config.data.num_classes },
        config.seed,
    );
    load_params_from_blobs(&mut model.params, &ckpt.tensors)?;
    load_buffers_from_blobs(&mut model.buffers, &ckpt.buffers)?;

    let protocol = EvalProtocol {
        clips_per_video: config.eval.clips_per_video,
        crop_size: config.augment.crop_size,
    };
    let dir = run_dir(&config, Some(checkpoint))?;
    let results_path = dir.join("results.csv");
    let mut results = MetricsWriter::create(
        &results_path,
        RESULTS_SCHEMA,
        "evaluate",
        &config.hash(),
        &config.to_canonical_toml(),
        &["run_id", "split", "checkpoint", "top1"],
    )?;
    let checkpoint_name = checkpoint.display().to_string().replace(',', "_");
    for split in [Split::Val, Split::Test] {
        let (top1, _) = evaluate_split(&model, &dataset, split, &protocol)?;
        results.write_row(&[
            config.run_id().as_str().into(),
            split.to_string().as_str().into(),
            checkpoint_name.as_str().into(),
            top1.into(),
        ])?;
    }
    results.flush()?;

    Ok(RunArtifacts {
        run_dir: dir,
        metrics: None,
        checkpoints: vec![checkpoint.to_path_buf()],
        results: Some(results_path),
    })
}

/// Human-readable clip plan for an explicit (rate, segment, start) triple.
pub fn cmd_inspect_sample(
    params: &SamplerParams,
    rate: usize,
    segment: usize,
    start: usize,
) -> String {
    match crate::sampling::vspp_indices(params, rate, segment, start) {
        Ok(sample) => format_sample(params, &sample),
        Err(err) => format!("invalid plan: {err}"),
    }
}

fn format_sample(params: &SamplerParams, sample: &VsppSample) -> String {
    let seg_len = params.segment_len();
    let mut lines = vec![sample.to_record()];
    for s in 0..params.segments {
        let chunk = &sample.indices[s * seg_len..(s + 1) * seg_len];
        let marker = if s + 1 == sample.segment { format!(" <- stride {}", sample.rate) } else { String::new() };
        lines.push(format!(
            "segment {}: {}{}",
            s + 1,
            chunk.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
            marker
        ));
    }
    lines.push(format!(
        "labels: speed={} segment={}",
        sample.speed_label, sample.segment_label
    ));
    lines.join("\n")
}

/// Read metrics files and emit one labeled SVG per metric column.
pub fn cmd_plot(paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        files.push(MetricsFile::read(path)?);
    }
    plot_metrics_files(&files, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::Profile;

    pub(crate) fn tiny_config(dir: &Path) -> RunConfig {
        let mut config = RunConfig::defaults(Profile::Desk);
        config.out_dir = dir.to_string_lossy().to_string();
        config.seed = 5;
        config.data.num_classes = 2;
        config.data.videos_per_class = 5;
        config.data.frames_per_video = 14;
        config.data.frame_size = 16;
        config.augment.crop_size = 16;
        config.sampler.clip_len = 4;
        config.sampler.segments = 2;
        config.sampler.max_rate = 2;
        config.model.stage_widths = vec![4, 8];
        config.model.embed_dim = 8;
        config.model.predictor_hidden = 16;
        config.optim.batch_size = 4;
        config.optim.epochs = 2;
        config.distill.bank_capacity = 16;
        config.pretext.val_draws_per_video = 2;
        config.finetune.epochs = 2;
        config.eval.clips_per_video = 3;
        config
    }

    #[test]
    fn aux_writes_checkpoints_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let artifacts = cmd_pretrain_aux(&config, None).unwrap();
        assert_eq!(artifacts.checkpoints.len(), 2);
        let metrics = MetricsFile::read(artifacts.metrics.as_ref().unwrap()).unwrap();
        assert_eq!(metrics.stage, "aux");
        assert_eq!(metrics.rows.len(), 4); // 8 train videos / batch 4 * 2 epochs
        let losses = metrics.column("kl_loss").unwrap();
        assert!(losses.iter().all(|l| l.is_finite() && *l >= 0.0));
    }

    #[test]
    fn vspp_runs_from_scratch_and_from_stage1() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let aux = cmd_pretrain_aux(&config, None).unwrap();
        let scratch = cmd_pretrain_vspp(&config, None).unwrap();
        let initialized =
            cmd_pretrain_vspp(&config, Some(aux.checkpoints.last().unwrap())).unwrap();
        for artifacts in [&scratch, &initialized] {
            let metrics = MetricsFile::read(artifacts.metrics.as_ref().unwrap()).unwrap();
            assert_eq!(metrics.rows.len(), 2);
            assert!(metrics.column("val_speed_acc").is_some());
        }
    }

    #[test]
    fn full_pipeline_to_results_file() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let vspp = cmd_pretrain_vspp(&config, None).unwrap();
        let ft = cmd_finetune(&config, Some(vspp.checkpoints.last().unwrap())).unwrap();
        let artifacts = cmd_evaluate(&config, ft.checkpoints.last().unwrap()).unwrap();
        let results = MetricsFile::read(artifacts.results.as_ref().unwrap()).unwrap();
        assert_eq!(results.rows.len(), 2); // val + test
        assert_eq!(results.header, vec!["run_id", "split", "checkpoint", "top1"]);
        // Idempotence: a second evaluation writes identical bytes.
        let bytes1 = std::fs::read(artifacts.results.as_ref().unwrap()).unwrap();
        let again = cmd_evaluate(&config, ft.checkpoints.last().unwrap()).unwrap();
        let bytes2 = std::fs::read(again.results.as_ref().unwrap()).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn inspect_sample_formats_plans_and_errors() {
        let params = SamplerParams::new(20, 16, 4, 4).unwrap();
        let text = cmd_inspect_sample(&params, 2, 2, 0);
        assert!(text.contains("rate=2 segment=2 start=0"));
        assert!(text.contains("indices=0,1,2,3,5,7,9,11,12,13,14,15,16,17,18,19"));
        let err = cmd_inspect_sample(&params, 4, 1, 0);
        assert!(err.contains("invalid plan"));
        let contiguous = cmd_inspect_sample(&params, 1, 3, 1);
        assert!(contiguous.contains("indices=1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16"));
    }
}
