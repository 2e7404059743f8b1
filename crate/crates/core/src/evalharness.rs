//! Downstream finetuning and evaluation.
//!
//! Evaluation follows the averaged-softmax protocol: ten natural-pace clips
//! per video at uniformly spaced start offsets, center-cropped, classified
//! independently, and the softmax vectors averaged before the argmax. Ties
//! break toward the lowest class index. Finetuning retrains the full encoder
//! plus a fresh classifier head with cross entropy, reusing the pretraining
//! augmentation policy.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_clip, center_crop, AugmentPolicy, ViewKey};
use crate::dataio::{decode_clip, Dataset, Split, VideoSource};
use crate::models::{HeadSet, VideoModel};
use crate::nn::SgdMomentum;
use crate::rngkey::{derive_rng, hash_str, tag};
use crate::sampling::{uniform_pace_indices, SamplerParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("video has {num_frames} frames but clips need {clip_len}")]
    TooShort { num_frames: usize, clip_len: usize },
    #[error("predictions and labels differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("video {0} carries no label")]
    MissingLabel(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Pretext(#[from] crate::pretext::PretextError),
}

/// The clip-sampling protocol used at test time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub clips_per_video: usize,
    pub crop_size: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self { clips_per_video: 10, crop_size: 32 }
    }
}

/// Uniformly spaced clip start offsets: round(i * (N - K) / (clips - 1)).
pub fn uniform_offsets(num_frames: usize, clip_len: usize, clips: usize) -> Vec<usize> {
    let span = (num_frames - clip_len) as f64;
    if clips == 1 {
        return vec![0];
    }
    (0..clips)
        .map(|i| (i as f64 * span / (clips - 1) as f64).round() as usize)
        .collect()
}

fn softmax(logits: &Array1<f32>) -> Array1<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Array1<f32> = logits.mapv(|l| (l - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Lowest-index argmax.
fn argmax(probs: &Array1<f32>) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Classify one video: mean softmax over the protocol's clips, then argmax.
pub fn evaluate_video(
    model: &VideoModel,
    video: &VideoSource,
    protocol: &EvalProtocol,
) -> Result<(usize, Array1<f32>), EvalError> {
    let clip_len = model.encoder_config.clip_frames;
    if video.num_frames < clip_len {
        return Err(EvalError::TooShort { num_frames: video.num_frames, clip_len });
    }
    let classifier = match &model.heads {
        HeadSet::Classify { classifier } => classifier,
        _ => panic!("evaluation requires a classifier head"),
    };
    let params = SamplerParams::new(video.num_frames, clip_len, 1, 1)?;
    let offsets = uniform_offsets(video.num_frames, clip_len, protocol.clips_per_video);
    // Offsets can repeat for short videos (all ten are zero when N == K);
    // evaluate each distinct offset once and weight by multiplicity, with
    // the mean accumulated in f64, so degenerate cases reduce exactly to
    // single-clip evaluation.
    let total = offsets.len() as f64;
    let mut mean: Option<ndarray::Array1<f64>> = None;
    let mut pending = offsets.as_slice();
    while let Some((&offset, _)) = pending.split_first() {
        let count = pending.iter().take_while(|&&o| o == offset).count();
        pending = &pending[count..];
        let plan = uniform_pace_indices(&params, 1, offset)?;
        let clip = decode_clip(video, &plan)?;
        let cropped = center_crop(&clip, protocol.crop_size)?;
        let batch = crate::distill::stack_clips(std::slice::from_ref(&cropped));
        let feat = model.encode(&batch)?;
        let logits = classifier.infer(&model.params, &feat);
        let probs = softmax(&logits.row(0).to_owned());
        let weighted = probs.mapv(|p| p as f64 * count as f64 / total);
        mean = Some(match mean {
            None => weighted,
            Some(acc) => acc + weighted,
        });
    }
    let probs = mean.expect("at least one clip").mapv(|p| p as f32);
    Ok((argmax(&probs), probs))
}

/// Fraction of rows whose true label ranks among the k most probable
/// classes (ties resolved toward lower indices).
pub fn topk_accuracy(
    predictions: &[Array1<f32>],
    labels: &[usize],
    k: usize,
) -> Result<f32, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (probs, &label) in predictions.iter().zip(labels) {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| {
            probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        if order[..k.min(order.len())].contains(&label) {
            hits += 1;
        }
    }
    Ok(hits as f32 / labels.len() as f32)
}

/// Evaluate every video in a split; returns top-1 accuracy and per-video
/// (id, label, prediction, probabilities) rows.
pub fn evaluate_split(
    model: &VideoModel,
    dataset: &Dataset,
    split: Split,
    protocol: &EvalProtocol,
) -> Result<(f32, Vec<(String, usize, usize, Array1<f32>)>), EvalError> {
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for index in dataset.split_indices(split) {
        let video = &dataset.videos[index];
        let label = video.label.ok_or_else(|| EvalError::MissingLabel(video.id.clone()))?;
        let (pred, probs) = evaluate_video(model, video, protocol)?;
        rows.push((video.id.clone(), label, pred, probs.clone()));
        predictions.push(probs);
        labels.push(label);
    }
    let top1 = topk_accuracy(&predictions, &labels, 1)?;
    Ok((top1, rows))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Learning rate multiplier applied every `lr_decay_epochs`.
    pub lr_decay: f32,
    pub lr_decay_epochs: usize,
    pub sgd_momentum: f32,
    pub weight_decay: f32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct FinetuneEpochStats {
    pub epoch: usize,
    pub train_loss: f32,
    pub train_acc: f32,
    pub lr: f32,
}

/// Supervised training of the full network (encoder + classifier) with
/// cross entropy on natural-pace clips. `model` must carry a classifier
/// head; for the scratch baseline pass a freshly initialized model.
pub fn finetune(
    model: &mut VideoModel,
    dataset: &Dataset,
    policy: &AugmentPolicy,
    config: &FinetuneConfig,
) -> Result<Vec<FinetuneEpochStats>, EvalError> {
    assert!(matches!(model.heads, HeadSet::Classify { .. }), "classifier head required");
    let clip_len = model.encoder_config.clip_frames;
    let train = dataset.split_indices(Split::Train);
    let mut optimizer = SgdMomentum::new(config.sgd_momentum, config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr
            * config
                .lr_decay
                .powi((epoch / config.lr_decay_epochs.max(1)) as i32);
        let mut order = train.clone();
        let mut shuffle_rng = derive_rng(config.seed, &[tag::SHUFFLE, epoch as u64]);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        let mut epoch_hits = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (clips, labels) =
                natural_batch(dataset, chunk, clip_len, policy, config.seed, epoch)?;
            let (loss, hits) = classifier_step(model, &mut optimizer, &clips, &labels, lr)?;
            epoch_loss += loss as f64 * chunk.len() as f64;
            epoch_hits += hits;
            seen += chunk.len();
        }
        history.push(FinetuneEpochStats {
            epoch,
            train_loss: (epoch_loss / seen.max(1) as f64) as f32,
            train_acc: epoch_hits as f32 / seen.max(1) as f32,
            lr,
        });
    }
    Ok(history)
}

/// One supervised step; returns (mean loss, correct count).
pub fn classifier_step(
    model: &mut VideoModel,
    optimizer: &mut SgdMomentum,
    clips: &ndarray::Array5<f32>,
    labels: &[usize],
    lr: f32,
) -> Result<(f32, usize), EvalError> {
    model.params.zero_grad();
    let (feat, enc_ctx) =
        model.encoder.forward_train(&model.params, &mut model.buffers, clips);
    let classifier = match &model.heads {
        HeadSet::Classify { classifier } => classifier,
        _ => unreachable!("checked by callers"),
    };
    let (logits, ctx) = classifier.forward(&model.params, &feat);
    let (loss, grad, hits) = ce_with_grad(&logits, labels)?;
    let d_feat = classifier.backward(&mut model.params, &ctx, &grad);
    model.encoder.backward(&mut model.params, &enc_ctx, &d_feat);
    optimizer.step(&mut model.params, lr);
    Ok((loss, hits))
}

fn ce_with_grad(
    logits: &Array2<f32>,
    labels: &[usize],
) -> Result<(f32, Array2<f32>, usize), EvalError> {
    let (b, classes) = logits.dim();
    if b != labels.len() {
        return Err(EvalError::LengthMismatch(b, labels.len()));
    }
    let mut loss = 0.0f64;
    let mut grad = Array2::<f32>::zeros((b, classes));
    let mut hits = 0usize;
    for (bi, &label) in labels.iter().enumerate() {
        let row = logits.row(bi);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f32 = row.iter().map(|l| (l - max).exp()).sum();
        loss += (sum.ln() + max - row[label]) as f64;
        for j in 0..classes {
            let p = (row[j] - max).exp() / sum;
            grad[[bi, j]] = (p - if j == label { 1.0 } else { 0.0 }) / b as f32;
        }
        let pred = argmax(&row.to_owned());
        if pred == label {
            hits += 1;
        }
    }
    Ok(((loss / b as f64) as f32, grad, hits))
}

/// Natural-pace training batch for supervised finetuning: random start
/// offset, stride 1, augmented under the shared policy.
fn natural_batch(
    dataset: &Dataset,
    indices: &[usize],
    clip_len: usize,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: usize,
) -> Result<(ndarray::Array5<f32>, Vec<usize>), EvalError> {
    let mut clips = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &index in indices {
        let video = &dataset.videos[index];
        let label = video.label.ok_or_else(|| EvalError::MissingLabel(video.id.clone()))?;
        let params = SamplerParams::new(video.num_frames, clip_len, 1, 1)?;
        let mut rng = derive_rng(seed, &[tag::SAMPLE, epoch as u64, hash_str(&video.id), 0]);
        let start = rand::Rng::random_range(&mut rng, 0..=video.num_frames - clip_len);
        let plan = uniform_pace_indices(&params, 1, start)?;
        let clip = decode_clip(video, &plan)?;
        let key = ViewKey { seed, epoch, video_id: &video.id, view: 0 };
        clips.push(augment_clip(&clip, policy, key)?);
        labels.push(label);
    }
    Ok((crate::distill::stack_clips(&clips), labels))
}
