//! Primary pretext stage: joint speed and segment classification.
//!
//! Each training clip is built by the segment-pace sampler, so its labels are
//! exactly the (rate - 1, segment - 1) of the plan that produced it. A single
//! encoder forward feeds two linear heads; the joint loss is
//! `alpha * CE(speed) + beta * CE(segment)`, each term a batch mean. With a
//! single segment the segment head is dropped (a one-class prediction is
//! vacuous) and the task reduces to whole-clip pace prediction.

use ndarray::{Array2, Array5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_clip, AugmentPolicy, ViewKey};
use crate::dataio::{decode_clip, VideoSource};
use crate::models::{HeadSet, VideoModel};
use crate::nn::SgdMomentum;
use crate::rngkey::{derive_rng, hash_str, tag};
use crate::sampling::{sample_vspp, SamplerParams};

#[derive(Debug, Error)]
pub enum PretextError {
    #[error("logit shape {got:?} does not match batch/classes {expected:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("checkpoint encoder config does not match: {0}")]
    ConfigMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}

/// Balancing weights for the two sub-task losses.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VsppLossWeights {
    pub alpha: f32,
    pub beta: f32,
}

impl Default for VsppLossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

/// Batch-mean cross entropy and the gradient w.r.t. the logits.
fn cross_entropy(
    logits: &Array2<f32>,
    labels: &[usize],
) -> Result<(f32, Array2<f32>, usize), PretextError> {
    let (b, classes) = logits.dim();
    if b != labels.len() {
        return Err(PretextError::ShapeMismatch { expected: (labels.len(), classes), got: (b, classes) });
    }
    for &label in labels {
        if label >= classes {
            return Err(PretextError::LabelOutOfRange { label, classes });
        }
    }
    let mut loss = 0.0f64;
    let mut grad = Array2::<f32>::zeros((b, classes));
    let mut correct = 0usize;
    for (bi, &label) in labels.iter().enumerate() {
        let row = logits.row(bi);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f32 = row.iter().map(|l| (l - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += (log_sum - row[label]) as f64;
        for j in 0..classes {
            let p = (row[j] - max).exp() / sum;
            grad[[bi, j]] = (p - if j == label { 1.0 } else { 0.0 }) / b as f32;
        }
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if argmax == label {
            correct += 1;
        }
    }
    Ok(((loss / b as f64) as f32, grad, correct))
}

/// Joint loss value: `(total, speed_component, segment_component)`.
///
/// `segment_logits` is None in single-segment mode, where the segment
/// component is zero by definition.
pub fn vspp_loss(
    speed_logits: &Array2<f32>,
    segment_logits: Option<&Array2<f32>>,
    speed_labels: &[usize],
    segment_labels: &[usize],
    weights: VsppLossWeights,
) -> Result<(f32, f32, f32), PretextError> {
    let (speed_ce, _, _) = cross_entropy(speed_logits, speed_labels)?;
    let segment_ce = match segment_logits {
        Some(logits) => cross_entropy(logits, segment_labels)?.0,
        None => 0.0,
    };
    Ok((weights.alpha * speed_ce + weights.beta * segment_ce, speed_ce, segment_ce))
}

/// Per-step record for the stage-2 metrics file.
#[derive(Debug, Clone, Copy)]
pub struct PretextStepStats {
    pub step: u64,
    pub epoch: usize,
    pub total_loss: f32,
    pub speed_loss: f32,
    pub segment_loss: f32,
    pub speed_acc: f32,
    pub segment_acc: f32,
    pub lr: f32,
}

/// Stage-2 trainer: one encoder with speed/segment heads plus SGD state.
pub struct PretextTrainer {
    pub model: VideoModel,
    pub optimizer: SgdMomentum,
    pub weights: VsppLossWeights,
    pub step: u64,
}

impl PretextTrainer {
    pub fn new(model: VideoModel, optimizer: SgdMomentum, weights: VsppLossWeights) -> Self {
        assert!(matches!(model.heads, HeadSet::Pretext { .. }), "pretext heads required");
        Self { model, optimizer, weights, step: 0 }
    }

    /// Draw one segment-pace view per video and run a joint update.
    pub fn train_step(
        &mut self,
        batch: &[&VideoSource],
        sampler: &SamplerParams,
        policy: &AugmentPolicy,
        seed: u64,
        epoch: usize,
        lr: f32,
    ) -> Result<PretextStepStats, PretextError> {
        let (clips, speed_labels, segment_labels) =
            single_view_batch(batch, sampler, policy, seed, epoch)?;
        self.step_on_clips(&clips, &speed_labels, &segment_labels, epoch, lr)
    }

    /// The update itself, on an already-prepared batch.
    pub fn step_on_clips(
        &mut self,
        clips: &Array5<f32>,
        speed_labels: &[usize],
        segment_labels: &[usize],
        epoch: usize,
        lr: f32,
    ) -> Result<PretextStepStats, PretextError> {
        let b = clips.dim().0;
        let outcome =
            joint_loss_and_grad(&mut self.model, clips, speed_labels, segment_labels, self.weights)?;
        self.optimizer.step(&mut self.model.params, lr);
        self.step += 1;

        Ok(PretextStepStats {
            step: self.step,
            epoch,
            total_loss: outcome.total,
            speed_loss: outcome.speed_loss,
            segment_loss: outcome.segment_loss,
            speed_acc: outcome.speed_correct as f32 / b as f32,
            segment_acc: outcome.segment_correct as f32 / b as f32,
            lr,
        })
    }

    /// Classify a batch without updating anything (validation).
    pub fn eval_on_clips(
        &self,
        clips: &Array5<f32>,
        speed_labels: &[usize],
        segment_labels: &[usize],
    ) -> Result<(f32, f32, f32, f32), PretextError> {
        let feat = self
            .model
            .encoder
            .forward_eval(&self.model.params, &self.model.buffers, clips);
        let (speed, segment) = match &self.model.heads {
            HeadSet::Pretext { speed, segment } => (speed, segment.as_ref()),
            _ => unreachable!("checked at construction"),
        };
        let speed_logits = speed.infer(&self.model.params, &feat);
        let (speed_ce, _, speed_correct) = cross_entropy(&speed_logits, speed_labels)?;
        let b = clips.dim().0 as f32;
        let (mut seg_ce, mut seg_acc) = (0.0, 0.0);
        if let Some(seg_head) = segment {
            let seg_logits = seg_head.infer(&self.model.params, &feat);
            let (ce, _, correct) = cross_entropy(&seg_logits, segment_labels)?;
            seg_ce = ce;
            seg_acc = correct as f32 / b;
        }
        Ok((speed_ce, seg_ce, speed_correct as f32 / b, seg_acc))
    }
}

/// Loss values from one joint forward/backward.
#[derive(Debug, Clone, Copy)]
pub struct JointLossOutcome {
    pub total: f32,
    pub speed_loss: f32,
    pub segment_loss: f32,
    pub speed_correct: usize,
    pub segment_correct: usize,
}

/// One encoder forward through both heads, joint backward; gradients are
/// zeroed first and left accumulated in `model.params`.
pub fn joint_loss_and_grad(
    model: &mut VideoModel,
    clips: &Array5<f32>,
    speed_labels: &[usize],
    segment_labels: &[usize],
    weights: VsppLossWeights,
) -> Result<JointLossOutcome, PretextError> {
    model.params.zero_grad();
    let (feat, enc_ctx) =
        model.encoder.forward_train(&model.params, &mut model.buffers, clips);

    let (speed, segment) = match &model.heads {
        HeadSet::Pretext { speed, segment } => (speed, segment.as_ref()),
        _ => panic!("pretext heads required"),
    };
    let (speed_logits, speed_ctx) = speed.forward(&model.params, &feat);
    let (speed_ce, speed_grad, speed_correct) = cross_entropy(&speed_logits, speed_labels)?;

    let mut seg_ce = 0.0f32;
    let mut seg_correct = 0usize;
    let mut segment_parts = None;
    if let Some(seg_head) = segment {
        let (seg_logits, seg_ctx) = seg_head.forward(&model.params, &feat);
        let (ce, grad, correct) = cross_entropy(&seg_logits, segment_labels)?;
        seg_ce = ce;
        seg_correct = correct;
        segment_parts = Some((seg_head, seg_ctx, grad));
    }
    let total = weights.alpha * speed_ce + weights.beta * seg_ce;

    // Joint backward: both heads contribute to the feature gradient.
    let speed_grad_scaled = &speed_grad * weights.alpha;
    let mut d_feat = speed.backward(&mut model.params, &speed_ctx, &speed_grad_scaled);
    if let Some((seg_head, seg_ctx, grad)) = segment_parts {
        let scaled = &grad * weights.beta;
        d_feat = d_feat + seg_head.backward(&mut model.params, &seg_ctx, &scaled);
    }
    model.encoder.backward(&mut model.params, &enc_ctx, &d_feat);

    Ok(JointLossOutcome {
        total,
        speed_loss: speed_ce,
        segment_loss: seg_ce,
        speed_correct,
        segment_correct: seg_correct,
    })
}

/// Rebuild a stage-2 model from a stage-1 checkpoint: encoder tensors and
/// normalization buffers are copied exactly, the stage-1 projection and
/// predictor are discarded, and the speed/segment heads are freshly
/// initialized from the run seed.
pub fn load_stage1_weights(
    ckpt: &crate::cli::checkpoint::Checkpoint,
    expected: &crate::models::EncoderConfig,
    speed_classes: usize,
    segment_classes: usize,
    seed: u64,
) -> Result<VideoModel, PretextError> {
    if &ckpt.encoder_config != expected {
        return Err(PretextError::ConfigMismatch(format!(
            "checkpoint encoder {:?}, run expects {:?}",
            ckpt.encoder_config, expected
        )));
    }
    let mut model = crate::models::init_from_scratch(
        expected,
        crate::models::HeadSpec::Pretext { speed_classes, segment_classes },
        seed,
    );
    crate::cli::checkpoint::copy_encoder_state(&mut model, &ckpt.tensors, &ckpt.buffers)
        .map_err(|e| PretextError::CorruptCheckpoint(e.to_string()))?;
    Ok(model)
}

/// Decode and augment one segment-pace view per video, with labels.
pub fn single_view_batch(
    batch: &[&VideoSource],
    sampler: &SamplerParams,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: usize,
) -> Result<(Array5<f32>, Vec<usize>, Vec<usize>), PretextError> {
    let mut clips = Vec::with_capacity(batch.len());
    let mut speed_labels = Vec::with_capacity(batch.len());
    let mut segment_labels = Vec::with_capacity(batch.len());
    for video in batch {
        let params = SamplerParams { num_frames: video.num_frames, ..*sampler };
        let mut rng = derive_rng(seed, &[tag::SAMPLE, epoch as u64, hash_str(&video.id), 0]);
        let sample = sample_vspp(&params, &mut rng)?;
        let clip = decode_clip(video, &sample)?;
        let key = ViewKey { seed, epoch, video_id: &video.id, view: 0 };
        clips.push(augment_clip(&clip, policy, key)?);
        speed_labels.push(sample.speed_label);
        segment_labels.push(sample.segment_label);
    }
    Ok((crate::distill::stack_clips(&clips), speed_labels, segment_labels))
}
