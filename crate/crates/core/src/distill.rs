//! Auxiliary similarity-distillation stage.
//!
//! A momentum teacher and a gradient-trained student each embed one of two
//! independently transformed views of every video. The teacher's embedding is
//! compared against a FIFO memory bank of past teacher embeddings (the
//! anchors); softmax over the cosine similarities yields a probability
//! distribution for the teacher and one for the student, and the student is
//! optimized to match the teacher's under a KL divergence. Teacher weights
//! never receive gradients: they evolve only as a momentum running average of
//! the student.
//!
//! Step ordering: student forward, momentum update, teacher forward, compute
//! both distributions, enqueue the teacher embedding, optimize the student.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_clip, AugmentPolicy, ViewKey};
use crate::dataio::{decode_clip, VideoSource};
use crate::models::{
    l2_normalize_backward, l2_normalize_fwd, HeadSet, VideoModel,
};
use crate::nn::SgdMomentum;
use crate::rngkey::{derive_rng, hash_str, tag};
use crate::sampling::{sample_vspp, SamplerParams};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("vector dim {got} does not match bank dim {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("enqueued vector {row} has norm {norm} (must be unit within 1e-4)")]
    NotNormalized { row: usize, norm: f32 },
    #[error("memory bank is empty")]
    EmptyBank,
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("parameter {name} shapes differ between teacher and student")]
    ShapeMismatch { name: String },
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}

/// Fixed-capacity FIFO ring of unit-norm anchor embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryBank {
    capacity: usize,
    dim: usize,
    storage: Vec<f32>,
    cursor: usize,
    fill: usize,
}

impl MemoryBank {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity > 0 && dim > 0);
        Self { capacity, dim, storage: vec![0.0; capacity * dim], cursor: 0, fill: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn is_empty(&self) -> bool {
        self.fill == 0
    }

    /// Append rows; at capacity the oldest rows are evicted one per insert.
    pub fn enqueue(&mut self, vectors: ArrayView2<f32>) -> Result<(), DistillError> {
        if vectors.ncols() != self.dim {
            return Err(DistillError::DimMismatch { expected: self.dim, got: vectors.ncols() });
        }
        for (row, v) in vectors.rows().into_iter().enumerate() {
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            if (norm - 1.0).abs() > 1e-4 {
                return Err(DistillError::NotNormalized { row, norm });
            }
        }
        for v in vectors.rows() {
            let at = self.cursor * self.dim;
            for (dst, src) in self.storage[at..at + self.dim].iter_mut().zip(v) {
                *dst = *src;
            }
            self.cursor = (self.cursor + 1) % self.capacity;
            self.fill = (self.fill + 1).min(self.capacity);
        }
        Ok(())
    }

    /// Filled anchors in ring order (arbitrary age order; fine for softmax).
    pub fn anchors(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.fill, self.dim), &self.storage[..self.fill * self.dim])
            .expect("ring layout")
    }

    /// Anchors oldest-to-newest, for FIFO equivalence checks.
    pub fn contents_in_age_order(&self) -> Array2<f32> {
        let mut out = Array2::<f32>::zeros((self.fill, self.dim));
        for i in 0..self.fill {
            let slot = if self.fill < self.capacity {
                i
            } else {
                (self.cursor + i) % self.capacity
            };
            out.row_mut(i)
                .assign(&ArrayView1::from(&self.storage[slot * self.dim..(slot + 1) * self.dim]));
        }
        out
    }

    pub(crate) fn raw_state(&self) -> (&[f32], usize, usize) {
        (&self.storage, self.cursor, self.fill)
    }

    pub(crate) fn from_raw_state(
        capacity: usize,
        dim: usize,
        storage: Vec<f32>,
        cursor: usize,
        fill: usize,
    ) -> Self {
        assert_eq!(storage.len(), capacity * dim);
        Self { capacity, dim, storage, cursor, fill }
    }
}

/// Distillation hyperparameters: teacher momentum and softmax temperatures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistillHyper {
    /// Teacher momentum m in [0, 1).
    pub teacher_momentum: f32,
    pub gamma_teacher: f32,
    pub gamma_student: f32,
}

impl Default for DistillHyper {
    fn default() -> Self {
        Self { teacher_momentum: 0.999, gamma_teacher: 0.02, gamma_student: 0.02 }
    }
}

/// Softmax over cosine similarities of `z` to every filled anchor.
///
/// Computed with max subtraction and in division form (`e_i / sum`), so the
/// returned probabilities sum to 1 up to a few float ulps.
pub fn similarity_distribution(
    z: ArrayView1<f32>,
    bank: &MemoryBank,
    gamma: f32,
) -> Result<Array1<f32>, DistillError> {
    if bank.is_empty() {
        return Err(DistillError::EmptyBank);
    }
    if z.len() != bank.dim() {
        return Err(DistillError::DimMismatch { expected: bank.dim(), got: z.len() });
    }
    assert!(gamma > 0.0, "temperature must be positive");
    let logits: Vec<f32> = bank
        .anchors()
        .rows()
        .into_iter()
        .map(|a| a.iter().zip(z).map(|(x, y)| x * y).sum::<f32>() / gamma)
        .collect();
    Ok(Array1::from_vec(softmax_stable(&logits)))
}

fn softmax_stable(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Row-wise log-softmax, plus probabilities in division form.
fn log_softmax_rows(logits: &Array2<f32>) -> (Array2<f32>, Array2<f32>) {
    let (b, n) = logits.dim();
    let mut log_probs = Array2::<f32>::zeros((b, n));
    let mut probs = Array2::<f32>::zeros((b, n));
    for bi in 0..b {
        let row = logits.row(bi);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for &l in row {
            sum += (l - max).exp();
        }
        let log_sum = sum.ln();
        for (j, &l) in row.iter().enumerate() {
            log_probs[[bi, j]] = (l - max) - log_sum;
            probs[[bi, j]] = (l - max).exp() / sum;
        }
    }
    (log_probs, probs)
}

/// KL(p_teacher || p_student) summed over batch rows.
///
/// Gradients belong to the student side only; this distribution-level form
/// is for loss reporting and tests, while training differentiates through
/// the student logits directly.
pub fn kl_loss(p_teacher: &Array2<f32>, p_student: &Array2<f32>) -> Result<f32, DistillError> {
    if p_teacher.dim() != p_student.dim() {
        return Err(DistillError::LengthMismatch(p_teacher.len(), p_student.len()));
    }
    let mut total = 0.0f64;
    for (p, q) in p_teacher.iter().zip(p_student.iter()) {
        if *p > 0.0 {
            total += (*p as f64) * ((*p as f64).ln() - (*q as f64).max(1e-45).ln());
        }
    }
    Ok(total as f32)
}

/// Momentum rule: every teacher tensor tracks the same-named student tensor
/// as `t <- m * t + (1 - m) * s`. Student-only tensors (the predictor) have
/// no teacher counterpart and are skipped by construction.
pub fn momentum_update(
    teacher: &mut VideoModel,
    student: &VideoModel,
    m: f32,
) -> Result<(), DistillError> {
    let ids: Vec<_> = teacher.params.ids().collect();
    for id in ids {
        let name = teacher.params.name(id).to_string();
        let sid = student
            .params
            .find(&name)
            .ok_or_else(|| DistillError::ShapeMismatch { name: name.clone() })?;
        if teacher.params.shape(id) != student.params.shape(sid) {
            return Err(DistillError::ShapeMismatch { name });
        }
        let sv = student.params.slice(sid).to_vec();
        for (t, s_val) in teacher.params.slice_mut(id).iter_mut().zip(sv) {
            *t = m * *t + (1.0 - m) * s_val;
        }
    }
    Ok(())
}

/// Per-step training record emitted to the metrics file.
#[derive(Debug, Clone, Copy)]
pub struct AuxStepStats {
    pub step: u64,
    pub epoch: usize,
    /// Batch-mean KL divergence.
    pub kl_loss: f32,
    pub bank_fill: usize,
    pub lr: f32,
    /// Max |sum(p) - 1| across all teacher and student rows this step.
    pub prob_sum_err: f32,
}

/// Owns all mutable stage-1 state: the two networks, the bank, and the
/// optimizer. A single logical writer; the data pipeline stays outside.
pub struct AuxTrainer {
    pub student: VideoModel,
    pub teacher: VideoModel,
    pub bank: MemoryBank,
    pub optimizer: SgdMomentum,
    pub hyper: DistillHyper,
    pub step: u64,
}

impl AuxTrainer {
    pub fn new(
        student: VideoModel,
        teacher: VideoModel,
        bank: MemoryBank,
        optimizer: SgdMomentum,
        hyper: DistillHyper,
    ) -> Self {
        Self { student, teacher, bank, optimizer, hyper, step: 0 }
    }

    /// One full training step from raw videos: draw two segment-pace views
    /// per video, augment them, and run the distillation update.
    #[allow(clippy::too_many_arguments)]
    pub fn train_step(
        &mut self,
        batch: &[&VideoSource],
        sampler: &SamplerParams,
        policy: &AugmentPolicy,
        seed: u64,
        epoch: usize,
        lr: f32,
    ) -> Result<AuxStepStats, DistillError> {
        let (student_view, teacher_view) = two_view_batch(batch, sampler, policy, seed, epoch)?;
        self.step_on_clips(&student_view, &teacher_view, epoch, lr)
    }

    /// The distillation update on already-prepared clip batches.
    pub fn step_on_clips(
        &mut self,
        student_clips: &ndarray::Array5<f32>,
        teacher_clips: &ndarray::Array5<f32>,
        epoch: usize,
        lr: f32,
    ) -> Result<AuxStepStats, DistillError> {
        // Teacher momentum update runs between the student and teacher
        // forwards; the student gradient computation happens afterwards, on
        // embeddings captured before the update, which is equivalent because
        // the update never touches student tensors.
        let z_student_pre = {
            // Student forward only (gradient state comes later).
            self.student.params.zero_grad();
            StudentForward::run(&mut self.student, student_clips)?
        };
        momentum_update(&mut self.teacher, &self.student, self.hyper.teacher_momentum)?;

        // Teacher forward, no gradient state anywhere.
        let (t_feat, _) = self.teacher.encoder.forward_train(
            &self.teacher.params,
            &mut self.teacher.buffers,
            teacher_clips,
        );
        let t_projection = match &self.teacher.heads {
            HeadSet::AuxTeacher { projection } => projection,
            _ => panic!("aux trainer requires a stage-1 teacher head set"),
        };
        let t_proj = t_projection.infer(&self.teacher.params, &t_feat);
        let z_teacher = crate::models::l2_normalize(&t_proj)?;

        // The very first batch seeds the bank so the loss has anchors.
        let seeded_first = self.bank.is_empty();
        if seeded_first {
            self.bank.enqueue(z_teacher.view())?;
        }

        let anchors = self.bank.anchors().to_owned();
        let t_logits = scaled_similarities(&z_teacher, &anchors, self.hyper.gamma_teacher);
        let (t_log_probs, t_probs) = log_softmax_rows(&t_logits);
        let teacher_sum_err = max_sum_deviation(&t_probs);

        // Enqueue the current teacher embeddings (unless they seeded above).
        if !seeded_first {
            self.bank.enqueue(z_teacher.view())?;
        }

        let (kl_mean, student_sum_err) = z_student_pre.loss_and_backward(
            &mut self.student,
            &anchors,
            &t_probs,
            &t_log_probs,
            self.hyper.gamma_student,
        );

        debug_assert!(self.teacher.params.max_abs_grad() == 0.0);
        self.optimizer.step(&mut self.student.params, lr);
        self.step += 1;

        Ok(AuxStepStats {
            step: self.step,
            epoch,
            kl_loss: kl_mean,
            bank_fill: self.bank.fill(),
            lr,
            prob_sum_err: teacher_sum_err.max(student_sum_err),
        })
    }
}

/// Saved student forward state: embeddings plus every layer context needed
/// to backpropagate the distillation loss later.
pub struct StudentForward {
    pub z_student: Array2<f32>,
    enc_ctx: crate::models::EncoderCtx,
    proj_ctx: crate::nn::LinearCtx,
    pred_ctx: crate::models::MlpCtx,
    l2_ctx: crate::models::L2Ctx,
}

impl StudentForward {
    /// Encoder -> projection -> predictor -> L2, in training mode.
    pub fn run(student: &mut VideoModel, clips: &ndarray::Array5<f32>) -> Result<Self, DistillError> {
        let (feat, enc_ctx) =
            student.encoder.forward_train(&student.params, &mut student.buffers, clips);
        let (projection, predictor) = match &student.heads {
            HeadSet::AuxStudent { projection, predictor } => (projection, predictor),
            _ => panic!("stage-1 student head set required"),
        };
        let (proj_out, proj_ctx) = projection.forward(&student.params, &feat);
        let (pred_out, pred_ctx) =
            predictor.forward_train(&student.params, &mut student.buffers, &proj_out);
        let (z_student, l2_ctx) = l2_normalize_fwd(&pred_out)?;
        Ok(Self { z_student, enc_ctx, proj_ctx, pred_ctx, l2_ctx })
    }

    /// Batch-mean KL of the student distribution against fixed teacher
    /// distributions, with gradients accumulated into the student params.
    /// Returns (loss, max |sum(p_student) - 1|).
    pub fn loss_and_backward(
        self,
        student: &mut VideoModel,
        anchors: &Array2<f32>,
        teacher_probs: &Array2<f32>,
        teacher_log_probs: &Array2<f32>,
        gamma_student: f32,
    ) -> (f32, f32) {
        let batch = self.z_student.nrows();
        let s_logits = scaled_similarities(&self.z_student, anchors, gamma_student);
        let (s_log_probs, s_probs) = log_softmax_rows(&s_logits);
        let sum_err = max_sum_deviation(&s_probs);

        let mut loss_sum = 0.0f64;
        for bi in 0..batch {
            for j in 0..teacher_probs.ncols() {
                let p = teacher_probs[[bi, j]] as f64;
                if p > 0.0 {
                    loss_sum +=
                        p * (teacher_log_probs[[bi, j]] as f64 - s_log_probs[[bi, j]] as f64);
                }
            }
        }
        let kl_mean = (loss_sum / batch as f64) as f32;

        // d(mean KL)/d(student logits) = (softmax(student) - p_teacher) / B.
        let mut d_logits = &s_probs - teacher_probs;
        d_logits.mapv_inplace(|v| v / batch as f32);
        let mut dz = d_logits.dot(anchors);
        dz.mapv_inplace(|v| v / gamma_student);
        let d_pred = l2_normalize_backward(&self.l2_ctx, &dz);
        let (projection, predictor) = match &student.heads {
            HeadSet::AuxStudent { projection, predictor } => (projection, predictor),
            _ => unreachable!("checked in run()"),
        };
        let d_proj = predictor.backward(&mut student.params, &self.pred_ctx, &d_pred);
        let d_feat = projection.backward(&mut student.params, &self.proj_ctx, &d_proj);
        student.encoder.backward(&mut student.params, &self.enc_ctx, &d_feat);
        (kl_mean, sum_err)
    }
}

/// Cosine similarities of each row to each anchor, scaled by 1/gamma.
fn scaled_similarities(z: &Array2<f32>, anchors: &Array2<f32>, gamma: f32) -> Array2<f32> {
    let mut logits = z.dot(&anchors.t());
    logits.mapv_inplace(|v| v / gamma);
    logits
}

fn max_sum_deviation(probs: &Array2<f32>) -> f32 {
    let mut worst = 0.0f64;
    for row in probs.rows() {
        let sum: f64 = row.iter().map(|&p| p as f64).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    worst as f32
}

/// Decode and augment two independent segment-pace views for each video.
pub fn two_view_batch(
    batch: &[&VideoSource],
    sampler: &SamplerParams,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: usize,
) -> Result<(ndarray::Array5<f32>, ndarray::Array5<f32>), DistillError> {
    let mut views = [Vec::new(), Vec::new()];
    for video in batch {
        let params = SamplerParams { num_frames: video.num_frames, ..*sampler };
        for view in 0..2 {
            let mut rng = derive_rng(
                seed,
                &[tag::SAMPLE, epoch as u64, hash_str(&video.id), view as u64],
            );
            let sample = sample_vspp(&params, &mut rng)?;
            let clip = decode_clip(video, &sample)?;
            let key = ViewKey { seed, epoch, video_id: &video.id, view };
            views[view].push(augment_clip(&clip, policy, key)?);
        }
    }
    Ok((stack_clips(&views[0]), stack_clips(&views[1])))
}

/// Stack (3, K, H, W) clips into a (B, 3, K, H, W) batch.
pub fn stack_clips(clips: &[ndarray::Array4<f32>]) -> ndarray::Array5<f32> {
    let (c, k, h, w) = clips[0].dim();
    let mut out = ndarray::Array5::<f32>::zeros((clips.len(), c, k, h, w));
    for (i, clip) in clips.iter().enumerate() {
        out.slice_mut(s![i, .., .., .., ..]).assign(clip);
    }
    out
}
