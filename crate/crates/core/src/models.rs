//! 3D encoder family and heads.
//!
//! The encoder is a stack of convolutional stages ending in global average
//! pooling, so any clip (B, 3, K, H, W) maps to embeddings (B, D_enc). Two
//! families are supported: `plain3d` blocks use full 3x3x3 kernels;
//! `factorized2p1d` blocks factor each one into a 1x3x3 spatial convolution
//! followed by a 3x1x1 temporal convolution with the mid-channel count chosen
//! to roughly match the full kernel's parameter budget. Heads are plain
//! linear maps except the student predictor, a 3-layer MLP with batch
//! normalization and rectifiers between the linear layers.

use ndarray::{Array2, Array5};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, BatchNormCtx,
    BufferSet, Conv3d, Conv3dCtx, Linear, LinearCtx, ParamSet, ReluCtx,
};
use crate::rngkey::{derive_rng, tag};

pub const IN_CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("clip shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize, usize, usize), got: (usize, usize, usize, usize) },
    #[error("row {row} has norm {norm:.3e}; embedding collapsed below 1e-12")]
    DegenerateVector { row: usize, norm: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderFamily {
    Plain3d,
    Factorized2p1d,
}

/// Architecture of the 3D encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub family: EncoderFamily,
    /// Output channel count per stage; the last entry is the embedding dim.
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    /// One-based stage index from which downsampling blocks stride the
    /// temporal axis too; earlier stages downsample space only. Keeping
    /// full temporal resolution through the early stages preserves the
    /// single-frame pace discontinuities the pretext task must detect.
    pub temporal_stride_from: usize,
    /// Expected input clip length K.
    pub clip_frames: usize,
    /// Expected input spatial side (square crops).
    pub clip_size: usize,
}

impl EncoderConfig {
    /// Desk-scale default: trains in minutes on CPU while keeping the shape
    /// of the full-size backbones (4 stages, doubling widths, one block).
    pub fn desk() -> Self {
        Self {
            family: EncoderFamily::Plain3d,
            stage_widths: vec![16, 32, 64, 128],
            blocks_per_stage: 1,
            temporal_stride_from: 3,
            clip_frames: 8,
            clip_size: 32,
        }
    }

    /// Downsampling stride of the first block of a (0-based) stage.
    pub fn stage_stride(&self, stage: usize) -> [usize; 3] {
        if stage == 0 {
            [1, 1, 1]
        } else if stage + 1 >= self.temporal_stride_from {
            [2, 2, 2]
        } else {
            [1, 2, 2]
        }
    }

    pub fn embedding_dim(&self) -> usize {
        *self.stage_widths.last().expect("at least one stage")
    }

    pub fn input_shape(&self) -> (usize, usize, usize, usize) {
        (IN_CHANNELS, self.clip_frames, self.clip_size, self.clip_size)
    }
}

enum Block {
    Plain {
        conv: Conv3d,
        bn: BatchNorm,
    },
    Factorized {
        spatial: Conv3d,
        bn_mid: BatchNorm,
        temporal: Conv3d,
        bn: BatchNorm,
    },
}

enum BlockCtx {
    Plain {
        conv: Conv3dCtx,
        bn: BatchNormCtx,
        relu: ReluCtx,
    },
    Factorized {
        spatial: Conv3dCtx,
        bn_mid: BatchNormCtx,
        relu_mid: ReluCtx,
        temporal: Conv3dCtx,
        bn: BatchNormCtx,
        relu: ReluCtx,
    },
}

pub struct Encoder {
    blocks: Vec<Block>,
    pub config: EncoderConfig,
}

pub struct EncoderCtx {
    blocks: Vec<BlockCtx>,
    pooled_shape: [usize; 5],
}

/// Mid-channel count that keeps a factorized block near the parameter budget
/// of the full 3x3x3 kernel it replaces.
fn factorized_mid_channels(in_c: usize, out_c: usize) -> usize {
    let (t, d) = (3usize, 3usize);
    let num = t * d * d * in_c * out_c;
    let den = d * d * in_c + t * out_c;
    (num / den).max(1)
}

impl Encoder {
    pub fn build(
        ps: &mut ParamSet,
        bufs: &mut BufferSet,
        config: &EncoderConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(!config.stage_widths.is_empty());
        assert!(config.blocks_per_stage >= 1);
        let mut blocks = Vec::new();
        let mut in_c = IN_CHANNELS;
        for (stage, &width) in config.stage_widths.iter().enumerate() {
            for block in 0..config.blocks_per_stage {
                let stride = if block == 0 { config.stage_stride(stage) } else { [1, 1, 1] };
                let name = format!("encoder.stage{}.block{}", stage + 1, block + 1);
                blocks.push(Self::build_block(ps, bufs, &name, config.family, in_c, width, stride, rng));
                in_c = width;
            }
        }
        Self { blocks, config: config.clone() }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_block(
        ps: &mut ParamSet,
        bufs: &mut BufferSet,
        name: &str,
        family: EncoderFamily,
        in_c: usize,
        out_c: usize,
        stride: [usize; 3],
        rng: &mut ChaCha8Rng,
    ) -> Block {
        match family {
            EncoderFamily::Plain3d => {
                let conv = Conv3d::new(
                    ps,
                    &format!("{name}.conv"),
                    in_c,
                    out_c,
                    [3, 3, 3],
                    stride,
                    [1, 1, 1],
                    rng,
                );
                let bn = BatchNorm::new(ps, bufs, &format!("{name}.bn"), out_c);
                Block::Plain { conv, bn }
            }
            EncoderFamily::Factorized2p1d => {
                let mid = factorized_mid_channels(in_c, out_c);
                let spatial = Conv3d::new(
                    ps,
                    &format!("{name}.spatial"),
                    in_c,
                    mid,
                    [1, 3, 3],
                    [1, stride[1], stride[2]],
                    [0, 1, 1],
                    rng,
                );
                let bn_mid = BatchNorm::new(ps, bufs, &format!("{name}.bn_mid"), mid);
                let temporal = Conv3d::new(
                    ps,
                    &format!("{name}.temporal"),
                    mid,
                    out_c,
                    [3, 1, 1],
                    [stride[0], 1, 1],
                    [1, 0, 0],
                    rng,
                );
                let bn = BatchNorm::new(ps, bufs, &format!("{name}.bn"), out_c);
                Block::Factorized { spatial, bn_mid, temporal, bn }
            }
        }
    }

    pub fn forward_train(
        &self,
        ps: &ParamSet,
        bufs: &mut BufferSet,
        x: &Array5<f32>,
    ) -> (Array2<f32>, EncoderCtx) {
        let mut cur = x.clone();
        let mut ctxs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, ctx) = match block {
                Block::Plain { conv, bn } => {
                    let (c_out, c_ctx) = conv.forward(ps, &cur);
                    let (b_out, b_ctx) = bn.forward5_train(ps, bufs, &c_out);
                    let (r_out, r_ctx) = relu(&b_out);
                    (r_out, BlockCtx::Plain { conv: c_ctx, bn: b_ctx, relu: r_ctx })
                }
                Block::Factorized { spatial, bn_mid, temporal, bn } => {
                    let (s_out, s_ctx) = spatial.forward(ps, &cur);
                    let (m_out, m_ctx) = bn_mid.forward5_train(ps, bufs, &s_out);
                    let (rm_out, rm_ctx) = relu(&m_out);
                    let (t_out, t_ctx) = temporal.forward(ps, &rm_out);
                    let (b_out, b_ctx) = bn.forward5_train(ps, bufs, &t_out);
                    let (r_out, r_ctx) = relu(&b_out);
                    (
                        r_out,
                        BlockCtx::Factorized {
                            spatial: s_ctx,
                            bn_mid: m_ctx,
                            relu_mid: rm_ctx,
                            temporal: t_ctx,
                            bn: b_ctx,
                            relu: r_ctx,
                        },
                    )
                }
            };
            cur = next;
            ctxs.push(ctx);
        }
        let (b, c, t, h, w) = cur.dim();
        let features = global_avg_pool(&cur);
        (features, EncoderCtx { blocks: ctxs, pooled_shape: [b, c, t, h, w] })
    }

    pub fn forward_eval(&self, ps: &ParamSet, bufs: &BufferSet, x: &Array5<f32>) -> Array2<f32> {
        let mut cur = x.clone();
        for block in &self.blocks {
            cur = match block {
                Block::Plain { conv, bn } => {
                    let c_out = conv.infer(ps, &cur);
                    let b_out = bn.forward5_eval(ps, bufs, &c_out);
                    relu(&b_out).0
                }
                Block::Factorized { spatial, bn_mid, temporal, bn } => {
                    let s_out = spatial.infer(ps, &cur);
                    let m_out = bn_mid.forward5_eval(ps, bufs, &s_out);
                    let rm = relu(&m_out).0;
                    let t_out = temporal.infer(ps, &rm);
                    let b_out = bn.forward5_eval(ps, bufs, &t_out);
                    relu(&b_out).0
                }
            };
        }
        global_avg_pool(&cur)
    }

    /// Backpropagate from the pooled features through every block.
    pub fn backward(&self, ps: &mut ParamSet, ctx: &EncoderCtx, dfeat: &Array2<f32>) {
        let mut grad = global_avg_pool_backward(dfeat, ctx.pooled_shape);
        for (i, (block, bctx)) in self.blocks.iter().zip(&ctx.blocks).enumerate().rev() {
            let first = i == 0;
            grad = match (block, bctx) {
                (Block::Plain { conv, bn }, BlockCtx::Plain { conv: c_ctx, bn: b_ctx, relu: r_ctx }) => {
                    let g = relu_backward(r_ctx, &grad);
                    let g = bn.backward5(ps, b_ctx, &g);
                    if first {
                        conv.backward_params_only(ps, c_ctx, &g);
                        break;
                    }
                    conv.backward(ps, c_ctx, &g)
                }
                (
                    Block::Factorized { spatial, bn_mid, temporal, bn },
                    BlockCtx::Factorized {
                        spatial: s_ctx,
                        bn_mid: m_ctx,
                        relu_mid: rm_ctx,
                        temporal: t_ctx,
                        bn: b_ctx,
                        relu: r_ctx,
                    },
                ) => {
                    let g = relu_backward(r_ctx, &grad);
                    let g = bn.backward5(ps, b_ctx, &g);
                    let g = temporal.backward(ps, t_ctx, &g);
                    let g = relu_backward(rm_ctx, &g);
                    let g = bn_mid.backward5(ps, m_ctx, &g);
                    if first {
                        spatial.backward_params_only(ps, s_ctx, &g);
                        break;
                    }
                    spatial.backward(ps, s_ctx, &g)
                }
                _ => unreachable!("block and context variants always match"),
            };
        }
    }
}

/// Width of the shared projection/predictor embedding space and the
/// predictor's hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDims {
    pub embed_dim: usize,
    pub predictor_hidden: usize,
}

impl Default for HeadDims {
    fn default() -> Self {
        Self { embed_dim: 128, predictor_hidden: 1024 }
    }
}

/// Student-only 3-layer MLP predictor: linear-BN-ReLU twice, then linear.
pub struct Mlp {
    pub l1: Linear,
    pub bn1: BatchNorm,
    pub l2: Linear,
    pub bn2: BatchNorm,
    pub l3: Linear,
}

pub struct MlpCtx {
    l1: LinearCtx,
    bn1: BatchNormCtx,
    r1: ReluCtx,
    l2: LinearCtx,
    bn2: BatchNormCtx,
    r2: ReluCtx,
    l3: LinearCtx,
}

impl Mlp {
    pub fn new(
        ps: &mut ParamSet,
        bufs: &mut BufferSet,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            l1: Linear::new(ps, &format!("{name}.l1"), in_dim, hidden, rng),
            bn1: BatchNorm::new(ps, bufs, &format!("{name}.bn1"), hidden),
            l2: Linear::new(ps, &format!("{name}.l2"), hidden, hidden, rng),
            bn2: BatchNorm::new(ps, bufs, &format!("{name}.bn2"), hidden),
            l3: Linear::new(ps, &format!("{name}.l3"), hidden, out_dim, rng),
        }
    }

    pub fn forward_train(
        &self,
        ps: &ParamSet,
        bufs: &mut BufferSet,
        x: &Array2<f32>,
    ) -> (Array2<f32>, MlpCtx) {
        let (a, l1) = self.l1.forward(ps, x);
        let (b, bn1) = self.bn1.forward2_train(ps, bufs, &a);
        let (c, r1) = relu(&b);
        let (d, l2) = self.l2.forward(ps, &c);
        let (e, bn2) = self.bn2.forward2_train(ps, bufs, &d);
        let (f, r2) = relu(&e);
        let (y, l3) = self.l3.forward(ps, &f);
        (y, MlpCtx { l1, bn1, r1, l2, bn2, r2, l3 })
    }

    pub fn backward(&self, ps: &mut ParamSet, ctx: &MlpCtx, gy: &Array2<f32>) -> Array2<f32> {
        let g = self.l3.backward(ps, &ctx.l3, gy);
        let g = relu_backward(&ctx.r2, &g);
        let g = self.bn2.backward2(ps, &ctx.bn2, &g);
        let g = self.l2.backward(ps, &ctx.l2, &g);
        let g = relu_backward(&ctx.r1, &g);
        let g = self.bn1.backward2(ps, &ctx.bn1, &g);
        self.l1.backward(ps, &ctx.l1, &g)
    }
}

/// Which heads a model carries. The predictor only ever exists on the
/// student path; a teacher carries the projection alone.
pub enum HeadSet {
    /// Stage-1 student: projection + predictor.
    AuxStudent { projection: Linear, predictor: Mlp },
    /// Stage-1 teacher: projection only.
    AuxTeacher { projection: Linear },
    /// Stage-2: speed head always; segment head absent when Z == 1.
    Pretext { speed: Linear, segment: Option<Linear> },
    /// Downstream classifier.
    Classify { classifier: Linear },
}

impl HeadSet {
    /// Number of trainable blocks on the embedding output path (the
    /// student/teacher asymmetry check counts these).
    pub fn output_path_blocks(&self) -> usize {
        match self {
            HeadSet::AuxStudent { .. } => 2,
            HeadSet::AuxTeacher { .. } => 1,
            HeadSet::Pretext { .. } | HeadSet::Classify { .. } => 1,
        }
    }
}

/// A complete model: encoder plus heads over one flat parameter store.
pub struct VideoModel {
    pub encoder_config: EncoderConfig,
    pub encoder: Encoder,
    pub heads: HeadSet,
    pub params: ParamSet,
    pub buffers: BufferSet,
}

/// Specification of the heads to attach at construction time.
#[derive(Debug, Clone, Copy)]
pub enum HeadSpec {
    AuxStudent { dims: HeadDims },
    AuxTeacher { dims: HeadDims },
    Pretext { speed_classes: usize, segment_classes: usize },
    Classify { classes: usize },
}

/// Build a model with freshly initialized weights. The same seed always
/// yields the same weights; different seeds differ.
pub fn init_from_scratch(config: &EncoderConfig, heads: HeadSpec, seed: u64) -> VideoModel {
    let mut ps = ParamSet::new();
    let mut bufs = BufferSet::new();
    let mut rng = derive_rng(seed, &[tag::MODEL_INIT]);
    let encoder = Encoder::build(&mut ps, &mut bufs, config, &mut rng);
    let d_enc = config.embedding_dim();
    let heads = match heads {
        HeadSpec::AuxStudent { dims } => HeadSet::AuxStudent {
            projection: Linear::new(&mut ps, "heads.projection", d_enc, dims.embed_dim, &mut rng),
            predictor: Mlp::new(
                &mut ps,
                &mut bufs,
                "heads.predictor",
                dims.embed_dim,
                dims.predictor_hidden,
                dims.embed_dim,
                &mut rng,
            ),
        },
        HeadSpec::AuxTeacher { dims } => HeadSet::AuxTeacher {
            projection: Linear::new(&mut ps, "heads.projection", d_enc, dims.embed_dim, &mut rng),
        },
        HeadSpec::Pretext { speed_classes, segment_classes } => HeadSet::Pretext {
            speed: Linear::new(&mut ps, "heads.speed", d_enc, speed_classes, &mut rng),
            segment: (segment_classes > 1).then(|| {
                Linear::new(&mut ps, "heads.segment", d_enc, segment_classes, &mut rng)
            }),
        },
        HeadSpec::Classify { classes } => HeadSet::Classify {
            classifier: Linear::new(&mut ps, "heads.classifier", d_enc, classes, &mut rng),
        },
    };
    VideoModel { encoder_config: config.clone(), encoder, heads, params: ps, buffers: bufs }
}

/// Build the stage-1 pair: one random init, copied into both networks, so
/// teacher and student start elementwise equal on their shared tensors.
pub fn make_aux_pair(config: &EncoderConfig, dims: HeadDims, seed: u64) -> (VideoModel, VideoModel) {
    let student = init_from_scratch(config, HeadSpec::AuxStudent { dims }, seed);
    let mut teacher = init_from_scratch(config, HeadSpec::AuxTeacher { dims }, seed);
    let copied = teacher.params.copy_values_by_name(&student.params);
    assert!(copied > 0, "teacher copied no tensors from student");
    teacher.buffers.copy_matching_from(&student.buffers);
    (student, teacher)
}

impl VideoModel {
    /// Inference-mode embedding: (B, 3, K, H, W) -> (B, D_enc).
    pub fn encode(&self, clips: &Array5<f32>) -> Result<Array2<f32>, ModelError> {
        let (_, c, t, h, w) = clips.dim();
        let expected = self.encoder_config.input_shape();
        if (c, t, h, w) != expected {
            return Err(ModelError::ShapeMismatch { expected, got: (c, t, h, w) });
        }
        Ok(self.encoder.forward_eval(&self.params, &self.buffers, clips))
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }
}

/// Row-wise L2 normalization onto the unit sphere.
///
/// Rows with norm below 1e-12 signal a collapsed embedding and abort with a
/// diagnostic instead of silently dividing by an epsilon.
pub fn l2_normalize(vectors: &Array2<f32>) -> Result<Array2<f32>, ModelError> {
    let (y, _) = l2_normalize_fwd(vectors)?;
    Ok(y)
}

pub struct L2Ctx {
    normalized: Array2<f32>,
    norms: Vec<f32>,
}

pub fn l2_normalize_fwd(vectors: &Array2<f32>) -> Result<(Array2<f32>, L2Ctx), ModelError> {
    let (b, d) = vectors.dim();
    let mut out = Array2::<f32>::zeros((b, d));
    let mut norms = Vec::with_capacity(b);
    for (row, v) in vectors.rows().into_iter().enumerate() {
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm < 1e-12 {
            return Err(ModelError::DegenerateVector { row, norm });
        }
        for (o, x) in out.row_mut(row).iter_mut().zip(v) {
            *o = x / norm;
        }
        norms.push(norm);
    }
    let ctx = L2Ctx { normalized: out.clone(), norms };
    Ok((out, ctx))
}

pub fn l2_normalize_backward(ctx: &L2Ctx, gy: &Array2<f32>) -> Array2<f32> {
    let (b, d) = gy.dim();
    let mut gx = Array2::<f32>::zeros((b, d));
    for row in 0..b {
        let y = ctx.normalized.row(row);
        let g = gy.row(row);
        let dot: f32 = y.iter().zip(g).map(|(a, b)| a * b).sum();
        for col in 0..d {
            gx[[row, col]] = (g[col] - y[col] * dot) / ctx.norms[row];
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(family: EncoderFamily) -> EncoderConfig {
        EncoderConfig {
            family,
            stage_widths: vec![4, 8],
            blocks_per_stage: 1,
            temporal_stride_from: 2,
            clip_frames: 4,
            clip_size: 8,
        }
    }

    #[test]
    fn encode_shape_contract() {
        let model = init_from_scratch(
            &tiny_config(EncoderFamily::Plain3d),
            HeadSpec::Classify { classes: 4 },
            0,
        );
        let clips = Array5::<f32>::zeros((2, 3, 4, 8, 8));
        let feats = model.encode(&clips).unwrap();
        assert_eq!(feats.dim(), (2, 8));
    }

    #[test]
    fn zero_input_yields_finite_embeddings() {
        let model = init_from_scratch(
            &tiny_config(EncoderFamily::Plain3d),
            HeadSpec::Classify { classes: 4 },
            1,
        );
        let clips = Array5::<f32>::zeros((1, 3, 4, 8, 8));
        let feats = model.encode(&clips).unwrap();
        assert!(feats.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = init_from_scratch(
            &tiny_config(EncoderFamily::Plain3d),
            HeadSpec::Classify { classes: 4 },
            0,
        );
        let clips = Array5::<f32>::zeros((1, 3, 4, 16, 16));
        assert!(matches!(model.encode(&clips), Err(ModelError::ShapeMismatch { .. })));
    }

    #[test]
    fn family_parameter_counts_differ_and_are_stable() {
        let plain = init_from_scratch(
            &tiny_config(EncoderFamily::Plain3d),
            HeadSpec::Classify { classes: 4 },
            0,
        );
        let fact = init_from_scratch(
            &tiny_config(EncoderFamily::Factorized2p1d),
            HeadSpec::Classify { classes: 4 },
            0,
        );
        assert_ne!(plain.param_count(), fact.param_count());
        // Regression values for the tiny two-stage config above.
        assert_eq!(plain.param_count(), 1260);
        assert_eq!(fact.param_count(), 1290);
        // And for the desk-scale default encoder with a 4-way classifier.
        let desk_plain = init_from_scratch(&EncoderConfig::desk(), HeadSpec::Classify { classes: 4 }, 0);
        let desk_fact = init_from_scratch(
            &EncoderConfig { family: EncoderFamily::Factorized2p1d, ..EncoderConfig::desk() },
            HeadSpec::Classify { classes: 4 },
            0,
        );
        assert_eq!(desk_plain.param_count(), 292_836);
        assert_eq!(desk_fact.param_count(), 293_448);
    }

    #[test]
    fn same_seed_same_weights_different_seed_differs() {
        let cfg = tiny_config(EncoderFamily::Plain3d);
        let a = init_from_scratch(&cfg, HeadSpec::Classify { classes: 4 }, 7);
        let b = init_from_scratch(&cfg, HeadSpec::Classify { classes: 4 }, 7);
        let c = init_from_scratch(&cfg, HeadSpec::Classify { classes: 4 }, 8);
        assert_eq!(a.params.data(), b.params.data());
        assert_ne!(a.params.data(), c.params.data());
    }

    #[test]
    fn aux_pair_starts_identical_on_shared_tensors() {
        let (student, teacher) = make_aux_pair(
            &tiny_config(EncoderFamily::Plain3d),
            HeadDims { embed_dim: 8, predictor_hidden: 16 },
            3,
        );
        for id in teacher.params.ids() {
            let name = teacher.params.name(id).to_string();
            let sid = student.params.find(&name).expect("shared tensor in student");
            assert_eq!(teacher.params.slice(id), student.params.slice(sid), "{name}");
        }
        // Predictor asymmetry: one extra block on the student output path.
        assert_eq!(student.heads.output_path_blocks(), teacher.heads.output_path_blocks() + 1);
    }

    #[test]
    fn l2_normalize_pythagorean() {
        let v = Array2::from_shape_vec((1, 2), vec![3.0, 4.0]).unwrap();
        let y = l2_normalize(&v).unwrap();
        assert!((y[[0, 0]] - 0.6).abs() < 1e-6);
        assert!((y[[0, 1]] - 0.8).abs() < 1e-6);
        // Idempotence and scale invariance.
        let y2 = l2_normalize(&y).unwrap();
        assert!((y2[[0, 0]] - 0.6).abs() < 1e-6);
        let scaled = l2_normalize(&(v * 37.5)).unwrap();
        assert!((scaled[[0, 1]] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn l2_normalize_rejects_collapsed_rows() {
        let v = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        match l2_normalize(&v) {
            Err(ModelError::DegenerateVector { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected DegenerateVector, got {other:?}"),
        }
    }

    #[test]
    fn factorized_temporal_dims_survive() {
        let cfg = tiny_config(EncoderFamily::Factorized2p1d);
        let model = init_from_scratch(&cfg, HeadSpec::Classify { classes: 2 }, 0);
        let clips = Array5::<f32>::zeros((1, 3, 4, 8, 8));
        let feats = model.encode(&clips).unwrap();
        assert_eq!(feats.dim(), (1, 8));
    }
}
