//! Batch normalization over the channel axis.
//!
//! One implementation serves both the 5D (batch, channel, time, height,
//! width) tensors of the encoder and the 2D (batch, feature) activations of
//! the predictor: inputs are viewed as (batch, channel, spatial) and
//! statistics reduce over batch and spatial positions per channel.

use ndarray::{Array2, Array3, Array5, ArrayView3};

use super::param::{BufId, BufferSet, ParamId, ParamSet};

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufId,
    pub running_var: BufId,
    pub channels: usize,
    /// Fraction of the batch statistic blended into the running statistic.
    pub momentum: f32,
    pub eps: f32,
}

pub struct BatchNormCtx {
    normalized: Array3<f32>,
    inv_std: Vec<f32>,
}

impl BatchNorm {
    pub fn new(
        ps: &mut ParamSet,
        bufs: &mut BufferSet,
        name: &str,
        channels: usize,
    ) -> Self {
        let gamma = ps.register(format!("{name}.gamma"), &[channels]);
        let beta = ps.register(format!("{name}.beta"), &[channels]);
        ps.slice_mut(gamma).fill(1.0);
        let running_mean = bufs.register(format!("{name}.running_mean"), &[channels]);
        let running_var = bufs.register(format!("{name}.running_var"), &[channels]);
        bufs.slice_mut(running_var).fill(1.0);
        Self {
            gamma,
            beta,
            running_mean,
            running_var,
            channels,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward5_train(
        &self,
        ps: &ParamSet,
        bufs: &mut BufferSet,
        x: &Array5<f32>,
    ) -> (Array5<f32>, BatchNormCtx) {
        let (b, c, t, h, w) = x.dim();
        let x3 = x
            .view()
            .into_shape_with_order((b, c, t * h * w))
            .expect("standard layout");
        let (y, ctx) = self.train_core(ps, bufs, &x3);
        let y5 = y.into_shape_with_order((b, c, t, h, w)).expect("same size");
        (y5, ctx)
    }

    pub fn forward5_eval(&self, ps: &ParamSet, bufs: &BufferSet, x: &Array5<f32>) -> Array5<f32> {
        let (b, c, t, h, w) = x.dim();
        let x3 = x
            .view()
            .into_shape_with_order((b, c, t * h * w))
            .expect("standard layout");
        self.eval_core(ps, bufs, &x3)
            .into_shape_with_order((b, c, t, h, w))
            .expect("same size")
    }

    pub fn backward5(&self, ps: &mut ParamSet, ctx: &BatchNormCtx, gy: &Array5<f32>) -> Array5<f32> {
        let (b, c, t, h, w) = gy.dim();
        let gy3 = gy
            .view()
            .into_shape_with_order((b, c, t * h * w))
            .expect("standard layout");
        self.backward_core(ps, ctx, &gy3)
            .into_shape_with_order((b, c, t, h, w))
            .expect("same size")
    }

    pub fn forward2_train(
        &self,
        ps: &ParamSet,
        bufs: &mut BufferSet,
        x: &Array2<f32>,
    ) -> (Array2<f32>, BatchNormCtx) {
        let (b, c) = x.dim();
        let x3 = x.view().into_shape_with_order((b, c, 1)).expect("standard layout");
        let (y, ctx) = self.train_core(ps, bufs, &x3);
        (y.into_shape_with_order((b, c)).expect("same size"), ctx)
    }

    pub fn forward2_eval(&self, ps: &ParamSet, bufs: &BufferSet, x: &Array2<f32>) -> Array2<f32> {
        let (b, c) = x.dim();
        let x3 = x.view().into_shape_with_order((b, c, 1)).expect("standard layout");
        self.eval_core(ps, bufs, &x3)
            .into_shape_with_order((b, c))
            .expect("same size")
    }

    pub fn backward2(&self, ps: &mut ParamSet, ctx: &BatchNormCtx, gy: &Array2<f32>) -> Array2<f32> {
        let (b, c) = gy.dim();
        let gy3 = gy.view().into_shape_with_order((b, c, 1)).expect("standard layout");
        self.backward_core(ps, ctx, &gy3)
            .into_shape_with_order((b, c))
            .expect("same size")
    }

    fn train_core(
        &self,
        ps: &ParamSet,
        bufs: &mut BufferSet,
        x: &ArrayView3<f32>,
    ) -> (Array3<f32>, BatchNormCtx) {
        let (b, c, s) = x.dim();
        assert_eq!(c, self.channels);
        let n = (b * s) as f32;
        assert!(b * s > 1, "batch norm needs more than one element per channel");

        let mut mean = vec![0.0f32; c];
        let mut var = vec![0.0f32; c];
        for ci in 0..c {
            let mut acc = 0.0f32;
            for bi in 0..b {
                for si in 0..s {
                    acc += x[[bi, ci, si]];
                }
            }
            let m = acc / n;
            let mut vacc = 0.0f32;
            for bi in 0..b {
                for si in 0..s {
                    let d = x[[bi, ci, si]] - m;
                    vacc += d * d;
                }
            }
            mean[ci] = m;
            var[ci] = vacc / n;
        }

        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut normalized = Array3::<f32>::zeros((b, c, s));
        let gamma = ps.slice(self.gamma);
        let beta = ps.slice(self.beta);
        let mut y = Array3::<f32>::zeros((b, c, s));
        for bi in 0..b {
            for ci in 0..c {
                for si in 0..s {
                    let xh = (x[[bi, ci, si]] - mean[ci]) * inv_std[ci];
                    normalized[[bi, ci, si]] = xh;
                    y[[bi, ci, si]] = gamma[ci] * xh + beta[ci];
                }
            }
        }

        // Running statistics use the unbiased variance, updated as
        // r <- (1 - momentum) * r + momentum * batch_stat.
        let unbias = if b * s > 1 { n / (n - 1.0) } else { 1.0 };
        let rm = bufs.slice_mut(self.running_mean);
        for (r, m) in rm.iter_mut().zip(&mean) {
            *r = (1.0 - self.momentum) * *r + self.momentum * m;
        }
        let rv = bufs.slice_mut(self.running_var);
        for (r, v) in rv.iter_mut().zip(&var) {
            *r = (1.0 - self.momentum) * *r + self.momentum * v * unbias;
        }

        (y, BatchNormCtx { normalized, inv_std })
    }

    fn eval_core(&self, ps: &ParamSet, bufs: &BufferSet, x: &ArrayView3<f32>) -> Array3<f32> {
        let (b, c, s) = x.dim();
        assert_eq!(c, self.channels);
        let gamma = ps.slice(self.gamma);
        let beta = ps.slice(self.beta);
        let rm = bufs.slice(self.running_mean);
        let rv = bufs.slice(self.running_var);
        let mut y = Array3::<f32>::zeros((b, c, s));
        for ci in 0..c {
            let scale = gamma[ci] / (rv[ci] + self.eps).sqrt();
            let shift = beta[ci] - scale * rm[ci];
            for bi in 0..b {
                for si in 0..s {
                    y[[bi, ci, si]] = scale * x[[bi, ci, si]] + shift;
                }
            }
        }
        y
    }

    fn backward_core(&self, ps: &mut ParamSet, ctx: &BatchNormCtx, gy: &ArrayView3<f32>) -> Array3<f32> {
        let (b, c, s) = gy.dim();
        let n = (b * s) as f32;
        let xhat = &ctx.normalized;

        let mut dgamma = vec![0.0f32; c];
        let mut dbeta = vec![0.0f32; c];
        let mut sum_gy = vec![0.0f32; c];
        let mut sum_gy_xhat = vec![0.0f32; c];
        for bi in 0..b {
            for ci in 0..c {
                for si in 0..s {
                    let g = gy[[bi, ci, si]];
                    dbeta[ci] += g;
                    dgamma[ci] += g * xhat[[bi, ci, si]];
                }
            }
        }
        sum_gy.copy_from_slice(&dbeta);
        sum_gy_xhat.copy_from_slice(&dgamma);

        let gamma = ps.slice(self.gamma).to_vec();
        let mut dx = Array3::<f32>::zeros((b, c, s));
        for bi in 0..b {
            for ci in 0..c {
                let k = gamma[ci] * ctx.inv_std[ci] / n;
                for si in 0..s {
                    dx[[bi, ci, si]] = k
                        * (n * gy[[bi, ci, si]]
                            - sum_gy[ci]
                            - xhat[[bi, ci, si]] * sum_gy_xhat[ci]);
                }
            }
        }

        ps.accumulate_grad(self.gamma, &dgamma);
        ps.accumulate_grad(self.beta, &dbeta);
        dx
    }
}
