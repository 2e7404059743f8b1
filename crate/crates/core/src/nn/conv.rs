//! 3D convolution via im2col + GEMM.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, Array5, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::init;
use super::param::{ParamId, ParamSet};

/// Convolution over (batch, channel, time, height, width) tensors.
///
/// Weight layout is `(out_c, in_c, kt, kh, kw)`; the forward pass lowers each
/// batch item to a `(in_c*kt*kh*kw, out_positions)` column matrix and runs a
/// single GEMM per item.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

/// Saved forward state: the column matrices and the input shape.
pub struct Conv3dCtx {
    cols: Array3<f32>,
    in_shape: [usize; 5],
    out_spatial: [usize; 3],
}

impl Conv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = ps.register(
            format!("{name}.weight"),
            &[out_c, in_c, kernel[0], kernel[1], kernel[2]],
        );
        let bias = ps.register(format!("{name}.bias"), &[out_c]);
        let fan_in = in_c * kernel[0] * kernel[1] * kernel[2];
        init::kaiming_normal(ps.slice_mut(weight), fan_in, rng);
        Self { weight, bias, in_c, out_c, kernel, stride, pad }
    }

    pub fn out_spatial(&self, t: usize, h: usize, w: usize) -> [usize; 3] {
        let dim = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
        [
            dim(t, self.kernel[0], self.stride[0], self.pad[0]),
            dim(h, self.kernel[1], self.stride[1], self.pad[1]),
            dim(w, self.kernel[2], self.stride[2], self.pad[2]),
        ]
    }

    pub fn forward(&self, ps: &ParamSet, x: &Array5<f32>) -> (Array5<f32>, Conv3dCtx) {
        let (y, ctx) = self.forward_impl(ps, x);
        (y, ctx)
    }

    /// Forward without keeping a context (inference).
    pub fn infer(&self, ps: &ParamSet, x: &Array5<f32>) -> Array5<f32> {
        self.forward_impl(ps, x).0
    }

    fn forward_impl(&self, ps: &ParamSet, x: &Array5<f32>) -> (Array5<f32>, Conv3dCtx) {
        let (b, c, t, h, w) = x.dim();
        assert_eq!(c, self.in_c, "input channels {c} != configured {}", self.in_c);
        let [to, ho, wo] = self.out_spatial(t, h, w);
        let positions = to * ho * wo;
        let ck = self.in_c * self.kernel[0] * self.kernel[1] * self.kernel[2];

        let x_std = x.as_standard_layout();
        let x_slice = x_std.as_slice().expect("standard layout");
        let mut cols = Array3::<f32>::zeros((b, ck, positions));
        for bi in 0..b {
            let item = &x_slice[bi * c * t * h * w..(bi + 1) * c * t * h * w];
            let mut col_b = cols.index_axis_mut(Axis(0), bi);
            let col_slice = col_b.as_slice_mut().expect("standard layout");
            self.im2col(item, [t, h, w], [to, ho, wo], col_slice);
        }

        let w2 = self.weight_matrix(ps);
        let bias = ps.value(self.bias);
        let bias = bias.as_slice().expect("bias contiguous");
        let mut y = Array3::<f32>::zeros((b, self.out_c, positions));
        for bi in 0..b {
            let cols_b = cols.index_axis(Axis(0), bi);
            let mut y_b = y.index_axis_mut(Axis(0), bi);
            general_mat_mul(1.0, &w2, &cols_b, 0.0, &mut y_b);
            for (o, mut row) in y_b.rows_mut().into_iter().enumerate() {
                row += bias[o];
            }
        }

        let y5 = y
            .into_shape_with_order((b, self.out_c, to, ho, wo))
            .expect("positions factorization");
        let ctx = Conv3dCtx {
            cols,
            in_shape: [b, c, t, h, w],
            out_spatial: [to, ho, wo],
        };
        (y5, ctx)
    }

    /// Accumulate weight/bias gradients and return the input gradient.
    pub fn backward(&self, ps: &mut ParamSet, ctx: &Conv3dCtx, gy: &Array5<f32>) -> Array5<f32> {
        self.backward_impl(ps, ctx, gy, true)
            .expect("input gradient requested")
    }

    /// Accumulate weight/bias gradients only (first layer of a network).
    pub fn backward_params_only(&self, ps: &mut ParamSet, ctx: &Conv3dCtx, gy: &Array5<f32>) {
        self.backward_impl(ps, ctx, gy, false);
    }

    fn backward_impl(
        &self,
        ps: &mut ParamSet,
        ctx: &Conv3dCtx,
        gy: &Array5<f32>,
        need_input_grad: bool,
    ) -> Option<Array5<f32>> {
        let [b, c, t, h, w] = ctx.in_shape;
        let [to, ho, wo] = ctx.out_spatial;
        let positions = to * ho * wo;
        let ck = c * self.kernel[0] * self.kernel[1] * self.kernel[2];
        debug_assert_eq!(gy.dim(), (b, self.out_c, to, ho, wo));

        let gy_std = gy.as_standard_layout();
        let gy_mat = gy_std
            .view()
            .into_shape_with_order((b, self.out_c, positions))
            .expect("contiguous");

        // Parameter gradients.
        {
            let mut dw = Array2::<f32>::zeros((self.out_c, ck));
            for bi in 0..b {
                let gy_b = gy_mat.index_axis(Axis(0), bi);
                let cols_b = ctx.cols.index_axis(Axis(0), bi);
                general_mat_mul(1.0, &gy_b, &cols_b.t(), 1.0, &mut dw);
            }
            ps.accumulate_grad(self.weight, dw.as_slice().expect("contiguous"));
            let db: Vec<f32> = (0..self.out_c)
                .map(|o| (0..b).map(|bi| gy_mat.index_axis(Axis(0), bi).row(o).sum()).sum())
                .collect();
            ps.accumulate_grad(self.bias, &db);
        }

        if !need_input_grad {
            return None;
        }

        let w2 = self.weight_matrix(ps);
        let mut dx = Array5::<f32>::zeros((b, c, t, h, w));
        let dx_slice = dx.as_slice_mut().expect("standard layout");
        let mut dcol = Array2::<f32>::zeros((ck, positions));
        for bi in 0..b {
            let gy_b = gy_mat.index_axis(Axis(0), bi);
            general_mat_mul(1.0, &w2.t(), &gy_b, 0.0, &mut dcol.view_mut());
            let item = &mut dx_slice[bi * c * t * h * w..(bi + 1) * c * t * h * w];
            self.col2im(dcol.as_slice().expect("contiguous"), [t, h, w], [to, ho, wo], item);
        }
        Some(dx)
    }

    fn weight_matrix<'a>(&self, ps: &'a ParamSet) -> ArrayView2<'a, f32> {
        let ck = self.in_c * self.kernel[0] * self.kernel[1] * self.kernel[2];
        ps.value(self.weight)
            .into_shape_with_order((self.out_c, ck))
            .expect("weight contiguous")
    }

    /// Lower one batch item (C,T,H,W slice) into columns (ck, positions).
    fn im2col(&self, x: &[f32], ithw: [usize; 3], othw: [usize; 3], cols: &mut [f32]) {
        let [t, h, w] = ithw;
        let [to, ho, wo] = othw;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.pad;
        let positions = to * ho * wo;

        let mut row = 0usize;
        for ci in 0..self.in_c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let out_row = &mut cols[row * positions..(row + 1) * positions];
                        row += 1;
                        for ot in 0..to {
                            let it = (ot * st + dt) as isize - pt as isize;
                            for oh in 0..ho {
                                let ih = (oh * sh + dh) as isize - ph as isize;
                                let seg = &mut out_row[(ot * ho + oh) * wo..(ot * ho + oh + 1) * wo];
                                if it < 0 || it >= t as isize || ih < 0 || ih >= h as isize {
                                    seg.fill(0.0);
                                    continue;
                                }
                                let base = ((ci * t + it as usize) * h + ih as usize) * w;
                                if sw == 1 {
                                    // ow + dw - pw must land in [0, w)
                                    let lo = pw.saturating_sub(dw).min(wo);
                                    let hi = (w + pw).saturating_sub(dw).min(wo);
                                    seg[..lo].fill(0.0);
                                    if hi > lo {
                                        let src = base + lo + dw - pw;
                                        seg[lo..hi].copy_from_slice(&x[src..src + (hi - lo)]);
                                    }
                                    seg[hi.max(lo)..].fill(0.0);
                                } else {
                                    for (ow, dst) in seg.iter_mut().enumerate() {
                                        let iw = (ow * sw + dw) as isize - pw as isize;
                                        *dst = if iw >= 0 && iw < w as isize {
                                            x[base + iw as usize]
                                        } else {
                                            0.0
                                        };
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add columns back onto the input gradient of one batch item.
    fn col2im(&self, cols: &[f32], ithw: [usize; 3], othw: [usize; 3], dx: &mut [f32]) {
        let [t, h, w] = ithw;
        let [to, ho, wo] = othw;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.pad;
        let positions = to * ho * wo;

        let mut row = 0usize;
        for ci in 0..self.in_c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let col_row = &cols[row * positions..(row + 1) * positions];
                        row += 1;
                        for ot in 0..to {
                            let it = (ot * st + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let seg = &col_row[(ot * ho + oh) * wo..(ot * ho + oh + 1) * wo];
                                let base = ((ci * t + it as usize) * h + ih as usize) * w;
                                if sw == 1 {
                                    let lo = pw.saturating_sub(dw).min(wo);
                                    let hi = (w + pw).saturating_sub(dw).min(wo);
                                    if hi > lo {
                                        let dst = base + lo + dw - pw;
                                        for (d, s) in
                                            dx[dst..dst + (hi - lo)].iter_mut().zip(&seg[lo..hi])
                                        {
                                            *d += *s;
                                        }
                                    }
                                } else {
                                    for (ow, s) in seg.iter().enumerate() {
                                        let iw = (ow * sw + dw) as isize - pw as isize;
                                        if iw >= 0 && iw < w as isize {
                                            dx[base + iw as usize] += *s;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
