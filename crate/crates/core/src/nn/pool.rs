//! Activation and pooling helpers.

use ndarray::{Array2, Array5};

/// Positions that survived the rectifier.
pub struct ReluCtx {
    mask: Vec<bool>,
}

/// Elementwise max(0, x) on any tensor.
pub fn relu<D: ndarray::Dimension>(
    x: &ndarray::Array<f32, D>,
) -> (ndarray::Array<f32, D>, ReluCtx) {
    let mut y = x.clone();
    let mut mask = Vec::with_capacity(y.len());
    for v in y.iter_mut() {
        let keep = *v > 0.0;
        mask.push(keep);
        if !keep {
            *v = 0.0;
        }
    }
    (y, ReluCtx { mask })
}

pub fn relu_backward<D: ndarray::Dimension>(
    ctx: &ReluCtx,
    gy: &ndarray::Array<f32, D>,
) -> ndarray::Array<f32, D> {
    let mut gx = gy.clone();
    for (g, keep) in gx.iter_mut().zip(&ctx.mask) {
        if !keep {
            *g = 0.0;
        }
    }
    gx
}

/// Mean over time and space: (B, C, T, H, W) -> (B, C).
pub fn global_avg_pool(x: &Array5<f32>) -> Array2<f32> {
    let (b, c, t, h, w) = x.dim();
    let count = (t * h * w) as f32;
    let mut y = Array2::<f32>::zeros((b, c));
    for bi in 0..b {
        for ci in 0..c {
            let mut acc = 0.0f32;
            for ti in 0..t {
                for hi in 0..h {
                    for wi in 0..w {
                        acc += x[[bi, ci, ti, hi, wi]];
                    }
                }
            }
            y[[bi, ci]] = acc / count;
        }
    }
    y
}

pub fn global_avg_pool_backward(gy: &Array2<f32>, in_shape: [usize; 5]) -> Array5<f32> {
    let [b, c, t, h, w] = in_shape;
    let count = (t * h * w) as f32;
    let mut gx = Array5::<f32>::zeros((b, c, t, h, w));
    for bi in 0..b {
        for ci in 0..c {
            let g = gy[[bi, ci]] / count;
            for ti in 0..t {
                for hi in 0..h {
                    for wi in 0..w {
                        gx[[bi, ci, ti, hi, wi]] = g;
                    }
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array5;

    #[test]
    fn relu_round_trip() {
        let x = Array2::from_shape_vec((2, 2), vec![-1., 2., 0., 3.]).unwrap();
        let (y, ctx) = relu(&x);
        assert_eq!(y.as_slice().unwrap(), &[0., 2., 0., 3.]);
        let gy = Array2::from_elem((2, 2), 1.0f32);
        let gx = relu_backward(&ctx, &gy);
        assert_eq!(gx.as_slice().unwrap(), &[0., 1., 0., 1.]);
    }

    #[test]
    fn pooling_means_and_spreads() {
        let x = Array5::from_shape_fn((1, 2, 2, 1, 1), |(_, c, t, _, _)| (c * 2 + t) as f32);
        let y = global_avg_pool(&x);
        assert_eq!(y[[0, 0]], 0.5);
        assert_eq!(y[[0, 1]], 2.5);
        let gy = Array2::from_elem((1, 2), 1.0f32);
        let gx = global_avg_pool_backward(&gy, [1, 2, 2, 1, 1]);
        assert!(gx.iter().all(|v| (*v - 0.5).abs() < 1e-6));
    }
}
