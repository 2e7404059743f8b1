//! Fully connected layer.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::init;
use super::param::{ParamId, ParamSet};

/// `y = x W^T + b` with weight layout `(out_features, in_features)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

pub struct LinearCtx {
    input: Array2<f32>,
}

impl Linear {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = ps.register(format!("{name}.weight"), &[out_features, in_features]);
        let bias = ps.register(format!("{name}.bias"), &[out_features]);
        init::kaiming_normal(ps.slice_mut(weight), in_features, rng);
        Self { weight, bias, in_features, out_features }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Array2<f32>) -> (Array2<f32>, LinearCtx) {
        let y = self.infer(ps, x);
        (y, LinearCtx { input: x.clone() })
    }

    pub fn infer(&self, ps: &ParamSet, x: &Array2<f32>) -> Array2<f32> {
        assert_eq!(x.ncols(), self.in_features, "linear input width mismatch");
        let w = self.weight_matrix(ps);
        let bias = ps.slice(self.bias);
        let mut y = Array2::<f32>::zeros((x.nrows(), self.out_features));
        general_mat_mul(1.0, &x.view(), &w.t(), 0.0, &mut y.view_mut());
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += *b;
            }
        }
        y
    }

    pub fn backward(&self, ps: &mut ParamSet, ctx: &LinearCtx, gy: &Array2<f32>) -> Array2<f32> {
        let mut dw = Array2::<f32>::zeros((self.out_features, self.in_features));
        general_mat_mul(1.0, &gy.t(), &ctx.input.view(), 0.0, &mut dw.view_mut());
        ps.accumulate_grad(self.weight, dw.as_slice().expect("contiguous"));

        let db: Array1<f32> = gy.sum_axis(Axis(0));
        ps.accumulate_grad(self.bias, db.as_slice().expect("contiguous"));

        let w = self.weight_matrix(ps);
        let mut dx = Array2::<f32>::zeros((gy.nrows(), self.in_features));
        general_mat_mul(1.0, &gy.view(), &w, 0.0, &mut dx.view_mut());
        dx
    }

    fn weight_matrix<'a>(&self, ps: &'a ParamSet) -> ArrayView2<'a, f32> {
        ps.value(self.weight)
            .into_shape_with_order((self.out_features, self.in_features))
            .expect("weight contiguous")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngkey::derive_rng;

    #[test]
    fn forward_matches_manual() {
        let mut ps = ParamSet::new();
        let mut rng = derive_rng(0, &[94]);
        let lin = Linear::new(&mut ps, "fc", 3, 2, &mut rng);
        ps.slice_mut(lin.weight).copy_from_slice(&[1., 0., 2., 0., 1., -1.]);
        ps.slice_mut(lin.bias).copy_from_slice(&[0.5, -0.5]);
        let x = Array2::from_shape_vec((1, 3), vec![1., 2., 3.]).unwrap();
        let (y, _) = lin.forward(&ps, &x);
        assert!((y[[0, 0]] - (1. + 6. + 0.5)).abs() < 1e-6);
        assert!((y[[0, 1]] - (2. - 3. - 0.5)).abs() < 1e-6);
    }

    #[test]
    fn backward_shapes_and_bias_grad() {
        let mut ps = ParamSet::new();
        let mut rng = derive_rng(1, &[93]);
        let lin = Linear::new(&mut ps, "fc", 4, 2, &mut rng);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f32);
        let (_, ctx) = lin.forward(&ps, &x);
        let gy = Array2::from_elem((3, 2), 1.0f32);
        let dx = lin.backward(&mut ps, &ctx, &gy);
        assert_eq!(dx.dim(), (3, 4));
        // Bias gradient is the column sum of gy.
        assert_eq!(ps.grad_slice(lin.bias), &[3.0, 3.0]);
    }
}
