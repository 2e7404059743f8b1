//! Independent reference implementations used only by tests.
//!
//! Nothing here shares code with the modules it checks: the sampler
//! simulation walks segments stepwise instead of using the closed form, the
//! softmax/KL references run in f64, the speed estimator tracks intensity
//! centroids on raw frames, and the gradient checker drives any loss closure
//! through central differences.

use ndarray::Array3;
use thiserror::Error;

use crate::dataio::VideoSource;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("loss is not deterministic: {0} vs {1} at the same point")]
    NonDeterministicLoss(f64, f64),
}

// ---------------------------------------------------------------------------
// Sampler simulation
// ---------------------------------------------------------------------------

/// Build a clip plan by walking the source stepwise: stride 1 before the
/// altered segment, a (rate - 1) skip entering it, stride `rate` inside it,
/// stride 1 after. Returns None when any index would leave the video.
pub fn simulate_plan(
    num_frames: usize,
    clip_len: usize,
    segments: usize,
    rate: usize,
    altered: usize,
    start: usize,
) -> Option<Vec<usize>> {
    if segments == 0 || clip_len % segments != 0 || rate == 0 || altered == 0 || altered > segments {
        return None;
    }
    let seg_len = clip_len / segments;
    let mut indices = Vec::with_capacity(clip_len);
    let mut cursor = start as i64;
    for s in 1..=segments {
        if s == altered {
            cursor += rate as i64 - 1;
            for p in 0..seg_len {
                indices.push(cursor);
                if p + 1 < seg_len {
                    cursor += rate as i64;
                }
            }
            cursor += 1;
        } else {
            for _ in 0..seg_len {
                indices.push(cursor);
                cursor += 1;
            }
        }
    }
    if indices.iter().any(|&i| i < 0 || i as usize >= num_frames) {
        return None;
    }
    Some(indices.into_iter().map(|i| i as usize).collect())
}

/// All feasible (rate, altered, start) triples by brute-force scan, in
/// lexicographic order, with simulated index lists.
pub fn simulate_all_plans(
    num_frames: usize,
    clip_len: usize,
    segments: usize,
    max_rate: usize,
) -> Vec<(usize, usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for rate in 1..=max_rate {
        for altered in 1..=segments {
            for start in 0..num_frames {
                if let Some(indices) =
                    simulate_plan(num_frames, clip_len, segments, rate, altered, start)
                {
                    out.push((rate, altered, start, indices));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// High-precision probability references
// ---------------------------------------------------------------------------

/// f64 softmax of `sims / gamma` with max subtraction.
pub fn softmax_f64(sims: &[f64], gamma: f64) -> Vec<f64> {
    let logits: Vec<f64> = sims.iter().map(|s| s / gamma).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// f64 KL(p || q).
pub fn kl_f64(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Worst disagreement between an analytic gradient and central differences
/// for one named tensor.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    /// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, 1e-12).
    pub rel_error: f64,
    pub step: f64,
}

/// Central-difference gradient of `loss` at `params`.
///
/// The loss is evaluated twice at the unperturbed point first; any
/// disagreement means the closure is not a pure function of the parameters
/// and the check would be meaningless.
pub fn finite_diff_grad(
    loss: &mut dyn FnMut(&[f64]) -> f64,
    params: &[f64],
    eps: f64,
) -> Result<Vec<f64>, OracleError> {
    let base1 = loss(params);
    let base2 = loss(params);
    if base1 != base2 {
        return Err(OracleError::NonDeterministicLoss(base1, base2));
    }
    let mut point = params.to_vec();
    let mut grad = vec![0.0f64; params.len()];
    for i in 0..params.len() {
        point[i] = params[i] + eps;
        let plus = loss(&point);
        point[i] = params[i] - eps;
        let minus = loss(&point);
        point[i] = params[i];
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Relative L2 disagreement between two gradient vectors.
pub fn grad_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

// ---------------------------------------------------------------------------
// f64 reference network primitives
// ---------------------------------------------------------------------------
// Direct (non-lowered) implementations of every probe-model layer, used to
// evaluate a loss in f64 for finite-difference checks against the f32
// training path's analytic gradients.

pub mod refnet {
    use ndarray::{Array1, Array2, Array5};

    pub fn conv3d(
        x: &Array5<f64>,
        weight: &Array5<f64>,
        bias: &[f64],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Array5<f64> {
        let (b, c, t, h, w) = x.dim();
        let out_c = weight.shape()[0];
        assert_eq!(weight.shape()[1], c);
        let (kt, kh, kw) = (weight.shape()[2], weight.shape()[3], weight.shape()[4]);
        let dim = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
        let (to, ho, wo) = (
            dim(t, kt, stride[0], pad[0]),
            dim(h, kh, stride[1], pad[1]),
            dim(w, kw, stride[2], pad[2]),
        );
        let mut y = Array5::<f64>::zeros((b, out_c, to, ho, wo));
        for bi in 0..b {
            for o in 0..out_c {
                for ot in 0..to {
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let mut acc = bias[o];
                            for ci in 0..c {
                                for dt in 0..kt {
                                    let it = (ot * stride[0] + dt) as isize - pad[0] as isize;
                                    if it < 0 || it >= t as isize {
                                        continue;
                                    }
                                    for dh in 0..kh {
                                        let ih = (oh * stride[1] + dh) as isize - pad[1] as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for dw in 0..kw {
                                            let iw =
                                                (ow * stride[2] + dw) as isize - pad[2] as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            acc += weight[[o, ci, dt, dh, dw]]
                                                * x[[bi, ci, it as usize, ih as usize, iw as usize]];
                                        }
                                    }
                                }
                            }
                            y[[bi, o, ot, oh, ow]] = acc;
                        }
                    }
                }
            }
        }
        y
    }

    /// Training-mode batch normalization (biased variance) over all axes
    /// except the channel axis 1.
    pub fn batchnorm5(x: &Array5<f64>, gamma: &[f64], beta: &[f64], eps: f64) -> Array5<f64> {
        let (b, c, t, h, w) = x.dim();
        let n = (b * t * h * w) as f64;
        let mut y = x.clone();
        for ci in 0..c {
            let mut mean = 0.0;
            for bi in 0..b {
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            mean += x[[bi, ci, ti, hi, wi]];
                        }
                    }
                }
            }
            mean /= n;
            let mut var = 0.0;
            for bi in 0..b {
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            let d = x[[bi, ci, ti, hi, wi]] - mean;
                            var += d * d;
                        }
                    }
                }
            }
            var /= n;
            let inv = 1.0 / (var + eps).sqrt();
            for bi in 0..b {
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            y[[bi, ci, ti, hi, wi]] =
                                gamma[ci] * (x[[bi, ci, ti, hi, wi]] - mean) * inv + beta[ci];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn batchnorm2(x: &Array2<f64>, gamma: &[f64], beta: &[f64], eps: f64) -> Array2<f64> {
        let (b, c) = x.dim();
        let n = b as f64;
        let mut y = x.clone();
        for ci in 0..c {
            let mean: f64 = (0..b).map(|bi| x[[bi, ci]]).sum::<f64>() / n;
            let var: f64 =
                (0..b).map(|bi| (x[[bi, ci]] - mean) * (x[[bi, ci]] - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for bi in 0..b {
                y[[bi, ci]] = gamma[ci] * (x[[bi, ci]] - mean) * inv + beta[ci];
            }
        }
        y
    }

    pub fn relu5(x: &Array5<f64>) -> Array5<f64> {
        x.mapv(|v| v.max(0.0))
    }

    pub fn relu2(x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| v.max(0.0))
    }

    pub fn global_avg_pool(x: &Array5<f64>) -> Array2<f64> {
        let (b, c, t, h, w) = x.dim();
        let n = (t * h * w) as f64;
        let mut y = Array2::<f64>::zeros((b, c));
        for bi in 0..b {
            for ci in 0..c {
                let mut acc = 0.0;
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            acc += x[[bi, ci, ti, hi, wi]];
                        }
                    }
                }
                y[[bi, ci]] = acc / n;
            }
        }
        y
    }

    /// y = x W^T + b with weight rows as output features.
    pub fn linear(x: &Array2<f64>, weight: &Array2<f64>, bias: &[f64]) -> Array2<f64> {
        let (b, _) = x.dim();
        let out = weight.nrows();
        let mut y = Array2::<f64>::zeros((b, out));
        for bi in 0..b {
            for o in 0..out {
                let mut acc = bias[o];
                for i in 0..weight.ncols() {
                    acc += x[[bi, i]] * weight[[o, i]];
                }
                y[[bi, o]] = acc;
            }
        }
        y
    }

    pub fn l2_normalize_rows(x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        y
    }

    /// Batch-mean KL(p_teacher || softmax(z A^T / gamma)).
    pub fn distill_kl(
        z: &Array2<f64>,
        anchors: &Array2<f64>,
        teacher_probs: &Array2<f64>,
        gamma: f64,
    ) -> f64 {
        let b = z.nrows();
        let mut total = 0.0;
        for bi in 0..b {
            let logits: Vec<f64> = anchors
                .rows()
                .into_iter()
                .map(|a| a.iter().zip(z.row(bi)).map(|(x, y)| x * y).sum::<f64>() / gamma)
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
            for (j, l) in logits.iter().enumerate() {
                let p = teacher_probs[[bi, j]];
                if p > 0.0 {
                    total += p * (p.ln() - (l - log_sum));
                }
            }
        }
        total / b as f64
    }

    /// Batch-mean softmax cross entropy.
    pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
        let b = logits.nrows();
        let mut total = 0.0;
        for (bi, &label) in labels.iter().enumerate() {
            let row: Vec<f64> = logits.row(bi).to_vec();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
            total += log_sum - row[label];
        }
        total / b as f64
    }

    pub fn to_f64_5(x: &ndarray::Array5<f32>) -> Array5<f64> {
        x.mapv(|v| v as f64)
    }

    pub fn to_f64_2(x: &ndarray::Array2<f32>) -> Array2<f64> {
        x.mapv(|v| v as f64)
    }

    pub fn arr1_f64(x: &[f64]) -> Array1<f64> {
        Array1::from_vec(x.to_vec())
    }
}

// ---------------------------------------------------------------------------
// Displacement-based speed reference
// ---------------------------------------------------------------------------

/// Intensity centroid of the shape against the dark background.
pub fn intensity_centroid(frame: &Array3<f32>) -> Option<(f32, f32)> {
    let (_, h, w) = frame.dim();
    let mut sum_w = 0.0f64;
    let mut sum_x = 0.0f64;
    let mut sum_y = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let lum =
                0.299 * frame[[0, y, x]] + 0.587 * frame[[1, y, x]] + 0.114 * frame[[2, y, x]];
            let weight = (lum - 0.35).max(0.0) as f64;
            sum_w += weight;
            sum_x += weight * (x as f64 + 0.5);
            sum_y += weight * (y as f64 + 0.5);
        }
    }
    if sum_w < 1e-9 {
        return None;
    }
    Some(((sum_x / sum_w) as f32, (sum_y / sum_w) as f32))
}

/// Mean centroid displacement between consecutive clip frames, i.e. the
/// apparent per-step speed of the decoded clip.
pub fn reference_speed_estimate(video: &VideoSource, indices: &[usize]) -> Option<f32> {
    let mut centers = Vec::with_capacity(indices.len());
    for &i in indices {
        let frame = video.frame(i).ok()?;
        centers.push(intensity_centroid(&frame)?);
    }
    if centers.len() < 2 {
        return None;
    }
    let total: f32 = centers
        .windows(2)
        .map(|w| {
            let dx = w[1].0 - w[0].0;
            let dy = w[1].1 - w[0].1;
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Some(total / (centers.len() - 1) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synth_dataset, MotionKind, SynthSpec, SynthVideo, VideoSource};

    #[test]
    fn simulation_matches_hand_worked_example() {
        let indices = simulate_plan(20, 16, 4, 2, 2, 0).unwrap();
        assert_eq!(indices, vec![0, 1, 2, 3, 5, 7, 9, 11, 12, 13, 14, 15, 16, 17, 18, 19]);
    }

    #[test]
    fn simulation_rejects_out_of_bounds() {
        assert!(simulate_plan(20, 16, 4, 4, 1, 0).is_none());
        assert!(simulate_plan(8, 8, 4, 2, 1, 0).is_none());
        assert!(simulate_plan(8, 8, 4, 1, 2, 0).is_some());
    }

    #[test]
    fn quadratic_probe_gradient() {
        // L = 0.5 ||theta||^2 has gradient theta.
        let theta: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) * 0.3).collect();
        let mut loss = |p: &[f64]| 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        let grad = finite_diff_grad(&mut loss, &theta, 1e-4).unwrap();
        for (g, t) in grad.iter().zip(&theta) {
            assert!((g - t).abs() < 1e-6, "{g} vs {t}");
        }
    }

    #[test]
    fn nondeterministic_loss_is_rejected() {
        let mut calls = 0usize;
        let mut loss = |_: &[f64]| {
            calls += 1;
            calls as f64
        };
        assert!(matches!(
            finite_diff_grad(&mut loss, &[0.0], 1e-4),
            Err(OracleError::NonDeterministicLoss(_, _))
        ));
    }

    #[test]
    fn softmax_reference_saturates_at_sharp_temperature() {
        let p = softmax_f64(&[1.0, 0.0], 0.02);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    fn linear_video(speed: f32) -> (VideoSource, SynthVideo) {
        let spec = SynthSpec {
            num_classes: 1,
            videos_per_class: 1,
            frames_per_video: 24,
            frame_size: 48,
            base_speed_range: (1.0, 1.0),
            seed: 21,
        };
        let ds = generate_synth_dataset(&spec).unwrap();
        let mut recipe = ds.videos[0].synth_video().unwrap().clone();
        recipe.speed = speed;
        recipe.motion = MotionKind::Linear;
        recipe.origin = (24.0, 24.0);
        recipe.phase = 0.0;
        (
            VideoSource::synthetic("probe".into(), 24, None, recipe.clone()),
            recipe,
        )
    }

    #[test]
    fn centroid_tracks_linear_motion() {
        let (video, recipe) = linear_video(1.5);
        let natural: Vec<usize> = (0..8).collect();
        let est = reference_speed_estimate(&video, &natural).unwrap();
        assert!(
            (est - recipe.speed).abs() < 0.5,
            "estimated {est}, rendered speed {}",
            recipe.speed
        );
    }

    #[test]
    fn static_video_measures_zero() {
        let (video, _) = linear_video(0.0);
        let est = reference_speed_estimate(&video, &[0, 1, 2, 3]).unwrap();
        assert!(est < 0.05, "static video moved {est}");
    }

    #[test]
    fn stride_two_matches_double_speed() {
        let (slow, _) = linear_video(1.0);
        let (fast, _) = linear_video(2.0);
        let strided: Vec<usize> = (0..8).map(|i| i * 2).collect();
        let natural: Vec<usize> = (0..8).collect();
        let est_strided = reference_speed_estimate(&slow, &strided).unwrap();
        let est_fast = reference_speed_estimate(&fast, &natural).unwrap();
        assert!(
            (est_strided - est_fast).abs() < 0.5,
            "stride-2 of speed-1: {est_strided}, speed-2 natural: {est_fast}"
        );
    }
}
