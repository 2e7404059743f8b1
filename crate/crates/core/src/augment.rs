//! Spatial augmentation for decoded clips.
//!
//! One crop window, one flip decision and one color-jitter parameter set are
//! drawn per clip and applied identically to every frame, so augmentation
//! never injects temporal signal — temporal transformation belongs to the
//! sampling module alone. Draws come from a stream derived per
//! (epoch, video id, view index), making two views of the same video in one
//! iteration independent and every draw reproducible.

use ndarray::Array4;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rngkey::{derive_rng, hash_str, tag};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("clip is {h}x{w} but the crop needs at least {crop}x{crop}")]
    TooSmall { h: usize, w: usize, crop: usize },
}

/// Spatial augmentation policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub crop_size: usize,
    pub flip_prob: f64,
    /// Max relative brightness/contrast/saturation deltas and max absolute
    /// hue rotation (fraction of the full hue circle).
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
    /// Disabled policies reduce to a deterministic center crop.
    pub enabled: bool,
}

impl AugmentPolicy {
    /// Paper-scale crop with the usual jitter strengths.
    pub fn paper() -> Self {
        Self {
            crop_size: 112,
            flip_prob: 0.5,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            enabled: true,
        }
    }

    /// Desk-scale crop with milder jitter, tuned so color noise does not
    /// swamp the small-frame motion signal.
    pub fn desk() -> Self {
        Self {
            crop_size: 32,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            hue: 0.05,
            ..Self::paper()
        }
    }

    pub fn disabled(crop_size: usize) -> Self {
        Self {
            crop_size,
            flip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            enabled: false,
        }
    }
}

/// Identifies one augmentation draw: two views of one video in one epoch get
/// independent parameters, and the same key always reproduces the same draw.
#[derive(Debug, Clone, Copy)]
pub struct ViewKey<'a> {
    pub seed: u64,
    pub epoch: usize,
    pub video_id: &'a str,
    pub view: usize,
}

/// Apply the policy to a (3, K, H, W) clip: one random crop window, one flip
/// decision, one jitter parameter set, shared by all frames. Output is
/// (3, K, crop, crop) clamped to [0, 1].
pub fn augment_clip(
    clip: &Array4<f32>,
    policy: &AugmentPolicy,
    key: ViewKey<'_>,
) -> Result<Array4<f32>, AugmentError> {
    let (_, _, h, w) = clip.dim();
    let c = policy.crop_size;
    if h < c || w < c {
        return Err(AugmentError::TooSmall { h, w, crop: c });
    }
    if !policy.enabled {
        return center_crop(clip, c);
    }

    let mut rng = derive_rng(
        key.seed,
        &[tag::AUGMENT, key.epoch as u64, hash_str(key.video_id), key.view as u64],
    );
    let top = rng.random_range(0..=h - c);
    let left = rng.random_range(0..=w - c);
    let flip = rng.random_bool(policy.flip_prob);
    let brightness = 1.0 + rng.random_range(-policy.brightness..=policy.brightness);
    let contrast = 1.0 + rng.random_range(-policy.contrast..=policy.contrast);
    let saturation = 1.0 + rng.random_range(-policy.saturation..=policy.saturation);
    let hue_shift = rng.random_range(-policy.hue..=policy.hue);

    let mut out = crop_window(clip, top, left, c);
    if flip {
        flip_horizontal(&mut out);
    }
    jitter_colors(&mut out, brightness, contrast, saturation, hue_shift);
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Deterministic centered window; temporal length unchanged.
pub fn center_crop(clip: &Array4<f32>, crop_size: usize) -> Result<Array4<f32>, AugmentError> {
    let (_, _, h, w) = clip.dim();
    if h < crop_size || w < crop_size {
        return Err(AugmentError::TooSmall { h, w, crop: crop_size });
    }
    Ok(crop_window(clip, (h - crop_size) / 2, (w - crop_size) / 2, crop_size))
}

fn crop_window(clip: &Array4<f32>, top: usize, left: usize, size: usize) -> Array4<f32> {
    clip.slice(ndarray::s![.., .., top..top + size, left..left + size])
        .to_owned()
}

fn flip_horizontal(clip: &mut Array4<f32>) {
    let (c, k, h, w) = clip.dim();
    for ci in 0..c {
        for t in 0..k {
            for y in 0..h {
                for x in 0..w / 2 {
                    let a = clip[[ci, t, y, x]];
                    clip[[ci, t, y, x]] = clip[[ci, t, y, w - 1 - x]];
                    clip[[ci, t, y, w - 1 - x]] = a;
                }
            }
        }
    }
}

/// Brightness, contrast, saturation as blends; hue as an HSV rotation.
/// Applied framewise with one shared parameter set.
fn jitter_colors(clip: &mut Array4<f32>, brightness: f32, contrast: f32, saturation: f32, hue: f32) {
    let (_, k, h, w) = clip.dim();
    for t in 0..k {
        // Contrast blends toward the mean gray of this frame.
        let mut mean = 0.0f32;
        for y in 0..h {
            for x in 0..w {
                mean += 0.299 * clip[[0, t, y, x]] + 0.587 * clip[[1, t, y, x]] + 0.114 * clip[[2, t, y, x]];
            }
        }
        mean /= (h * w) as f32;
        for y in 0..h {
            for x in 0..w {
                let mut r = clip[[0, t, y, x]] * brightness;
                let mut g = clip[[1, t, y, x]] * brightness;
                let mut b = clip[[2, t, y, x]] * brightness;
                r = mean + (r - mean) * contrast;
                g = mean + (g - mean) * contrast;
                b = mean + (b - mean) * contrast;
                let gray = 0.299 * r + 0.587 * g + 0.114 * b;
                r = gray + (r - gray) * saturation;
                g = gray + (g - gray) * saturation;
                b = gray + (b - gray) * saturation;
                if hue != 0.0 {
                    let (hh, s, v) = rgb_to_hsv(r, g, b);
                    let shifted = (hh + hue).rem_euclid(1.0);
                    let (nr, ng, nb) = hsv_to_rgb(shifted, s, v);
                    r = nr;
                    g = ng;
                    b = nb;
                }
                clip[[0, t, y, x]] = r;
                clip[[1, t, y, x]] = g;
                clip[[2, t, y, x]] = b;
            }
        }
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta.abs() < 1e-8 {
        0.0
    } else if (max - r).abs() < 1e-8 {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if (max - g).abs() < 1e-8 {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max.abs() < 1e-8 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn key(view: usize) -> ViewKey<'static> {
        ViewKey { seed: 5, epoch: 0, video_id: "vid", view }
    }

    fn ramp_clip(k: usize, h: usize, w: usize) -> Array4<f32> {
        Array4::from_shape_fn((3, k, h, w), |(c, t, y, x)| {
            ((c + 1) * (x + 2 * y) + t) as f32 / (3.0 * (h + w) as f32)
        })
    }

    #[test]
    fn disabled_policy_is_center_crop() {
        let clip = ramp_clip(2, 36, 36);
        let policy = AugmentPolicy::disabled(32);
        let out = augment_clip(&clip, &policy, key(0)).unwrap();
        let expected = center_crop(&clip, 32).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn deterministic_per_key_and_independent_across_views() {
        let clip = ramp_clip(2, 40, 40);
        let policy = AugmentPolicy::desk();
        let a = augment_clip(&clip, &policy, key(0)).unwrap();
        let b = augment_clip(&clip, &policy, key(0)).unwrap();
        assert_eq!(a, b);
        let c = augment_clip(&clip, &policy, key(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn flip_reflects_columns() {
        let clip = ramp_clip(1, 32, 32);
        let mut flipped = clip.clone();
        flip_horizontal(&mut flipped);
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(flipped[[0, 0, y, x]], clip[[0, 0, y, 31 - x]]);
            }
        }
    }

    #[test]
    fn too_small_input_is_rejected() {
        let clip = ramp_clip(1, 16, 16);
        let policy = AugmentPolicy::desk();
        assert!(matches!(
            augment_clip(&clip, &policy, key(0)),
            Err(AugmentError::TooSmall { crop: 32, .. })
        ));
        assert!(center_crop(&clip, 32).is_err());
    }

    #[test]
    fn center_crop_arithmetic() {
        // 36x36 input, crop 32: window starts at (2, 2).
        let clip = ramp_clip(1, 36, 36);
        let out = center_crop(&clip, 32).unwrap();
        assert_eq!(out.dim(), (3, 1, 32, 32));
        assert_eq!(out[[0, 0, 0, 0]], clip[[0, 0, 2, 2]]);
        // crop == input size is the identity.
        let same = center_crop(&clip, 36).unwrap();
        assert_eq!(same, clip);
    }

    #[test]
    fn frames_share_one_transform() {
        // A clip with identical frames stays frame-constant after
        // augmentation: parameters are drawn per clip, not per frame.
        let frame = ramp_clip(1, 40, 40);
        let clip = Array4::from_shape_fn((3, 4, 40, 40), |(c, _, y, x)| frame[[c, 0, y, x]]);
        let policy = AugmentPolicy::desk();
        let out = augment_clip(&clip, &policy, key(3)).unwrap();
        for t in 1..4 {
            for c in 0..3 {
                for y in 0..32 {
                    for x in 0..32 {
                        assert_eq!(out[[c, t, y, x]], out[[c, 0, y, x]]);
                    }
                }
            }
        }
    }

    #[test]
    fn temporal_length_is_preserved() {
        let clip = ramp_clip(6, 36, 36);
        let out = augment_clip(&clip, &AugmentPolicy::desk(), key(0)).unwrap();
        assert_eq!(out.dim().1, 6);
    }

    #[test]
    fn output_stays_in_unit_interval() {
        let clip = ramp_clip(2, 40, 40);
        for view in 0..16 {
            let out = augment_clip(&clip, &AugmentPolicy::desk(), key(view)).unwrap();
            assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hsv_round_trip() {
        for (r, g, b) in [(0.2, 0.5, 0.9), (0.9, 0.1, 0.4), (0.3, 0.3, 0.3)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-5 && (g - g2).abs() < 1e-5 && (b - b2).abs() < 1e-5);
        }
    }
}
