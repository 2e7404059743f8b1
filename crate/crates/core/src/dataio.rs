//! Video sources and clip decoding.
//!
//! Two backends: a synthetic moving-shape generator whose pixel content is a
//! pure function of (video id, frame index), and directories of pre-extracted
//! frames. Both decode to (3, H, W) float frames in [0, 1]. Synthetic frames
//! are rendered to 8-bit before normalization so an exported-to-disk copy
//! decodes to bit-identical floats.
//!
//! Synthetic motion is parameterized by `speed * frame_index`, which is what
//! makes pace prediction learnable: sampling a speed-s video at stride r
//! shows exactly the per-step displacement of a speed-(r*s) video at stride
//! one. The background carries seeded low-amplitude noise so appearance alone
//! cannot solve the task.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rngkey::{derive_rng, tag};
use crate::sampling::VsppSample;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("no image frames found in {0}")]
    EmptyDirectory(PathBuf),
    #[error("unreadable frame {path}: {reason}")]
    UnreadableFrame { path: PathBuf, reason: String },
    #[error("frame index {index} out of range for video with {num_frames} frames")]
    OutOfRange { index: usize, num_frames: usize },
    #[error("bad manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Disk,
    Cross,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Linear,
    Circular,
    Oscillating,
}

const ALL_SHAPES: [ShapeKind; 4] =
    [ShapeKind::Square, ShapeKind::Disk, ShapeKind::Cross, ShapeKind::Triangle];
const ALL_MOTIONS: [MotionKind; 3] =
    [MotionKind::Linear, MotionKind::Circular, MotionKind::Oscillating];

/// Class identities are (shape, motion) pairs drawn from a canonical list.
/// Diagonal pairing walks both cycles together, so consecutive classes
/// differ in shape and (usually) motion, giving every class an appearance
/// cue and a motion cue.
pub fn class_table(num_classes: usize) -> Vec<(ShapeKind, MotionKind)> {
    (0..num_classes)
        .map(|i| (ALL_SHAPES[i % ALL_SHAPES.len()], ALL_MOTIONS[i % ALL_MOTIONS.len()]))
        .collect()
}

/// Recipe for a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    /// Square frame side in pixels.
    pub frame_size: usize,
    /// Per-video base speed is drawn uniformly from this range (px/frame).
    pub base_speed_range: (f32, f32),
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_classes == 0 || self.num_classes > ALL_SHAPES.len() * ALL_MOTIONS.len() {
            return Err(DataError::InvalidSpec(format!(
                "num_classes must be in 1..={}, got {}",
                ALL_SHAPES.len() * ALL_MOTIONS.len(),
                self.num_classes
            )));
        }
        if self.videos_per_class == 0 || self.frames_per_video == 0 {
            return Err(DataError::InvalidSpec("empty videos or frames".into()));
        }
        if self.frame_size < 16 {
            return Err(DataError::InvalidSpec("frame_size must be >= 16".into()));
        }
        if self.base_speed_range.0 <= 0.0 || self.base_speed_range.1 < self.base_speed_range.0 {
            return Err(DataError::InvalidSpec("bad base_speed_range".into()));
        }
        Ok(())
    }
}

/// Everything needed to render one synthetic video deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthVideo {
    pub shape: ShapeKind,
    pub motion: MotionKind,
    /// Pixels of motion-path parameter advanced per frame.
    pub speed: f32,
    pub frame_size: usize,
    pub shape_radius: f32,
    /// Start position of the motion path.
    pub origin: (f32, f32),
    /// Unit direction (linear), or ignored for circular/oscillating.
    pub direction: (f32, f32),
    /// Circle radius / oscillation amplitude in pixels.
    pub extent: f32,
    /// Initial path phase in pixels of arc length.
    pub phase: f32,
    /// Spin of the shape, radians per pixel of path parameter.
    pub spin: f32,
    pub color: [f32; 3],
    pub noise_seed: u64,
}

impl SynthVideo {
    /// Shape center after `u = speed * frame_index` pixels of path parameter.
    pub fn center_at(&self, u: f32) -> (f32, f32) {
        let size = self.frame_size as f32;
        let margin = self.shape_radius + 2.0;
        match self.motion {
            MotionKind::Linear => {
                let x = reflect(self.origin.0 + self.direction.0 * (u + self.phase), margin, size - margin);
                let y = reflect(self.origin.1 + self.direction.1 * (u + self.phase), margin, size - margin);
                (x, y)
            }
            MotionKind::Circular => {
                let angle = (u + self.phase) / self.extent;
                (
                    self.origin.0 + self.extent * angle.cos(),
                    self.origin.1 + self.extent * angle.sin(),
                )
            }
            MotionKind::Oscillating => {
                let s = ((u + self.phase) / self.extent).sin();
                (
                    self.origin.0 + self.direction.0 * self.extent * s,
                    self.origin.1 + self.direction.1 * self.extent * s,
                )
            }
        }
    }

    /// Render frame `t` as 8-bit RGB.
    pub fn render_u8(&self, t: usize) -> Vec<u8> {
        let size = self.frame_size;
        let u = self.speed * t as f32;
        let (cx, cy) = self.center_at(u);
        let theta = self.spin * (u + self.phase);
        let (sin_t, cos_t) = theta.sin_cos();

        let mut noise = derive_rng(self.noise_seed, &[tag::SYNTH_NOISE, t as u64]);
        let mut out = vec![0u8; 3 * size * size];
        for py in 0..size {
            for px in 0..size {
                // Background: mid gray plus low-amplitude seeded noise.
                let n: f32 = noise.random_range(-0.02..0.02);
                let bg = 0.25 + n;
                // Rotate into the shape frame.
                let dx = px as f32 + 0.5 - cx;
                let dy = py as f32 + 0.5 - cy;
                let rx = cos_t * dx + sin_t * dy;
                let ry = -sin_t * dx + cos_t * dy;
                let dist = self.signed_distance(rx, ry);
                let alpha = (0.5 - dist).clamp(0.0, 1.0);
                for ch in 0..3 {
                    let v = bg + alpha * (self.color[ch] - bg);
                    out[(ch * size + py) * size + px] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
        out
    }

    fn signed_distance(&self, x: f32, y: f32) -> f32 {
        let r = self.shape_radius;
        match self.shape {
            ShapeKind::Square => x.abs().max(y.abs()) - r,
            ShapeKind::Disk => (x * x + y * y).sqrt() - r,
            ShapeKind::Cross => {
                let bar_w = r * 0.35;
                let horiz = (x.abs() - r).max(y.abs() - bar_w);
                let vert = (x.abs() - bar_w).max(y.abs() - r);
                horiz.min(vert)
            }
            ShapeKind::Triangle => {
                // Equilateral triangle of circumradius r.
                let k = 3.0f32.sqrt();
                let mut px = x.abs() - r;
                let mut py = y + r / k;
                if px + k * py > 0.0 {
                    let (nx, ny) = ((px - k * py) / 2.0, (-k * px - py) / 2.0);
                    px = nx;
                    py = ny;
                }
                px -= px.clamp(-2.0 * r, 0.0);
                -(px * px + py * py).sqrt() * py.signum()
            }
        }
    }
}

/// Triangle-wave reflection of `x` into [lo, hi]; continuous bouncing.
fn reflect(x: f32, lo: f32, hi: f32) -> f32 {
    if hi <= lo {
        return lo;
    }
    let period = 2.0 * (hi - lo);
    let mut y = (x - lo).rem_euclid(period);
    if y > period / 2.0 {
        y = period - y;
    }
    lo + y
}

#[derive(Debug)]
enum FrameBackend {
    Synth(Box<SynthVideo>),
    Dir(FrameDir),
}

#[derive(Debug)]
struct FrameDir {
    files: Vec<PathBuf>,
    height: usize,
    width: usize,
}

/// A video with known frame count and optional class label.
#[derive(Debug)]
pub struct VideoSource {
    pub id: String,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub label: Option<usize>,
    backend: FrameBackend,
}

impl VideoSource {
    pub fn synthetic(id: String, num_frames: usize, label: Option<usize>, video: SynthVideo) -> Self {
        let size = video.frame_size;
        Self {
            id,
            num_frames,
            height: size,
            width: size,
            label,
            backend: FrameBackend::Synth(Box::new(video)),
        }
    }

    /// The synthetic recipe behind this source, when it has one.
    pub fn synth_video(&self) -> Option<&SynthVideo> {
        match &self.backend {
            FrameBackend::Synth(v) => Some(v),
            FrameBackend::Dir(_) => None,
        }
    }

    /// Fetch frame `t` as (3, H, W) floats in [0, 1].
    pub fn frame(&self, t: usize) -> Result<Array3<f32>, DataError> {
        if t >= self.num_frames {
            return Err(DataError::OutOfRange { index: t, num_frames: self.num_frames });
        }
        match &self.backend {
            FrameBackend::Synth(video) => {
                let raw = video.render_u8(t);
                let size = video.frame_size;
                Ok(Array3::from_shape_vec(
                    (3, size, size),
                    raw.iter().map(|&v| v as f32 / 255.0).collect(),
                )
                .expect("render size"))
            }
            FrameBackend::Dir(dir) => {
                let path = &dir.files[t];
                let img = image::open(path).map_err(|e| DataError::UnreadableFrame {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                let rgb = img.to_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                if (h, w) != (dir.height, dir.width) {
                    return Err(DataError::UnreadableFrame {
                        path: path.clone(),
                        reason: format!(
                            "frame is {w}x{h} but the first frame was {}x{}",
                            dir.width, dir.height
                        ),
                    });
                }
                let mut out = Array3::<f32>::zeros((3, h, w));
                for (y, x_, pixel) in rgb.enumerate_pixels().map(|(x_, y, p)| (y as usize, x_ as usize, p)) {
                    for ch in 0..3 {
                        out[[ch, y, x_]] = pixel.0[ch] as f32 / 255.0;
                    }
                }
                Ok(out)
            }
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Load a directory of lexicographically ordered image frames.
pub fn load_frame_dir(path: &Path) -> Result<VideoSource, DataError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let p = entry.path();
        let ext_ok = p
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if !ext_ok {
            return Err(DataError::UnreadableFrame {
                path: p,
                reason: "not an image file".into(),
            });
        }
        files.push(p);
    }
    if files.is_empty() {
        return Err(DataError::EmptyDirectory(path.to_path_buf()));
    }
    files.sort();

    let first = image::open(&files[0]).map_err(|e| DataError::UnreadableFrame {
        path: files[0].clone(),
        reason: e.to_string(),
    })?;
    let (width, height) = (first.width() as usize, first.height() as usize);
    let id = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("video")
        .to_string();
    let num_frames = files.len();
    Ok(VideoSource {
        id,
        num_frames,
        height,
        width,
        label: None,
        backend: FrameBackend::Dir(FrameDir { files, height, width }),
    })
}

/// A labeled collection of videos with train/val/test membership.
pub struct Dataset {
    pub videos: Vec<VideoSource>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Generate the synthetic dataset: `num_classes * videos_per_class` videos
/// with deterministic, per-class-stratified 80/10/10 splits.
pub fn generate_synth_dataset(spec: &SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let table = class_table(spec.num_classes);
    let mut videos = Vec::new();
    let mut splits = Vec::new();
    let per = spec.videos_per_class;
    let n_train = per * 8 / 10;
    let n_val = per / 10;
    for (class, &(shape, motion)) in table.iter().enumerate() {
        for j in 0..per {
            let global = class * per + j;
            let id = format!("synth{global:05}");
            let video = make_synth_video(spec, shape, motion, global as u64);
            videos.push(VideoSource::synthetic(
                id,
                spec.frames_per_video,
                Some(class),
                video,
            ));
            splits.push(if j < n_train {
                Split::Train
            } else if j < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(Dataset { videos, splits })
}

fn make_synth_video(spec: &SynthSpec, shape: ShapeKind, motion: MotionKind, index: u64) -> SynthVideo {
    let mut rng = derive_rng(spec.seed, &[tag::SYNTH_VIDEO, index]);
    let size = spec.frame_size as f32;
    let speed = rng.random_range(spec.base_speed_range.0..=spec.base_speed_range.1);
    let radius = rng.random_range(0.14 * size..0.18 * size);
    let margin = radius + 2.0;
    let extent = rng.random_range(0.15 * size..0.25 * size);
    // Keep circular and oscillating paths inside the frame by construction.
    let lo = margin + extent;
    let hi = size - margin - extent;
    let path_center = (rng.random_range(lo..hi.max(lo + 0.1)), rng.random_range(lo..hi.max(lo + 0.1)));
    let angle = rng.random_range(0.0..std::f32::consts::TAU);
    // A small shared palette instead of per-video colors: with only a few
    // colors across many videos, appearance alone can neither identify an
    // instance nor a class, so similarity and pace tasks must use motion.
    const PALETTE: [[f32; 3]; 4] = [
        [0.95, 0.85, 0.3],
        [0.4, 0.8, 0.95],
        [0.9, 0.5, 0.85],
        [0.7, 0.95, 0.5],
    ];
    let color = PALETTE[rng.random_range(0..PALETTE.len())];
    let origin = match motion {
        MotionKind::Linear => (
            rng.random_range(margin..size - margin),
            rng.random_range(margin..size - margin),
        ),
        _ => path_center,
    };
    SynthVideo {
        shape,
        motion,
        speed,
        frame_size: spec.frame_size,
        shape_radius: radius,
        origin,
        direction: (angle.cos(), angle.sin()),
        extent,
        phase: rng.random_range(0.0..size),
        spin: rng.random_range(0.01..0.05),
        color,
        noise_seed: spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index + 1)),
    }
}

/// Pull the planned frames out of a source as a (3, K, H, W) clip.
pub fn decode_clip(src: &VideoSource, sample: &VsppSample) -> Result<Array4<f32>, DataError> {
    let k = sample.indices.len();
    let mut clip = Array4::<f32>::zeros((3, k, src.height, src.width));
    for (t, &index) in sample.indices.iter().enumerate() {
        let frame = src.frame(index)?;
        clip.index_axis_mut(ndarray::Axis(1), t).assign(&frame);
    }
    Ok(clip)
}

// ---------------------------------------------------------------------------
// Manifest and frame export
// ---------------------------------------------------------------------------

/// Write `<root>/<video_id>/frame_%06d.png` for every video and a manifest
/// listing (id, path, frames, label, split).
pub fn export_frames(dataset: &Dataset, root: &Path) -> Result<PathBuf, DataError> {
    std::fs::create_dir_all(root)?;
    for video in &dataset.videos {
        let dir = root.join(&video.id);
        std::fs::create_dir_all(&dir)?;
        for t in 0..video.num_frames {
            let frame = video.frame(t)?;
            let (h, w) = (video.height, video.width);
            let mut buf = vec![0u8; h * w * 3];
            for y in 0..h {
                for x_ in 0..w {
                    for ch in 0..3 {
                        buf[(y * w + x_) * 3 + ch] =
                            (frame[[ch, y, x_]].clamp(0.0, 1.0) * 255.0).round() as u8;
                    }
                }
            }
            let img = image::RgbImage::from_raw(w as u32, h as u32, buf).expect("sized buffer");
            img.save(dir.join(format!("frame_{t:06}.png")))
                .map_err(|e| DataError::UnreadableFrame {
                    path: dir.join(format!("frame_{t:06}.png")),
                    reason: e.to_string(),
                })?;
        }
    }
    let manifest = root.join("manifest.tsv");
    write_manifest(dataset, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut text = String::from("# segpace-manifest v1\n# id\tpath\tframes\tlabel\tsplit\n");
    for (video, split) in dataset.videos.iter().zip(&dataset.splits) {
        let label = video.label.map_or("-".to_string(), |l| l.to_string());
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            video.id, video.id, video.num_frames, label, split
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a manifest and open every listed frame directory (paths are relative
/// to the manifest's parent directory).
pub fn load_manifest(path: &Path) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut videos = Vec::new();
    let mut splits = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(DataError::BadManifest {
                line: lineno + 1,
                reason: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let mut video = load_frame_dir(&root.join(fields[1]))?;
        video.id = fields[0].to_string();
        let frames: usize = fields[2].parse().map_err(|_| DataError::BadManifest {
            line: lineno + 1,
            reason: format!("bad frame count `{}`", fields[2]),
        })?;
        if frames != video.num_frames {
            return Err(DataError::BadManifest {
                line: lineno + 1,
                reason: format!("manifest says {frames} frames, directory has {}", video.num_frames),
            });
        }
        video.label = match fields[3] {
            "-" => None,
            other => Some(other.parse().map_err(|_| DataError::BadManifest {
                line: lineno + 1,
                reason: format!("bad label `{other}`"),
            })?),
        };
        let split: Split = fields[4].parse().map_err(|reason| DataError::BadManifest {
            line: lineno + 1,
            reason,
        })?;
        videos.push(video);
        splits.push(split);
    }
    Ok(Dataset { videos, splits })
}
