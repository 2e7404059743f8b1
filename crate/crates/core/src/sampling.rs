//! Frame-index arithmetic for segment-pace clip construction.
//!
//! A clip plan picks `clip_len` source frame indices out of a video of
//! `num_frames` frames. The clip is split into `segments` equal segments; one
//! segment (the altered one) is sampled at an integer speed rate while every
//! other segment keeps natural (stride-1) pace. The altered segment starts at
//!
//! ```text
//! i_b = start + (segment - 1) * (clip_len / segments) + (rate - 1)
//! i_e = i_b + rate * (clip_len / segments - 1)
//! ```
//!
//! so a `(rate - 1)` gap is skipped just before the altered segment and
//! segments after it resume stride-1 at `i_e + 1` with no gap. With
//! `segments == 1` the plan degenerates to whole-clip pace sampling.
//!
//! Everything here is pure index arithmetic: no pixels, no shared state.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bounded retries before falling back to rate 1 when a drawn
/// (rate, segment) admits no valid start offset.
const INFEASIBLE_RETRIES: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
    #[error("plan reaches frame {max_index} but the video ends at frame {last_valid}")]
    OutOfRange { max_index: usize, last_valid: usize },
    #[error("no valid (rate, segment, start) triple exists for these parameters")]
    Infeasible,
    #[error("malformed clip plan record: {0}")]
    BadRecord(String),
}

/// Geometry of the clip plan space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerParams {
    /// Source frame count N.
    pub num_frames: usize,
    /// Output clip length K.
    pub clip_len: usize,
    /// Segment count Z; must divide `clip_len`.
    pub segments: usize,
    /// Highest speed rate Q.
    pub max_rate: usize,
}

impl SamplerParams {
    pub fn new(
        num_frames: usize,
        clip_len: usize,
        segments: usize,
        max_rate: usize,
    ) -> Result<Self, SamplingError> {
        let p = Self { num_frames, clip_len, segments, max_rate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.segments == 0 || self.segments > self.clip_len {
            return Err(SamplingError::InvalidParams(format!(
                "segments must satisfy 1 <= Z <= K, got Z={} K={}",
                self.segments, self.clip_len
            )));
        }
        if self.clip_len % self.segments != 0 {
            return Err(SamplingError::InvalidParams(format!(
                "clip_len {} is not divisible by segments {}",
                self.clip_len, self.segments
            )));
        }
        if self.max_rate == 0 {
            return Err(SamplingError::InvalidParams("max_rate must be >= 1".into()));
        }
        if self.clip_len == 0 || self.clip_len > self.num_frames {
            return Err(SamplingError::InvalidParams(format!(
                "clip_len must satisfy 1 <= K <= N, got K={} N={}",
                self.clip_len, self.num_frames
            )));
        }
        Ok(())
    }

    /// Frames per segment (K/Z).
    pub fn segment_len(&self) -> usize {
        self.clip_len / self.segments
    }

    /// Source frames spanned by a plan at `rate`, independent of which
    /// segment is altered: K + (rate - 1) * (K/Z).
    pub fn span(&self, rate: usize) -> usize {
        self.clip_len + (rate - 1) * self.segment_len()
    }

    /// Largest valid start offset for `rate`, or None when infeasible.
    pub fn max_start(&self, rate: usize) -> Option<usize> {
        self.num_frames.checked_sub(self.span(rate))
    }
}

/// A sampled clip plan: which source frames to pull and the labels the
/// pretext task trains against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VsppSample {
    /// Speed rate of the altered segment, 1..=Q.
    pub rate: usize,
    /// One-based index of the altered segment, 1..=Z.
    pub segment: usize,
    /// Source start offset f_r.
    pub start: usize,
    /// Ordered source frame indices, length K, strictly increasing.
    pub indices: Vec<usize>,
    /// Zero-based class label for speed prediction (rate - 1).
    pub speed_label: usize,
    /// Zero-based class label for segment prediction (segment - 1).
    pub segment_label: usize,
}

impl VsppSample {
    /// Line-oriented text record: `rate=2 segment=2 start=0 indices=0,1,...`.
    pub fn to_record(&self) -> String {
        let idx: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        format!(
            "rate={} segment={} start={} indices={}",
            self.rate,
            self.segment,
            self.start,
            idx.join(",")
        )
    }

    pub fn from_record(line: &str) -> Result<Self, SamplingError> {
        let mut rate = None;
        let mut segment = None;
        let mut start = None;
        let mut indices: Option<Vec<usize>> = None;
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| SamplingError::BadRecord(format!("field `{field}`")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| SamplingError::BadRecord(format!("number `{v}`")))
            };
            match key {
                "rate" => rate = Some(parse(value)?),
                "segment" => segment = Some(parse(value)?),
                "start" => start = Some(parse(value)?),
                "indices" => {
                    indices =
                        Some(value.split(',').map(parse).collect::<Result<Vec<_>, _>>()?)
                }
                other => return Err(SamplingError::BadRecord(format!("key `{other}`"))),
            }
        }
        let (rate, segment, start, indices) = match (rate, segment, start, indices) {
            (Some(r), Some(z), Some(f), Some(i)) => (r, z, f, i),
            _ => return Err(SamplingError::BadRecord("missing field".into())),
        };
        Ok(VsppSample {
            rate,
            segment,
            start,
            indices,
            speed_label: rate - 1,
            segment_label: segment - 1,
        })
    }
}

/// Build the clip plan for an explicit (rate, segment, start) triple.
///
/// Segments before the altered one run stride-1 from `start`; the altered
/// segment runs stride-`rate` from `i_b`; segments after it resume stride-1
/// at `i_e + 1`.
pub fn vspp_indices(
    params: &SamplerParams,
    rate: usize,
    segment: usize,
    start: usize,
) -> Result<VsppSample, SamplingError> {
    params.validate()?;
    if rate < 1 || rate > params.max_rate {
        return Err(SamplingError::InvalidParams(format!(
            "rate must be in 1..={}, got {rate}",
            params.max_rate
        )));
    }
    if segment < 1 || segment > params.segments {
        return Err(SamplingError::InvalidParams(format!(
            "segment must be in 1..={}, got {segment}",
            params.segments
        )));
    }
    let seg_len = params.segment_len();
    let begin = start + (segment - 1) * seg_len + (rate - 1);
    let end = begin + rate * (seg_len - 1);
    let max_index = end + (params.segments - segment) * seg_len;
    if max_index > params.num_frames - 1 {
        return Err(SamplingError::OutOfRange {
            max_index,
            last_valid: params.num_frames - 1,
        });
    }

    let mut indices = Vec::with_capacity(params.clip_len);
    for s in 1..=params.segments {
        if s < segment {
            let base = start + (s - 1) * seg_len;
            indices.extend(base..base + seg_len);
        } else if s == segment {
            indices.extend((0..seg_len).map(|p| begin + rate * p));
        } else {
            let base = (end + 1) + (s - segment - 1) * seg_len;
            indices.extend(base..base + seg_len);
        }
    }
    debug_assert_eq!(indices.len(), params.clip_len);
    debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));

    Ok(VsppSample {
        rate,
        segment,
        start,
        indices,
        speed_label: rate - 1,
        segment_label: segment - 1,
    })
}

/// Draw a random clip plan: rate uniform on 1..=Q, segment uniform on 1..=Z,
/// then start uniform over the offsets valid for that pair.
///
/// When a drawn (rate, segment) admits no valid start, the pair is redrawn up
/// to a bounded retry count and the draw then falls back to rate 1, which is
/// always feasible for valid parameters.
pub fn sample_vspp<R: Rng>(
    params: &SamplerParams,
    rng: &mut R,
) -> Result<VsppSample, SamplingError> {
    params.validate()?;
    for _ in 0..INFEASIBLE_RETRIES {
        let rate = rng.random_range(1..=params.max_rate);
        let segment = rng.random_range(1..=params.segments);
        if let Some(max_start) = params.max_start(rate) {
            let start = rng.random_range(0..=max_start);
            return vspp_indices(params, rate, segment, start);
        }
    }
    // Fallback: natural pace always fits because K <= N.
    let segment = rng.random_range(1..=params.segments);
    let max_start = params.max_start(1).ok_or(SamplingError::Infeasible)?;
    let start = rng.random_range(0..=max_start);
    vspp_indices(params, 1, segment, start)
}

/// Whole-clip pace sampling: the degenerate single-segment case of
/// [`vspp_indices`], so the first index is `start + (rate - 1)` and the
/// stride is `rate` throughout.
pub fn uniform_pace_indices(
    params: &SamplerParams,
    rate: usize,
    start: usize,
) -> Result<VsppSample, SamplingError> {
    let single = SamplerParams {
        segments: 1,
        ..*params
    };
    vspp_indices(&single, rate, 1, start)
}

/// Exhaustively list every valid (rate, segment, start) plan, in
/// lexicographic (rate, segment, start) order.
pub fn enumerate_valid_samples(params: &SamplerParams) -> Vec<VsppSample> {
    if params.validate().is_err() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for rate in 1..=params.max_rate {
        for segment in 1..=params.segments {
            for start in 0..params.num_frames {
                match vspp_indices(params, rate, segment, start) {
                    Ok(sample) => out.push(sample),
                    // Larger starts only push the plan further out.
                    Err(SamplingError::OutOfRange { .. }) => break,
                    Err(_) => break,
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngkey::{derive_rng, tag};
    use proptest::prelude::*;

    fn p(n: usize, k: usize, z: usize, q: usize) -> SamplerParams {
        SamplerParams::new(n, k, z, q).unwrap()
    }

    #[test]
    fn closed_form_example() {
        let sample = vspp_indices(&p(20, 16, 4, 4), 2, 2, 0).unwrap();
        assert_eq!(
            sample.indices,
            vec![0, 1, 2, 3, 5, 7, 9, 11, 12, 13, 14, 15, 16, 17, 18, 19]
        );
        assert_eq!(sample.speed_label, 1);
        assert_eq!(sample.segment_label, 1);
    }

    #[test]
    fn natural_pace_is_contiguous_for_any_segment() {
        let sample = vspp_indices(&p(10, 8, 4, 4), 1, 3, 2).unwrap();
        assert_eq!(sample.indices, vec![2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn altered_second_quarter_matches_figureed_layout() {
        // rate=2, segment=2: second quarter frame-skipped by 2, rest natural.
        let sample = vspp_indices(&p(20, 16, 4, 4), 2, 2, 0).unwrap();
        let diffs: Vec<usize> =
            sample.indices.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(&diffs[..3], &[1, 1, 1]);
        assert_eq!(&diffs[3..7], &[2, 2, 2, 2]);
        assert!(diffs[7..].iter().all(|&d| d == 1));
    }

    #[test]
    fn out_of_range_is_reported() {
        let err = vspp_indices(&p(20, 16, 4, 4), 4, 1, 0).unwrap_err();
        match err {
            SamplingError::OutOfRange { max_index, last_valid } => {
                assert_eq!(last_valid, 19);
                assert!(max_index > 19);
            }
            other => panic!("expected OutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn invalid_triples_are_rejected() {
        assert!(matches!(
            vspp_indices(&p(20, 16, 4, 4), 0, 1, 0),
            Err(SamplingError::InvalidParams(_))
        ));
        assert!(matches!(
            vspp_indices(&p(20, 16, 4, 4), 1, 5, 0),
            Err(SamplingError::InvalidParams(_))
        ));
        assert!(SamplerParams::new(20, 15, 4, 4).is_err());
        assert!(SamplerParams::new(8, 16, 4, 4).is_err());
    }

    #[test]
    fn uniform_pace_closed_form() {
        let sample = uniform_pace_indices(&p(16, 4, 1, 4), 3, 0).unwrap();
        assert_eq!(sample.indices, vec![2, 5, 8, 11]);
        let sample = uniform_pace_indices(&p(16, 4, 1, 4), 1, 5).unwrap();
        assert_eq!(sample.indices, vec![5, 6, 7, 8]);
    }

    #[test]
    fn uniform_pace_equals_single_segment_plan() {
        let params = p(40, 8, 4, 4);
        for rate in 1..=4 {
            for start in 0..8 {
                let a = uniform_pace_indices(&params, rate, start).unwrap();
                let single = p(40, 8, 1, 4);
                let b = vspp_indices(&single, rate, 1, start).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn boundary_clip_equals_video_length() {
        // N == K: only rate-1 plans fit, all with start 0.
        let all = enumerate_valid_samples(&p(8, 8, 4, 4));
        assert_eq!(all.len(), 4);
        for (i, sample) in all.iter().enumerate() {
            assert_eq!(sample.rate, 1);
            assert_eq!(sample.segment, i + 1);
            assert_eq!(sample.start, 0);
            assert_eq!(sample.indices, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn enumeration_contains_and_excludes_expected_plans() {
        let all = enumerate_valid_samples(&p(20, 16, 4, 4));
        assert!(all
            .iter()
            .any(|s| s.rate == 2 && s.segment == 2 && s.start == 0));
        assert!(!all.iter().any(|s| s.rate == 4));
        // span(4) = 16 + 3*4 = 28 > 20, so no rate-4 plan fits at all.
    }

    #[test]
    fn enumeration_monotone_in_video_length() {
        let mut prev = 0;
        for n in 16..48 {
            let count = enumerate_valid_samples(&p(n, 16, 4, 4)).len();
            assert!(count >= prev, "count dropped at N={n}");
            prev = count;
        }
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_stream() {
        let params = p(64, 16, 4, 4);
        let a = sample_vspp(&params, &mut derive_rng(9, &[tag::SAMPLE, 0])).unwrap();
        let b = sample_vspp(&params, &mut derive_rng(9, &[tag::SAMPLE, 0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_draws_fall_back_to_natural_pace() {
        let params = p(8, 8, 4, 4);
        let mut rng = derive_rng(3, &[tag::SAMPLE, 1]);
        for _ in 0..200 {
            let sample = sample_vspp(&params, &mut rng).unwrap();
            assert_eq!(sample.rate, 1);
            assert_eq!(sample.start, 0);
        }
    }

    #[test]
    fn label_histogram_is_uniform_for_long_videos() {
        // With N >> K every (rate, segment) pair is feasible, so labels are
        // uniform multinomials; check counts within 3 sigma.
        let params = p(512, 16, 4, 4);
        let draws = 10_000usize;
        let mut rate_counts = [0usize; 4];
        let mut seg_counts = [0usize; 4];
        let mut rng = derive_rng(11, &[tag::SAMPLE, 2]);
        for _ in 0..draws {
            let s = sample_vspp(&params, &mut rng).unwrap();
            rate_counts[s.speed_label] += 1;
            seg_counts[s.segment_label] += 1;
        }
        let expected = draws as f64 / 4.0;
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for counts in [rate_counts, seg_counts] {
            for c in counts {
                assert!(
                    (c as f64 - expected).abs() <= 3.0 * sigma,
                    "count {c} outside 3 sigma of {expected}"
                );
            }
        }
    }

    #[test]
    fn record_round_trip() {
        let sample = vspp_indices(&p(20, 16, 4, 4), 2, 2, 0).unwrap();
        let line = sample.to_record();
        assert_eq!(VsppSample::from_record(&line).unwrap(), sample);
        assert!(VsppSample::from_record("rate=1 segment=1").is_err());
        assert!(VsppSample::from_record("bogus").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn natural_pace_identity(
            n in 8usize..64,
            z in prop::sample::select(vec![1usize, 2, 4]),
            seed in 0u64..1000,
        ) {
            let k = 8usize;
            let params = p(n, k, z, 4);
            let mut rng = derive_rng(seed, &[tag::SAMPLE, 3]);
            let segment = rng.random_range(1..=z);
            let start = rng.random_range(0..=(n - k));
            let sample = vspp_indices(&params, 1, segment, start).unwrap();
            prop_assert_eq!(sample.indices, (start..start + k).collect::<Vec<_>>());
        }

        #[test]
        fn first_difference_signature(
            rate in 1usize..=4,
            segment in 1usize..=4,
            start in 0usize..8,
        ) {
            let params = p(64, 16, 4, 4);
            let sample = vspp_indices(&params, rate, segment, start).unwrap();
            let seg_len = params.segment_len();
            let diffs: Vec<usize> =
                sample.indices.windows(2).map(|w| w[1] - w[0]).collect();
            for (pos, diff) in diffs.iter().enumerate() {
                // diffs[pos] is the gap entering element pos + 1.
                let elem = pos + 1;
                let seg_of_elem = elem / seg_len + 1;
                let first_of_segment = elem % seg_len == 0;
                let expected = if seg_of_elem == segment && !first_of_segment {
                    rate // inside the altered segment
                } else if seg_of_elem == segment && first_of_segment {
                    rate // the (rate-1)+1 gap entering the altered segment
                } else {
                    1
                };
                prop_assert_eq!(*diff, expected, "pos {}", pos);
            }
        }

        #[test]
        fn indices_stay_in_bounds(
            n in 8usize..64,
            z in prop::sample::select(vec![1usize, 2, 4]),
            q in 1usize..=4,
            seed in 0u64..1000,
        ) {
            let params = p(n, 8, z, q);
            let mut rng = derive_rng(seed, &[tag::SAMPLE, 4]);
            let sample = sample_vspp(&params, &mut rng).unwrap();
            prop_assert!(*sample.indices.last().unwrap() <= n - 1);
            prop_assert!(sample.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(sample.indices.len(), 8);
        }
    }
}
