//! Overlapping-segment planning and latent blending for long-video
//! generation.
//!
//! An N-frame video is produced as segments of T content frames (each
//! carrying two extra leading reference slots), stepping by T - o so that
//! consecutive segments share o content frames. The last segment is clamped
//! to end exactly at N. Overlapping latents are blended with per-frame
//! normalized weights; within a segment the raw weight is a symmetric
//! linear ramp, so a segment contributes least at its borders where its
//! temporal context is weakest. Weights over each frame sum to one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("need N >= T, got N = {n}, T = {t}")]
    TooFewFrames { n: usize, t: usize },
    #[error("overlap {overlap} must be smaller than segment length {t}")]
    OverlapTooLarge { overlap: usize, t: usize },
    #[error("T must be at least 1")]
    ZeroSegmentLength,
    #[error("expected {expected} segments, got {got}")]
    SegmentCountMismatch { expected: usize, got: usize },
    #[error("segment {index} has {got} frames, expected {expected} (2 reference slots + T)")]
    SegmentFrameCount {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("latent frames must all have the same length")]
    LatentShapeMismatch,
}

/// One planned segment: it generates content frames [start, start + T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// The segment layout and per-frame blending weights for an N-frame video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub total_content_frames: usize,
    pub segment_content_len: usize,
    pub overlap: usize,
    pub segments: Vec<Segment>,
    /// weights[frame] lists (segment index, weight) pairs, ascending by
    /// segment index, summing to 1.
    pub weights: Vec<Vec<(usize, f64)>>,
}

/// The denoised latents of one segment: two leading reference slots
/// followed by T content frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSegment {
    pub segment_index: usize,
    pub frames: Vec<Vec<f64>>,
}

/// Plans segment starts for N content frames: 0, T-o, 2(T-o), ... with the
/// final start clamped to N - T when the natural stride would overshoot.
/// The returned plan has its blending weights filled in.
pub fn plan_segments(n: usize, t: usize, overlap: usize) -> Result<FusionPlan, FusionError> {
    if t == 0 {
        return Err(FusionError::ZeroSegmentLength);
    }
    if overlap >= t {
        return Err(FusionError::OverlapTooLarge { overlap, t });
    }
    if n < t {
        return Err(FusionError::TooFewFrames { n, t });
    }

    let stride = t - overlap;
    let mut starts = vec![0usize];
    loop {
        let last = *starts.last().expect("starts never empty");
        if last + t >= n {
            break;
        }
        let next = last + stride;
        if next + t <= n {
            starts.push(next);
        } else {
            // The natural stride overshoots: clamp so the segment ends at N.
            starts.push(n - t);
        }
    }

    let segments = starts
        .iter()
        .enumerate()
        .map(|(index, &start)| Segment {
            index,
            start,
            end: start + t,
        })
        .collect();
    let mut plan = FusionPlan {
        total_content_frames: n,
        segment_content_len: t,
        overlap,
        segments,
        weights: Vec::new(),
    };
    plan.weights = fusion_weights(&plan);
    Ok(plan)
}

/// Raw blending weight of a position within a segment: a symmetric ramp
/// 1, 2, ..., peaking mid-segment, ..., 2, 1.
fn ramp_weight(position: usize, t: usize) -> f64 {
    (position + 1).min(t - position) as f64
}

/// Per-frame normalized weights for a planned segment layout.
pub fn fusion_weights(plan: &FusionPlan) -> Vec<Vec<(usize, f64)>> {
    let t = plan.segment_content_len;
    let mut weights: Vec<Vec<(usize, f64)>> = vec![Vec::new(); plan.total_content_frames];
    for segment in &plan.segments {
        for position in 0..t {
            let frame = segment.start + position;
            weights[frame].push((segment.index, ramp_weight(position, t)));
        }
    }
    for frame_weights in &mut weights {
        let total: f64 = frame_weights.iter().map(|(_, w)| w).sum();
        for (_, w) in frame_weights.iter_mut() {
            *w /= total;
        }
    }
    weights
}

/// Blends per-segment latents into N content frames. Reference slots (the
/// first two frames of every segment) are dropped; each output frame is the
/// weighted sum of the covering segments' content latents, accumulated in
/// ascending segment order so results are bitwise reproducible.
pub fn fuse(segments: &[LatentSegment], plan: &FusionPlan) -> Result<Vec<Vec<f64>>, FusionError> {
    if segments.len() != plan.segments.len() {
        return Err(FusionError::SegmentCountMismatch {
            expected: plan.segments.len(),
            got: segments.len(),
        });
    }
    let t = plan.segment_content_len;
    let mut latent_len = None;
    for (i, segment) in segments.iter().enumerate() {
        if segment.frames.len() != t + 2 {
            return Err(FusionError::SegmentFrameCount {
                index: i,
                got: segment.frames.len(),
                expected: t + 2,
            });
        }
        for frame in &segment.frames {
            match latent_len {
                None => latent_len = Some(frame.len()),
                Some(len) if len == frame.len() => {}
                Some(_) => return Err(FusionError::LatentShapeMismatch),
            }
        }
    }
    let latent_len = latent_len.unwrap_or(0);

    let mut out = vec![vec![0.0; latent_len]; plan.total_content_frames];
    for (frame, frame_weights) in plan.weights.iter().enumerate() {
        for &(segment_index, weight) in frame_weights {
            let segment = &plan.segments[segment_index];
            let position = frame - segment.start;
            let latent = &segments[segment_index].frames[2 + position];
            for (o, &v) in out[frame].iter_mut().zip(latent) {
                *o += weight * v;
            }
        }
    }
    Ok(out)
}
