//! Seeded implementations of the stochastic training and fine-tuning
//! policies: window sampling over labeled videos, per-feature condition
//! dropout, the augmentation gate, the fine-tune ground-truth choice, GT
//! duplication, and the weighted loss mask.
//!
//! All randomness flows through [`SeededRng`], a ChaCha8 stream cipher RNG:
//! the same seed yields the same draws on every platform, and workers can
//! fork independent streams for reproducible parallel data loading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::retrieval::Orientation;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("video has {frames} frames, need at least T = {t}")]
    VideoTooShort { frames: usize, t: usize },
    #[error("T must be at least 1")]
    ZeroWindow,
    #[error("orientation labels ({labels}) must match frame count ({frames})")]
    LabelCountMismatch { labels: usize, frames: usize },
    #[error("mode probabilities must lie in [0, 1] and sum to 1, got {0:?}")]
    InvalidProbabilities([f64; 3]),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("loss weight beta {0} must be >= 1")]
    InvalidBeta(f64),
    #[error("mask rows must all have the same width")]
    RaggedMask,
}

/// A deterministic, portable RNG (ChaCha8). `fork` derives an independent
/// stream from the same seed for a given worker id.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for a worker: same seed, distinct stream id.
    pub fn fork(&self, worker: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(worker);
        Self {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

/// Frame count plus per-frame orientation labels for one training video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    frame_count: usize,
    orientation_labels: Vec<Orientation>,
}

impl VideoMeta {
    pub fn new(orientation_labels: Vec<Orientation>) -> Self {
        Self {
            frame_count: orientation_labels.len(),
            orientation_labels,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn labels(&self) -> &[Orientation] {
        &self.orientation_labels
    }
}

/// Which conditioning features are present before dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditioningSet {
    pub has_vae: bool,
    pub has_image: bool,
    pub has_pose: bool,
}

impl ConditioningSet {
    pub fn all() -> Self {
        Self {
            has_vae: true,
            has_image: true,
            has_pose: true,
        }
    }
}

/// How a training window was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    Random,
    MustFront,
    MustBack,
}

/// Which image supervises a fine-tuning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinetuneGt {
    FrontGt,
    BackGt,
}

fn validate_probs(probs: [f64; 3]) -> Result<(), SamplingError> {
    let valid = probs
        .iter()
        .all(|p| p.is_finite() && (0.0..=1.0).contains(p))
        && (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if valid {
        Ok(())
    } else {
        Err(SamplingError::InvalidProbabilities(probs))
    }
}

/// Window starts whose T-long window contains at least one frame with the
/// wanted label.
fn qualifying_starts(meta: &VideoMeta, t: usize, wanted: Orientation) -> Vec<usize> {
    let n = meta.frame_count;
    (0..=n - t)
        .filter(|&start| meta.orientation_labels[start..start + t].contains(&wanted))
        .collect()
}

/// Samples a contiguous T-frame training window.
///
/// The mode is drawn from `probs` (random, must-front, must-back). Random
/// picks a uniform start; the must modes pick uniformly among the starts
/// whose window contains at least one frame with the required label. If no
/// window qualifies, the draw falls back to a uniform random start and the
/// returned mode is [`WindowMode::Random`], so a reported must mode always
/// delivers its label.
pub fn sample_training_window(
    meta: &VideoMeta,
    t: usize,
    rng: &mut SeededRng,
    probs: [f64; 3],
) -> Result<(usize, WindowMode), SamplingError> {
    if t == 0 {
        return Err(SamplingError::ZeroWindow);
    }
    if meta.frame_count < t {
        return Err(SamplingError::VideoTooShort {
            frames: meta.frame_count,
            t,
        });
    }
    validate_probs(probs)?;

    let u = rng.uniform();
    let mode = if u < probs[0] {
        WindowMode::Random
    } else if u < probs[0] + probs[1] {
        WindowMode::MustFront
    } else {
        WindowMode::MustBack
    };

    let window_count = meta.frame_count - t + 1;
    let (start, mode) = match mode {
        WindowMode::Random => (rng.index(window_count), WindowMode::Random),
        WindowMode::MustFront | WindowMode::MustBack => {
            let wanted = if mode == WindowMode::MustFront {
                Orientation::Front
            } else {
                Orientation::Back
            };
            let candidates = qualifying_starts(meta, t, wanted);
            if candidates.is_empty() {
                (rng.index(window_count), WindowMode::Random)
            } else {
                (candidates[rng.index(candidates.len())], mode)
            }
        }
    };
    Ok((start, mode))
}

/// Independently clears each present conditioning feature with probability p.
pub fn apply_condition_dropout(
    cond: ConditioningSet,
    rng: &mut SeededRng,
    p: f64,
) -> Result<ConditioningSet, SamplingError> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(SamplingError::InvalidProbability(p));
    }
    // One draw per feature regardless of its current state keeps the
    // stream alignment independent of the input.
    let drop_vae = rng.uniform() < p;
    let drop_image = rng.uniform() < p;
    let drop_pose = rng.uniform() < p;
    Ok(ConditioningSet {
        has_vae: cond.has_vae && !drop_vae,
        has_image: cond.has_image && !drop_image,
        has_pose: cond.has_pose && !drop_pose,
    })
}

/// True with probability p: whether to harmonize the reference images this
/// step.
pub fn gate_augmentation(rng: &mut SeededRng, p: f64) -> Result<bool, SamplingError> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(SamplingError::InvalidProbability(p));
    }
    Ok(rng.uniform() < p)
}

/// Chooses the fine-tuning supervision image: front with probability
/// `p_front`, back otherwise.
pub fn choose_finetune_gt(rng: &mut SeededRng, p_front: f64) -> Result<FinetuneGt, SamplingError> {
    if !(p_front.is_finite() && (0.0..=1.0).contains(&p_front)) {
        return Err(SamplingError::InvalidProbability(p_front));
    }
    Ok(if rng.uniform() < p_front {
        FinetuneGt::FrontGt
    } else {
        FinetuneGt::BackGt
    })
}

/// Duplicates a ground-truth frame and its pose T times, matching the
/// sequence length the video model expects.
pub fn duplicate_gt<F: Clone, P: Clone>(
    frame: &F,
    pose: &P,
    t: usize,
) -> Result<(Vec<F>, Vec<P>), SamplingError> {
    if t == 0 {
        return Err(SamplingError::ZeroWindow);
    }
    Ok((vec![frame.clone(); t], vec![pose.clone(); t]))
}

/// Per-pixel loss weights: beta inside the marked region, 1 elsewhere.
pub fn weighted_loss_mask(
    region_mask: &[Vec<bool>],
    beta: f64,
) -> Result<Vec<Vec<f64>>, SamplingError> {
    if !(beta.is_finite() && beta >= 1.0) {
        return Err(SamplingError::InvalidBeta(beta));
    }
    let width = region_mask.first().map_or(0, Vec::len);
    if region_mask.iter().any(|row| row.len() != width) {
        return Err(SamplingError::RaggedMask);
    }
    Ok(region_mask
        .iter()
        .map(|row| {
            row.iter()
                .map(|&inside| if inside { beta } else { 1.0 })
                .collect()
        })
        .collect())
}
