//! Pipeline configuration: every fixed hyperparameter in one validated,
//! immutable record shared by all stages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}` is invalid: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// All fixed hyperparameters of the pipeline.
///
/// Loaded once, validated once, then shared read-only. Unknown keys in the
/// source document are rejected so a misspelled hyperparameter cannot
/// silently fall back to its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Content frames generated per segment (T). The model emits T + 2
    /// frames at once; the two leading frames are reference slots.
    pub content_frames_t: usize,
    /// Content frames shared between consecutive segments.
    pub overlap_frames: usize,
    /// Classifier-free guidance scale used at inference.
    pub guidance_scale: f64,
    /// Denoising steps per segment.
    pub denoise_steps: usize,
    /// Weight of the translation DTW term in the combined motion distance.
    pub alpha_motion: f64,
    /// Working frame width in pixels.
    pub frame_width: u32,
    /// Working frame height in pixels.
    pub frame_height: u32,
    /// Loss weight applied inside shadow and reflection regions.
    pub loss_weight_beta: f64,
    /// Probability of dropping each conditioning feature during training.
    pub dropout_prob: f64,
    /// Probability of applying reference image augmentation.
    pub augment_prob: f64,
    /// Probability of supervising fine-tuning with the front image.
    pub finetune_front_gt_prob: f64,
    /// Window sampling mode probabilities: (random, must-front, must-back).
    pub window_policy_probs: [f64; 3],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            content_frames_t: 6,
            overlap_frames: 4,
            guidance_scale: 2.0,
            denoise_steps: 25,
            alpha_motion: 0.1,
            frame_width: 576,
            frame_height: 1024,
            loss_weight_beta: 2.0,
            dropout_prob: 0.1,
            augment_prob: 0.5,
            finetune_front_gt_prob: 0.8,
            window_policy_probs: [0.2, 0.4, 0.4],
        }
    }
}

impl PipelineConfig {
    /// Checks every invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::Invalid {
                field,
                reason: reason.into(),
            }
        }

        if self.content_frames_t == 0 {
            return Err(invalid("content_frames_t", "must be positive"));
        }
        if self.overlap_frames >= self.content_frames_t + 2 {
            return Err(invalid(
                "overlap_frames",
                format!(
                    "must be < content_frames_t + 2 = {}",
                    self.content_frames_t + 2
                ),
            ));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale > 0.0) {
            return Err(invalid("guidance_scale", "must be positive and finite"));
        }
        if self.denoise_steps == 0 {
            return Err(invalid("denoise_steps", "must be positive"));
        }
        if !(self.alpha_motion.is_finite() && self.alpha_motion >= 0.0) {
            return Err(invalid("alpha_motion", "must be non-negative and finite"));
        }
        if self.frame_width == 0 {
            return Err(invalid("frame_width", "must be positive"));
        }
        if self.frame_height == 0 {
            return Err(invalid("frame_height", "must be positive"));
        }
        if !(self.loss_weight_beta.is_finite() && self.loss_weight_beta >= 1.0) {
            return Err(invalid("loss_weight_beta", "must be >= 1"));
        }
        for (field, p) in [
            ("dropout_prob", self.dropout_prob),
            ("augment_prob", self.augment_prob),
            ("finetune_front_gt_prob", self.finetune_front_gt_prob),
        ] {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(invalid(field, "probability must lie in [0, 1]"));
            }
        }
        for p in self.window_policy_probs {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(invalid(
                    "window_policy_probs",
                    "each entry must lie in [0, 1]",
                ));
            }
        }
        let sum: f64 = self.window_policy_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "window_policy_probs",
                format!("entries sum to {sum}, expected 1"),
            ));
        }
        Ok(())
    }
}

/// Parses a flat key-value document into a validated config.
///
/// Absent keys take their defaults; unknown keys are an error.
pub fn load_config(source: &str) -> Result<PipelineConfig, ConfigError> {
    let config: PipelineConfig = toml::from_str(source)?;
    config.validate()?;
    Ok(config)
}

/// Renders a config back to the document form accepted by [`load_config`].
pub fn serialize_config(config: &PipelineConfig) -> String {
    toml::to_string(config).expect("config serialization cannot fail")
}
