//! Algorithmic core of the fit-check video pipeline: turning a handheld
//! phone recording into a motion query, retrieving matching motions and
//! compatible backgrounds, grounding the retrieved pose sequence into the
//! target frame, and scheduling the segment-wise generation that a video
//! model would consume.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`config`]: the shared hyperparameter record.
//! - [`imu`]: acceleration filtering, dead reckoning, yaw unwrapping.
//! - [`dtw`]: dynamic time warping distances and the combined motion distance.
//! - [`retrieval`]: top-k motion and background search, orientation labels.
//! - [`pose`]: grounding a 2D keypoint sequence onto a background's floor line.
//! - [`mra`]: toy-scale multi-reference attention and frame assembly.
//! - [`fusion`]: overlapping-segment planning and latent blending weights.
//! - [`sampling`]: seeded training-time sampling policies.
//!
//! Everything here is deterministic: pure functions, or functions driven by
//! an explicit [`sampling::SeededRng`].

pub mod config;
pub mod dtw;
pub mod fusion;
pub mod imu;
pub mod mra;
pub mod pose;
pub mod retrieval;
pub mod sampling;

pub use config::PipelineConfig;
pub use imu::{ImuRecording, ImuSample, MotionSignature};
pub use retrieval::{BackgroundEntry, MotionEntry, Orientation, RankedResult};
