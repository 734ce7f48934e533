//! Grounding a retrieved 2D pose sequence into a target background: one
//! similarity transform (uniform scale plus translation) applied to every
//! keypoint of every frame, chosen so the subject stands on the background's
//! ground line at a requested height and horizontal position.
//!
//! A single global transform is deliberate. Fitting per frame would pin the
//! feet to the ground in every frame, cancelling jumps and crouches and
//! adding temporal jitter; with one transform the lowest foot over the whole
//! sequence touches the ground line and everything else moves rigidly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("frame {frame} has {got} keypoints, expected {expected}")]
    KeypointCountMismatch {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("foot index {0} out of range")]
    FootIndexOutOfRange(usize),
    #[error("confidence {value} at frame {frame} outside [0, 1]")]
    ConfidenceOutOfRange { frame: usize, value: f64 },
    #[error("non-finite coordinate at frame {0}")]
    NonFinite(usize),
    #[error("pose sequence has no frames")]
    NoFrames,
    #[error("no foot keypoint reaches the confidence threshold")]
    NoConfidentFeet,
    #[error("median body height is zero")]
    DegenerateBodyHeight,
    #[error("ground line {ground_y} outside frame height {frame_height}")]
    GroundLineOutOfFrame { ground_y: f64, frame_height: u32 },
    #[error("target height fraction {0} outside (0, 1]")]
    InvalidHeightFraction(f64),
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
}

/// A 2D keypoint in pixel coordinates with a detection confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// A per-frame 2D keypoint sequence in the DWPose layout (133 keypoints by
/// default), with designated foot keypoint indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoseSequence", into = "RawPoseSequence")]
pub struct PoseSequence {
    keypoint_count: usize,
    frame_size: (u32, u32),
    foot_indices: Vec<usize>,
    frames: Vec<Vec<Keypoint>>,
}

#[derive(Serialize, Deserialize)]
struct RawPoseSequence {
    keypoint_count: usize,
    /// (width, height) in pixels.
    frame_size: [u32; 2],
    foot_indices: Vec<usize>,
    /// Each keypoint as [x, y, confidence].
    frames: Vec<Vec<[f64; 3]>>,
}

impl TryFrom<RawPoseSequence> for PoseSequence {
    type Error = PoseError;

    fn try_from(raw: RawPoseSequence) -> Result<Self, PoseError> {
        let frames = raw
            .frames
            .into_iter()
            .map(|frame| {
                frame
                    .into_iter()
                    .map(|[x, y, confidence]| Keypoint { x, y, confidence })
                    .collect()
            })
            .collect();
        PoseSequence::new(
            raw.keypoint_count,
            (raw.frame_size[0], raw.frame_size[1]),
            raw.foot_indices,
            frames,
        )
    }
}

impl From<PoseSequence> for RawPoseSequence {
    fn from(pose: PoseSequence) -> Self {
        RawPoseSequence {
            keypoint_count: pose.keypoint_count,
            frame_size: [pose.frame_size.0, pose.frame_size.1],
            foot_indices: pose.foot_indices,
            frames: pose
                .frames
                .into_iter()
                .map(|frame| {
                    frame
                        .into_iter()
                        .map(|k| [k.x, k.y, k.confidence])
                        .collect()
                })
                .collect(),
        }
    }
}

impl PoseSequence {
    pub fn new(
        keypoint_count: usize,
        frame_size: (u32, u32),
        foot_indices: Vec<usize>,
        frames: Vec<Vec<Keypoint>>,
    ) -> Result<Self, PoseError> {
        if frames.is_empty() {
            return Err(PoseError::NoFrames);
        }
        for &idx in &foot_indices {
            if idx >= keypoint_count {
                return Err(PoseError::FootIndexOutOfRange(idx));
            }
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.len() != keypoint_count {
                return Err(PoseError::KeypointCountMismatch {
                    frame: i,
                    got: frame.len(),
                    expected: keypoint_count,
                });
            }
            for k in frame {
                if !(k.x.is_finite() && k.y.is_finite() && k.confidence.is_finite()) {
                    return Err(PoseError::NonFinite(i));
                }
                if !(0.0..=1.0).contains(&k.confidence) {
                    return Err(PoseError::ConfidenceOutOfRange {
                        frame: i,
                        value: k.confidence,
                    });
                }
            }
        }
        Ok(Self {
            keypoint_count,
            frame_size,
            foot_indices,
            frames,
        })
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_count
    }

    pub fn frame_size(&self) -> (u32, u32) {
        self.frame_size
    }

    pub fn foot_indices(&self) -> &[usize] {
        &self.foot_indices
    }

    pub fn frames(&self) -> &[Vec<Keypoint>] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PoseError> {
        let text = std::fs::read_to_string(path).map_err(|e| PoseError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| PoseError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Where the subject should stand: the image-space y of the ground contact
/// line, the subject height as a fraction of frame height, and the target
/// horizontal center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    pub ground_y: f64,
    pub target_height_frac: f64,
    pub center_x: f64,
}

/// The similarity transform applied by [`ground_pose_sequence`]:
/// `p' = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingTransform {
    pub scale: f64,
    pub translation: [f64; 2],
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scales and translates the whole sequence so the median body height hits
/// `target_height_frac * frame_height`, the lowest confident foot over the
/// sequence lands on `ground_y`, and the mean confident-keypoint x lands on
/// `center_x`. Returns the transformed sequence and the transform itself.
pub fn ground_pose_sequence(
    poses: &PoseSequence,
    spec: &GroundSpec,
    conf_threshold: f64,
) -> Result<(PoseSequence, GroundingTransform), PoseError> {
    let frame_height = poses.frame_size.1;
    if !(spec.ground_y >= 0.0 && spec.ground_y <= f64::from(frame_height)) {
        return Err(PoseError::GroundLineOutOfFrame {
            ground_y: spec.ground_y,
            frame_height,
        });
    }
    if !(spec.target_height_frac > 0.0 && spec.target_height_frac <= 1.0) {
        return Err(PoseError::InvalidHeightFraction(spec.target_height_frac));
    }

    let confident = |k: &Keypoint| k.confidence >= conf_threshold;

    // Lowest confident foot over the whole sequence anchors the ground
    // contact; jumps then lift the feet rather than sink standing frames.
    let mut max_foot_y = f64::NEG_INFINITY;
    for frame in &poses.frames {
        for &idx in &poses.foot_indices {
            let k = &frame[idx];
            if confident(k) {
                max_foot_y = max_foot_y.max(k.y);
            }
        }
    }
    if max_foot_y == f64::NEG_INFINITY {
        return Err(PoseError::NoConfidentFeet);
    }

    // Median of per-frame heights (max y extent of confident keypoints),
    // over frames that have any confident keypoint.
    let mut heights = Vec::with_capacity(poses.frames.len());
    let mut x_sum = 0.0;
    let mut x_count = 0usize;
    for frame in &poses.frames {
        let mut min_y = f64::INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for k in frame {
            if confident(k) {
                min_y = min_y.min(k.y);
                max_y = max_y.max(k.y);
                x_sum += k.x;
                x_count += 1;
            }
        }
        if max_y > f64::NEG_INFINITY {
            heights.push(max_y - min_y);
        }
    }
    let median_height = median(&mut heights);
    if median_height <= 0.0 {
        return Err(PoseError::DegenerateBodyHeight);
    }
    let mean_x = x_sum / x_count as f64;

    let scale = spec.target_height_frac * f64::from(frame_height) / median_height;
    let translation = [
        spec.center_x - scale * mean_x,
        spec.ground_y - scale * max_foot_y,
    ];

    let frames = poses
        .frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|k| Keypoint {
                    x: scale * k.x + translation[0],
                    y: scale * k.y + translation[1],
                    confidence: k.confidence,
                })
                .collect()
        })
        .collect();

    let grounded = PoseSequence {
        keypoint_count: poses.keypoint_count,
        frame_size: poses.frame_size,
        foot_indices: poses.foot_indices.clone(),
        frames,
    };
    Ok((grounded, GroundingTransform { scale, translation }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(x: f64, y: f64, c: f64) -> Keypoint {
        Keypoint {
            x,
            y,
            confidence: c,
        }
    }

    /// 4 keypoints, feet at indices 2 and 3.
    fn simple_pose(frames: Vec<Vec<Keypoint>>) -> PoseSequence {
        PoseSequence::new(4, (200, 400), vec![2, 3], frames).unwrap()
    }

    #[test]
    fn hand_solved_single_frame() {
        // Body height 50, target 0.25 * 400 = 100, lowest foot y = 80,
        // ground 200, mean x = 30, center 60: scale 2, translation (0, 40).
        let pose = simple_pose(vec![vec![
            kp(20.0, 30.0, 0.9),
            kp(40.0, 50.0, 0.9),
            kp(25.0, 80.0, 0.9),
            kp(35.0, 75.0, 0.9),
        ]]);
        let spec = GroundSpec {
            ground_y: 200.0,
            target_height_frac: 0.25,
            center_x: 60.0,
        };
        let (grounded, t) = ground_pose_sequence(&pose, &spec, 0.3).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-12);
        assert!(t.translation[0].abs() < 1e-12);
        assert!((t.translation[1] - 40.0).abs() < 1e-12);
        let foot = &grounded.frames()[0][2];
        assert!((foot.y - 200.0).abs() < 1e-12);
    }

    #[test]
    fn already_grounded_sequence_is_a_fixed_point() {
        // Height 120 = 0.3 * 400, lowest foot at 300, mean x = 100.
        let pose = simple_pose(vec![vec![
            kp(80.0, 180.0, 0.9),
            kp(120.0, 200.0, 0.9),
            kp(90.0, 300.0, 0.9),
            kp(110.0, 280.0, 0.9),
        ]]);
        let spec = GroundSpec {
            ground_y: 300.0,
            target_height_frac: 0.3,
            center_x: 100.0,
        };
        let (grounded, t) = ground_pose_sequence(&pose, &spec, 0.3).unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!(t.translation, [0.0, 0.0]);
        assert_eq!(grounded, pose);
    }

    #[test]
    fn grounding_is_idempotent() {
        let pose = simple_pose(vec![
            vec![
                kp(12.0, 40.0, 0.8),
                kp(48.0, 55.0, 0.8),
                kp(20.0, 120.0, 0.8),
                kp(36.0, 118.0, 0.8),
            ],
            vec![
                kp(14.0, 42.0, 0.8),
                kp(50.0, 60.0, 0.8),
                kp(22.0, 110.0, 0.8),
                kp(38.0, 125.0, 0.8),
            ],
        ]);
        let spec = GroundSpec {
            ground_y: 350.0,
            target_height_frac: 0.6,
            center_x: 100.0,
        };
        let (once, t1) = ground_pose_sequence(&pose, &spec, 0.3).unwrap();
        let (twice, t2) = ground_pose_sequence(&once, &spec, 0.3).unwrap();
        assert!((t2.scale - 1.0).abs() < 1e-9, "second scale {}", t2.scale);
        assert!(t2.translation[0].abs() < 1e-9);
        assert!(t2.translation[1].abs() < 1e-9);
        assert!((t1.scale - t2.scale * t1.scale).abs() < 1e-9);
        for (a, b) in once.frames()[0].iter().zip(&twice.frames()[0]) {
            assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
        }
    }

    #[test]
    fn one_transform_for_all_frames_and_ratios_preserved() {
        let pose = simple_pose(vec![
            vec![
                kp(10.0, 10.0, 0.9),
                kp(30.0, 40.0, 0.9),
                kp(15.0, 90.0, 0.9),
                kp(25.0, 85.0, 0.9),
            ],
            // A jump frame: feet well above the other frame's.
            vec![
                kp(12.0, 5.0, 0.9),
                kp(32.0, 35.0, 0.9),
                kp(17.0, 60.0, 0.9),
                kp(27.0, 55.0, 0.9),
            ],
        ]);
        let spec = GroundSpec {
            ground_y: 380.0,
            target_height_frac: 0.5,
            center_x: 100.0,
        };
        let (grounded, t) = ground_pose_sequence(&pose, &spec, 0.3).unwrap();

        // The same transform maps every input keypoint to its output.
        for (frame_in, frame_out) in pose.frames().iter().zip(grounded.frames()) {
            for (a, b) in frame_in.iter().zip(frame_out) {
                assert!((t.scale * a.x + t.translation[0] - b.x).abs() < 1e-9);
                assert!((t.scale * a.y + t.translation[1] - b.y).abs() < 1e-9);
            }
        }

        // Pairwise distance ratios within a frame are unchanged.
        let dist = |a: &Keypoint, b: &Keypoint| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        let din = dist(&pose.frames()[0][0], &pose.frames()[0][1])
            / dist(&pose.frames()[0][1], &pose.frames()[0][2]);
        let dout = dist(&grounded.frames()[0][0], &grounded.frames()[0][1])
            / dist(&grounded.frames()[0][1], &grounded.frames()[0][2]);
        assert!((din - dout).abs() < 1e-9);

        // The standing frame's lowest foot sits on the ground line; the jump
        // frame's feet stay above it.
        let max_foot = grounded
            .frames()
            .iter()
            .flat_map(|f| [f[2].y, f[3].y])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((max_foot - 380.0).abs() < 1e-6);
        assert!(grounded.frames()[1][2].y < 380.0 - 1.0);
    }

    #[test]
    fn low_confidence_feet_are_an_error() {
        let pose = simple_pose(vec![vec![
            kp(10.0, 10.0, 0.9),
            kp(30.0, 40.0, 0.9),
            kp(15.0, 90.0, 0.1),
            kp(25.0, 85.0, 0.2),
        ]]);
        let spec = GroundSpec {
            ground_y: 300.0,
            target_height_frac: 0.5,
            center_x: 100.0,
        };
        assert!(matches!(
            ground_pose_sequence(&pose, &spec, 0.3),
            Err(PoseError::NoConfidentFeet)
        ));
    }

    #[test]
    fn degenerate_height_is_an_error() {
        // All confident keypoints on one horizontal line.
        let pose = simple_pose(vec![vec![
            kp(10.0, 50.0, 0.9),
            kp(30.0, 50.0, 0.9),
            kp(15.0, 50.0, 0.9),
            kp(25.0, 50.0, 0.9),
        ]]);
        let spec = GroundSpec {
            ground_y: 300.0,
            target_height_frac: 0.5,
            center_x: 100.0,
        };
        assert!(matches!(
            ground_pose_sequence(&pose, &spec, 0.3),
            Err(PoseError::DegenerateBodyHeight)
        ));
    }

    #[test]
    fn validation_catches_bad_sequences() {
        assert!(matches!(
            PoseSequence::new(4, (100, 100), vec![5], vec![vec![kp(0.0, 0.0, 0.5); 4]]),
            Err(PoseError::FootIndexOutOfRange(5))
        ));
        assert!(matches!(
            PoseSequence::new(4, (100, 100), vec![0], vec![vec![kp(0.0, 0.0, 0.5); 3]]),
            Err(PoseError::KeypointCountMismatch { .. })
        ));
        assert!(matches!(
            PoseSequence::new(1, (100, 100), vec![0], vec![vec![kp(0.0, 0.0, 1.5)]]),
            Err(PoseError::ConfidenceOutOfRange { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let pose = simple_pose(vec![vec![
            kp(1.5, 2.5, 0.5),
            kp(3.0, 4.0, 1.0),
            kp(5.0, 6.0, 0.0),
            kp(7.0, 8.0, 0.25),
        ]]);
        let json = serde_json::to_string(&pose).unwrap();
        let back: PoseSequence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pose);
    }
}
