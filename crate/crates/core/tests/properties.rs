//! Property tests for the core invariants: DTW against an exhaustive
//! alignment oracle, config round-tripping, frame assembly round-tripping,
//! fusion partition of unity, and the pose grounding transform.

use proptest::prelude::*;

use fitcheck_core::config::{load_config, serialize_config, PipelineConfig};
use fitcheck_core::dtw::{dtw_distance, euclidean_cost, yaw_angular_cost};
use fitcheck_core::fusion::{fuse, plan_segments, LatentSegment};
use fitcheck_core::imu::unwrap_degrees;
use fitcheck_core::mra::{assemble_sequence, discard_reference_frames, FeatureMap};
use fitcheck_core::pose::{ground_pose_sequence, GroundSpec, Keypoint, PoseSequence};

/// Minimum summed cost over every monotone alignment path, by explicit
/// enumeration. Steps are (1,0), (0,1), (1,1); feasible only for tiny
/// sequences.
fn brute_force_dtw<T>(a: &[T], b: &[T], cost: &impl Fn(&T, &T) -> f64) -> f64 {
    fn recurse<T>(
        a: &[T],
        b: &[T],
        i: usize,
        j: usize,
        acc: f64,
        cost: &impl Fn(&T, &T) -> f64,
        best: &mut f64,
    ) {
        let acc = acc + cost(&a[i], &b[j]);
        if i == a.len() - 1 && j == b.len() - 1 {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < a.len() {
            recurse(a, b, i + 1, j, acc, cost, best);
        }
        if j + 1 < b.len() {
            recurse(a, b, i, j + 1, acc, cost, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            recurse(a, b, i + 1, j + 1, acc, cost, best);
        }
    }

    let mut best = f64::INFINITY;
    recurse(a, b, 0, 0, 0.0, cost, &mut best);
    best
}

fn grid_sequence() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop::sample::select(vec![0.0, 45.0, 90.0, 180.0, 350.0]),
        1..=6,
    )
}

proptest! {
    #[test]
    fn dtw_equals_bruteforce_on_yaw_grid(a in grid_sequence(), b in grid_sequence()) {
        let cost = |x: &f64, y: &f64| yaw_angular_cost(*x, *y);
        let dp = dtw_distance(&a, &b, cost).unwrap();
        let brute = brute_force_dtw(&a, &b, &cost);
        // Grid values make every path cost an exact integer.
        prop_assert_eq!(dp, brute);
    }

    #[test]
    fn dtw_equals_bruteforce_on_vectors(
        a in prop::collection::vec(prop::array::uniform3(-4.0..4.0f64), 1..=5),
        b in prop::collection::vec(prop::array::uniform3(-4.0..4.0f64), 1..=5),
    ) {
        let dp = dtw_distance(&a, &b, euclidean_cost).unwrap();
        let brute = brute_force_dtw(&a, &b, &euclidean_cost);
        prop_assert!((dp - brute).abs() <= 1e-12 * (1.0 + brute));
    }

    #[test]
    fn dtw_symmetry_and_self_distance(
        a in prop::collection::vec(0.0..720.0f64, 1..=8),
        b in prop::collection::vec(0.0..720.0f64, 1..=8),
    ) {
        let cost = |x: &f64, y: &f64| yaw_angular_cost(*x, *y);
        prop_assert_eq!(
            dtw_distance(&a, &b, cost).unwrap(),
            dtw_distance(&b, &a, cost).unwrap()
        );
        prop_assert_eq!(dtw_distance(&a, &a, cost).unwrap(), 0.0);
        prop_assert!(dtw_distance(&a, &b, cost).unwrap() >= 0.0);
    }

    #[test]
    fn unwrap_diffs_map_into_half_open_range(seq in prop::collection::vec(0.0..360.0f64, 2..30)) {
        let out = unwrap_degrees(&seq);
        prop_assert_eq!(out[0], seq[0]);
        for i in 1..seq.len() {
            let d = out[i] - out[i - 1];
            prop_assert!(d > -180.0 && d <= 180.0 + 1e-12);
            let mut want = (seq[i] - seq[i - 1]).rem_euclid(360.0);
            if want > 180.0 {
                want -= 360.0;
            }
            prop_assert!((d - want).abs() < 1e-9);
        }
    }

    #[test]
    fn config_round_trip(
        t in 1usize..16,
        overlap_offset in 0usize..4,
        guidance in 0.1..8.0f64,
        steps in 1usize..100,
        alpha in 0.0..2.0f64,
        beta in 1.0..4.0f64,
        raw_probs in prop::array::uniform3(0.01..1.0f64),
    ) {
        let sum: f64 = raw_probs.iter().sum();
        let config = PipelineConfig {
            content_frames_t: t,
            overlap_frames: (t + 1).saturating_sub(overlap_offset).min(t + 1),
            guidance_scale: guidance,
            denoise_steps: steps,
            alpha_motion: alpha,
            loss_weight_beta: beta,
            window_policy_probs: [
                raw_probs[0] / sum,
                raw_probs[1] / sum,
                raw_probs[2] / sum,
            ],
            ..PipelineConfig::default()
        };
        config.validate().unwrap();
        let reloaded = load_config(&serialize_config(&config)).unwrap();
        prop_assert_eq!(reloaded, config);
    }

    #[test]
    fn discard_inverts_assemble(
        t in 1usize..5,
        h in 1usize..4,
        w in 1usize..4,
        c in 1usize..4,
        seed in 0u64..1000,
    ) {
        let fill = |salt: u64, frames: usize, h: usize, w: usize, c: usize| {
            let mut v = seed.wrapping_mul(6364136223846793005).wrapping_add(salt);
            FeatureMap::from_fn(frames, h, w, c, move |_, _, _, _| {
                v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (v >> 11) as f64 / (1u64 << 53) as f64
            })
        };
        let front = fill(1, 1, h, w, c);
        let back = fill(2, 1, h, w, c);
        let content = fill(3, t, h, w, c);
        let assembled = assemble_sequence(&front, &back, &content).unwrap();
        prop_assert_eq!(assembled.frames(), t + 2);
        let recovered = discard_reference_frames(&assembled).unwrap();
        prop_assert_eq!(recovered, content);
    }

    #[test]
    fn fusion_weights_partition_unity(
        t in 1usize..10,
        overlap in 0usize..8,
        extra in 0usize..30,
    ) {
        prop_assume!(overlap < t);
        let n = t + extra;
        let plan = plan_segments(n, t, overlap).unwrap();

        let mut covered = vec![false; n];
        for s in &plan.segments {
            prop_assert!(s.end <= n);
            covered[s.start..s.end].fill(true);
        }
        prop_assert!(covered.iter().all(|&c| c));

        prop_assert_eq!(plan.weights.len(), n);
        for frame_weights in &plan.weights {
            let sum: f64 = frame_weights.iter().map(|(_, w)| w).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(frame_weights.iter().all(|&(_, w)| w > 0.0));
        }
    }

    #[test]
    fn fuse_is_convex_per_frame(
        t in 2usize..7,
        overlap in 0usize..5,
        extra in 0usize..15,
        seed in 0u64..500,
    ) {
        prop_assume!(overlap < t);
        let n = t + extra;
        let plan = plan_segments(n, t, overlap).unwrap();
        let mut v = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
        let mut next = || {
            v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (v >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        };
        let segments: Vec<LatentSegment> = plan
            .segments
            .iter()
            .map(|s| LatentSegment {
                segment_index: s.index,
                frames: (0..t + 2).map(|_| vec![next(), next()]).collect(),
            })
            .collect();
        let fused = fuse(&segments, &plan).unwrap();
        for (frame, frame_weights) in plan.weights.iter().enumerate() {
            for (dim, &value) in fused[frame].iter().enumerate() {
                let contributions: Vec<f64> = frame_weights
                    .iter()
                    .map(|&(s, _)| {
                        let pos = frame - plan.segments[s].start;
                        segments[s].frames[2 + pos][dim]
                    })
                    .collect();
                let lo = contributions.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = contributions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(value >= lo - 1e-9 && value <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn grounding_applies_one_transform_everywhere(
        n_frames in 1usize..6,
        offset_x in -50.0..50.0f64,
        offset_y in -50.0..50.0f64,
        spread in 10.0..80.0f64,
    ) {
        let frames: Vec<Vec<Keypoint>> = (0..n_frames)
            .map(|f| {
                let drift = f as f64 * 3.0;
                vec![
                    Keypoint { x: offset_x + drift, y: offset_y, confidence: 0.9 },
                    Keypoint { x: offset_x + spread + drift, y: offset_y + spread, confidence: 0.9 },
                    Keypoint { x: offset_x + 5.0 + drift, y: offset_y + spread + 10.0, confidence: 0.9 },
                    Keypoint { x: offset_x + 9.0 + drift, y: offset_y + spread + 8.0, confidence: 0.9 },
                ]
            })
            .collect();
        let pose = PoseSequence::new(4, (400, 800), vec![2, 3], frames).unwrap();
        let spec = GroundSpec { ground_y: 700.0, target_height_frac: 0.5, center_x: 200.0 };
        let (grounded, t) = ground_pose_sequence(&pose, &spec, 0.3).unwrap();

        prop_assert!(t.scale > 0.0);
        for (fin, fout) in pose.frames().iter().zip(grounded.frames()) {
            for (a, b) in fin.iter().zip(fout) {
                prop_assert!((t.scale * a.x + t.translation[0] - b.x).abs() < 1e-9);
                prop_assert!((t.scale * a.y + t.translation[1] - b.y).abs() < 1e-9);
                prop_assert_eq!(a.confidence, b.confidence);
            }
        }

        let max_foot = grounded
            .frames()
            .iter()
            .flat_map(|f| [f[2].y, f[3].y])
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((max_foot - 700.0).abs() < 1e-6);
    }
}
