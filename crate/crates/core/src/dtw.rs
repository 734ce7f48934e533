//! Dynamic time warping over the symmetric step set {(1,0), (0,1), (1,1)},
//! plus the combined motion distance that ranks retrieval candidates:
//! yaw DTW plus alpha times translation DTW.
//!
//! Distances are raw sums over the warping path, with no path-length
//! normalization and no windowing by default. A Sakoe-Chiba band can be
//! enabled through [`dtw_distance_banded`].

use thiserror::Error;

use crate::imu::MotionSignature;

#[derive(Debug, Error)]
pub enum DtwError {
    #[error("DTW requires non-empty sequences")]
    EmptySequence,
}

/// Angular distance between two yaw values in degrees, respecting
/// wrap-around: the result lies in [0, 180].
///
/// Signatures store unwrapped yaw, so two motions whose accumulated turns
/// differ by full revolutions still compare as equal here.
pub fn yaw_angular_cost(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Euclidean distance between two translation samples.
pub fn euclidean_cost(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// DTW distance under an arbitrary local cost, full cost matrix.
pub fn dtw_distance<T>(a: &[T], b: &[T], cost: impl Fn(&T, &T) -> f64) -> Result<f64, DtwError> {
    dtw_distance_banded(a, b, cost, None)
}

/// DTW distance with an optional Sakoe-Chiba band of the given radius.
///
/// The effective radius is widened to at least the length difference so the
/// end-to-end path always exists. Two-row dynamic programming, O(n*m) time,
/// O(min side) memory.
pub fn dtw_distance_banded<T>(
    a: &[T],
    b: &[T],
    cost: impl Fn(&T, &T) -> f64,
    band: Option<usize>,
) -> Result<f64, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    let (n, m) = (a.len(), b.len());
    let radius = band.map(|r| r.max(n.abs_diff(m)));

    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr[0] = f64::INFINITY;
        let (lo, hi) = match radius {
            Some(r) => (i.saturating_sub(r).max(1), (i + r).min(m)),
            None => (1, m),
        };
        for c in curr[1..lo].iter_mut() {
            *c = f64::INFINITY;
        }
        for c in curr[hi + 1..].iter_mut() {
            *c = f64::INFINITY;
        }
        for j in lo..=hi {
            let local = cost(&a[i - 1], &b[j - 1]);
            let best = prev[j].min(curr[j - 1]).min(prev[j - 1]);
            curr[j] = local + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// The combined motion distance between a query and a candidate signature:
/// `yaw_dtw + alpha * translation_dtw`, where the yaw term uses the angular
/// cost and the translation term the Euclidean cost.
pub fn combined_motion_distance(
    query: &MotionSignature,
    candidate: &MotionSignature,
    alpha: f64,
) -> Result<f64, DtwError> {
    let yaw = dtw_distance(query.yaw(), candidate.yaw(), |a, b| {
        yaw_angular_cost(*a, *b)
    })?;
    let translation = dtw_distance(query.translation(), candidate.translation(), euclidean_cost)?;
    Ok(yaw + alpha * translation)
}
