//! Reference implementation of the multi-reference attention transform,
//! written for obviousness rather than speed: explicit 3W-wide maps, one
//! attention row at a time, no shared code with the fast path.
//!
//! Used by the equivalence tests and the `mra-demo` self-check.

use super::{AttentionWeights, FeatureMap, MraError};

fn vec_times_square(v: &[f64], weight: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &x) in v.iter().enumerate() {
            acc += x * weight[k * dim + j];
        }
        *o = acc;
    }
    out
}

/// Per-frame attention computed position by position over an explicitly
/// built [frame | front | back] map, keeping the first third of the width.
pub fn multi_reference_attention(
    x: &FeatureMap,
    w: &AttentionWeights,
) -> Result<FeatureMap, MraError> {
    if x.frames() < 3 {
        return Err(MraError::TooFewFrames(x.frames()));
    }
    if x.channels() != w.dim() {
        return Err(MraError::DimensionMismatch(format!(
            "feature channels {} do not match weight dim {}",
            x.channels(),
            w.dim()
        )));
    }
    let (h, width, c) = (x.height(), x.width(), x.channels());
    let wide = 3 * width;
    let mut out = FeatureMap::zeros(x.frames(), h, width, c);

    for frame in 0..x.frames() {
        // Explicit widened map for this frame.
        let source_for_slot = |slot: usize| -> usize {
            match (frame, slot) {
                (_, 0) => frame,
                (0, _) => 0,
                (1, _) => 1,
                (_, 1) => 0,
                _ => 1,
            }
        };
        let mut tokens: Vec<Vec<f64>> = Vec::with_capacity(h * wide);
        for row in 0..h {
            for wide_col in 0..wide {
                let slot = wide_col / width;
                let col = wide_col % width;
                let src = source_for_slot(slot);
                let feature: Vec<f64> = (0..c).map(|ch| x.get(src, row, col, ch)).collect();
                tokens.push(feature);
            }
        }

        let queries: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| vec_times_square(t, w.wq(), c))
            .collect();
        let keys: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| vec_times_square(t, w.wk(), c))
            .collect();
        let values: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| vec_times_square(t, w.wv(), c))
            .collect();

        // Only the first third of the width is kept, so only those
        // positions need their attention row evaluated.
        for row in 0..h {
            for col in 0..width {
                let qi = &queries[row * wide + col];
                let mut logits = Vec::with_capacity(tokens.len());
                let mut max_logit = f64::NEG_INFINITY;
                for kj in &keys {
                    let mut dot = 0.0;
                    for ch in 0..c {
                        dot += qi[ch] * kj[ch];
                    }
                    let logit = dot * w.scale();
                    if logit > max_logit {
                        max_logit = logit;
                    }
                    logits.push(logit);
                }
                let mut weights = Vec::with_capacity(logits.len());
                let mut denom = 0.0;
                for logit in &logits {
                    let e = (logit - max_logit).exp();
                    denom += e;
                    weights.push(e);
                }
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (weight, value) in weights.iter().zip(&values) {
                        acc += weight / denom * value[ch];
                    }
                    out.set(frame, row, col, ch, acc);
                }
            }
        }
    }
    Ok(out)
}
