//! Toy-scale executable model of the frame assembly and multi-reference
//! attention transform.
//!
//! The sequence handed to the video model leads with two reference slots:
//! frame 1 carries the front view, frame 2 the back view, frames 3..T+2 the
//! content. Inside a spatial self-attention layer, every frame's feature map
//! is concatenated width-wise with the two reference feature maps (the
//! reference frames with duplicates of themselves, so all frames share one
//! augmented width), self-attention runs over each frame's H x 3W positions,
//! and the first third of the output width is kept. Content frames can
//! thereby attend directly into both reference appearances while staying in
//! the network's own feature space.
//!
//! The attention substrate is single-head scaled dot-product attention with
//! no positional encoding and no output projection: the smallest substrate
//! on which the width-concatenation mechanics are observable. Forward pass
//! only. [`naive`] holds an independently coded reference implementation
//! used for equivalence checks.

pub mod naive;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MraError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("data length {got} does not match dimensions ({expected})")]
    DataLength { got: usize, expected: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("need at least 3 frames (2 reference slots + content), got {0}")]
    TooFewFrames(usize),
    #[error("weight matrix must be {dim}x{dim}, got {got} values")]
    BadWeightShape { dim: usize, got: usize },
}

/// A frames x height x width x channels activation block, stored flat in
/// frame-row-column-channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        assert!(
            height >= 1 && width >= 1 && channels >= 1,
            "spatial dims must be >= 1"
        );
        Self {
            frames,
            height,
            width,
            channels,
            data: vec![0.0; frames * height * width * channels],
        }
    }

    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut map = Self::zeros(frames, height, width, channels);
        for frame in 0..frames {
            for row in 0..height {
                for col in 0..width {
                    for ch in 0..channels {
                        let v = f(frame, row, col, ch);
                        map.set(frame, row, col, ch, v);
                    }
                }
            }
        }
        map
    }

    pub fn from_vec(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, MraError> {
        let expected = frames * height * width * channels;
        if data.len() != expected {
            return Err(MraError::DataLength {
                got: data.len(),
                expected,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MraError::NonFinite);
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn index(&self, frame: usize, row: usize, col: usize, ch: usize) -> usize {
        ((frame * self.height + row) * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, frame: usize, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(frame, row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, row: usize, col: usize, ch: usize, value: f64) {
        let idx = self.index(frame, row, col, ch);
        self.data[idx] = value;
    }

    /// Flat view of one frame, length height * width * channels.
    pub fn frame_data(&self, frame: usize) -> &[f64] {
        let len = self.height * self.width * self.channels;
        &self.data[frame * len..(frame + 1) * len]
    }

    pub fn same_spatial_dims(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Projection weights for the attention substrate. All three matrices are
/// channels x channels, row-major; scale defaults to 1/sqrt(channels).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    dim: usize,
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
    scale: f64,
}

impl AttentionWeights {
    pub fn new(
        dim: usize,
        wq: Vec<f64>,
        wk: Vec<f64>,
        wv: Vec<f64>,
        scale: Option<f64>,
    ) -> Result<Self, MraError> {
        for w in [&wq, &wk, &wv] {
            if w.len() != dim * dim {
                return Err(MraError::BadWeightShape { dim, got: w.len() });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(MraError::NonFinite);
            }
        }
        Ok(Self {
            dim,
            wq,
            wk,
            wv,
            scale: scale.unwrap_or(1.0 / (dim as f64).sqrt()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn wq(&self) -> &[f64] {
        &self.wq
    }

    pub fn wk(&self) -> &[f64] {
        &self.wk
    }

    pub fn wv(&self) -> &[f64] {
        &self.wv
    }
}

/// A dense row-major matrix; rows are tokens, columns are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MraError> {
        if data.len() != rows * cols {
            return Err(MraError::DataLength {
                got: data.len(),
                expected: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// tokens (n x c) times a square weight (c x c).
fn project(tokens: &Matrix, weight: &[f64], dim: usize) -> Matrix {
    let mut out = Matrix::zeros(tokens.rows, dim);
    for r in 0..tokens.rows {
        let row = tokens.row(r);
        let out_row = &mut out.data[r * dim..(r + 1) * dim];
        for (k, &x) in row.iter().enumerate() {
            let wrow = &weight[k * dim..(k + 1) * dim];
            for (o, &w) in out_row.iter_mut().zip(wrow) {
                *o += x * w;
            }
        }
    }
    out
}

/// Concatenates front, back and content frames into the generation order:
/// frame 1 = front, frame 2 = back, frames 3..T+2 = content.
pub fn assemble_sequence(
    front: &FeatureMap,
    back: &FeatureMap,
    content: &FeatureMap,
) -> Result<FeatureMap, MraError> {
    if front.frames != 1 || back.frames != 1 {
        return Err(MraError::DimensionMismatch(format!(
            "front and back must be single frames, got {} and {}",
            front.frames, back.frames
        )));
    }
    if !front.same_spatial_dims(back) || !front.same_spatial_dims(content) {
        return Err(MraError::DimensionMismatch(
            "front, back and content must share height, width and channels".into(),
        ));
    }
    let mut data =
        Vec::with_capacity((content.frames + 2) * front.height * front.width * front.channels);
    data.extend_from_slice(&front.data);
    data.extend_from_slice(&back.data);
    data.extend_from_slice(&content.data);
    Ok(FeatureMap {
        frames: content.frames + 2,
        height: front.height,
        width: front.width,
        channels: front.channels,
        data,
    })
}

/// Widens every frame to 3W by width-concatenation with the reference
/// features: frame 1 becomes [x1 | x1 | x1], frame 2 becomes [x2 | x2 | x2],
/// and every content frame i becomes [xi | x1 | x2].
pub fn build_mra_inputs(x: &FeatureMap) -> Result<FeatureMap, MraError> {
    if x.frames < 3 {
        return Err(MraError::TooFewFrames(x.frames));
    }
    let (h, w, c) = (x.height, x.width, x.channels);
    let mut out = FeatureMap::zeros(x.frames, h, 3 * w, c);
    let row_len = w * c;
    for frame in 0..x.frames {
        // Which frames supply the second and third width slots.
        let (second, third) = if frame == 0 {
            (0, 0)
        } else if frame == 1 {
            (1, 1)
        } else {
            (0, 1)
        };
        for row in 0..h {
            for (slot, src_frame) in [(0, frame), (1, second), (2, third)] {
                let src_start = x.index(src_frame, row, 0, 0);
                let dst_start = out.index(frame, row, slot * w, 0);
                out.data[dst_start..dst_start + row_len]
                    .copy_from_slice(&x.data[src_start..src_start + row_len]);
            }
        }
    }
    Ok(out)
}

/// Single-head scaled dot-product self-attention over a token matrix:
/// softmax(Q K^T * scale) V with per-row max subtraction for stability.
pub fn self_attention(tokens: &Matrix, w: &AttentionWeights) -> Result<Matrix, MraError> {
    if tokens.cols != w.dim {
        return Err(MraError::DimensionMismatch(format!(
            "token width {} does not match weight dim {}",
            tokens.cols, w.dim
        )));
    }
    let n = tokens.rows;
    let c = w.dim;
    let q = project(tokens, &w.wq, c);
    let k = project(tokens, &w.wk, c);
    let v = project(tokens, &w.wv, c);

    let mut out = Matrix::zeros(n, c);
    let mut logits = vec![0.0; n];
    for i in 0..n {
        let qi = q.row(i);
        let mut max_logit = f64::NEG_INFINITY;
        for (j, slot) in logits.iter_mut().enumerate() {
            let kj = k.row(j);
            let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
            let logit = dot * w.scale;
            *slot = logit;
            max_logit = max_logit.max(logit);
        }
        let mut denom = 0.0;
        for logit in logits.iter_mut() {
            *logit = (*logit - max_logit).exp();
            denom += *logit;
        }
        debug_assert!(
            (logits.iter().sum::<f64>() / denom - 1.0).abs() < 1e-6,
            "softmax row does not normalize"
        );
        let out_row = &mut out.data[i * c..(i + 1) * c];
        for (j, logit) in logits.iter().enumerate() {
            let weight = logit / denom;
            for (o, &vj) in out_row.iter_mut().zip(v.row(j)) {
                *o += weight * vj;
            }
        }
    }
    Ok(out)
}

/// The full transform: widen with [`build_mra_inputs`], run self-attention
/// over each frame's H x 3W positions, keep the first third of the width.
/// Output dimensions equal input dimensions.
pub fn multi_reference_attention(
    x: &FeatureMap,
    w: &AttentionWeights,
) -> Result<FeatureMap, MraError> {
    if x.channels != w.dim {
        return Err(MraError::DimensionMismatch(format!(
            "feature channels {} do not match weight dim {}",
            x.channels, w.dim
        )));
    }
    let augmented = build_mra_inputs(x)?;
    let (h, w3, c) = (augmented.height, augmented.width, augmented.channels);
    let mut out = FeatureMap::zeros(x.frames, x.height, x.width, x.channels);
    for frame in 0..x.frames {
        let tokens = Matrix::from_vec(h * w3, c, augmented.frame_data(frame).to_vec())?;
        let attended = self_attention(&tokens, w)?;
        for row in 0..h {
            for col in 0..x.width {
                let token = row * w3 + col;
                for ch in 0..c {
                    out.set(frame, row, col, ch, attended.get(token, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Drops the two leading reference slots, keeping content frames in order.
pub fn discard_reference_frames(video: &FeatureMap) -> Result<FeatureMap, MraError> {
    if video.frames < 3 {
        return Err(MraError::TooFewFrames(video.frames));
    }
    let frame_len = video.height * video.width * video.channels;
    Ok(FeatureMap {
        frames: video.frames - 2,
        height: video.height,
        width: video.width,
        channels: video.channels,
        data: video.data[2 * frame_len..].to_vec(),
    })
}
