//! From a raw phone IMU log to the retrieval query: a yaw sequence plus a
//! dead-reckoned translation sequence.
//!
//! Orientation is consumed directly from the device's yaw stream (the phone
//! estimates yaw far more robustly than roll or pitch). Translation is
//! recovered from gravity-removed acceleration by low-pass filtering,
//! removing the mean, and integrating twice with the trapezoidal rule.
//!
//! The low-pass stage is a second-order Butterworth biquad applied forward
//! and backward (zero phase). A single causal pass would delay the signal by
//! tens of milliseconds at the default 5 Hz cutoff, which double integration
//! inflates into centimetre-scale position error; the bidirectional pass
//! keeps the phase exact. Edges are extended by symmetric reflection before
//! filtering so the transient of each pass decays inside the padding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImuError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps must be strictly increasing (violated at index {0})")]
    NonMonotonicTimestamps(usize),
    #[error("non-finite value at sample {0}")]
    NonFinite(usize),
    #[error("yaw {yaw} at sample {index} outside [0, 360)")]
    YawOutOfRange { index: usize, yaw: f64 },
    #[error("series is empty")]
    EmptySeries,
    #[error("cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },
    #[error("series length {series} does not match timestamp length {timestamps}")]
    LengthMismatch { series: usize, timestamps: usize },
    #[error("yaw and translation sequences must have equal non-zero length")]
    InvalidSignatureLengths,
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
}

/// One IMU sample: timestamp, gravity-removed acceleration in the device
/// frame, and device yaw in degrees within [0, 360).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Timestamp in seconds.
    pub t: f64,
    /// Acceleration in m/s^2.
    pub accel: [f64; 3],
    /// Yaw in degrees, wrapped to [0, 360).
    pub yaw: f64,
}

/// A validated IMU recording: at least two samples, strictly increasing
/// timestamps, finite values, yaw wrapped to [0, 360).
#[derive(Debug, Clone, PartialEq)]
pub struct ImuRecording {
    samples: Vec<ImuSample>,
}

impl ImuRecording {
    pub fn new(samples: Vec<ImuSample>) -> Result<Self, ImuError> {
        if samples.len() < 2 {
            return Err(ImuError::TooFewSamples(samples.len()));
        }
        for (i, s) in samples.iter().enumerate() {
            let finite =
                s.t.is_finite() && s.yaw.is_finite() && s.accel.iter().all(|a| a.is_finite());
            if !finite {
                return Err(ImuError::NonFinite(i));
            }
            if !(0.0..360.0).contains(&s.yaw) {
                return Err(ImuError::YawOutOfRange {
                    index: i,
                    yaw: s.yaw,
                });
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(ImuError::NonMonotonicTimestamps(i));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn accelerations(&self) -> Vec<[f64; 3]> {
        self.samples.iter().map(|s| s.accel).collect()
    }

    pub fn yaws(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.yaw).collect()
    }

    /// Mean sample rate over the recording, in Hz.
    pub fn sample_rate(&self) -> f64 {
        let n = self.samples.len();
        (n - 1) as f64 / (self.samples[n - 1].t - self.samples[0].t)
    }

    /// Parses a JSON-lines log, one `{"t", "ax", "ay", "az", "yaw"}` object
    /// per line. Blank lines are ignored; errors carry the 1-based line
    /// number.
    pub fn from_jsonl(text: &str) -> Result<Self, ImuError> {
        #[derive(Deserialize)]
        struct Line {
            t: f64,
            ax: f64,
            ay: f64,
            az: f64,
            yaw: f64,
        }

        let mut samples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| ImuError::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
            samples.push(ImuSample {
                t: line.t,
                accel: [line.ax, line.ay, line.az],
                yaw: line.yaw,
            });
        }
        Self::new(samples)
    }
}

/// The retrieval query derived from a recording: unwrapped yaw plus
/// dead-reckoned translation, sampled at a common rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignature", into = "RawSignature")]
pub struct MotionSignature {
    yaw_seq: Vec<f64>,
    translation_seq: Vec<[f64; 3]>,
    sample_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSignature {
    yaw: Vec<f64>,
    translation: Vec<[f64; 3]>,
    /// Database entries may omit the rate; retrieval never consumes it.
    #[serde(default = "default_sample_rate")]
    sample_rate: f64,
}

fn default_sample_rate() -> f64 {
    30.0
}

impl TryFrom<RawSignature> for MotionSignature {
    type Error = ImuError;

    fn try_from(raw: RawSignature) -> Result<Self, ImuError> {
        MotionSignature::new(raw.yaw, raw.translation, raw.sample_rate)
    }
}

impl From<MotionSignature> for RawSignature {
    fn from(sig: MotionSignature) -> Self {
        RawSignature {
            yaw: sig.yaw_seq,
            translation: sig.translation_seq,
            sample_rate: sig.sample_rate,
        }
    }
}

impl MotionSignature {
    pub fn new(
        yaw_seq: Vec<f64>,
        translation_seq: Vec<[f64; 3]>,
        sample_rate: f64,
    ) -> Result<Self, ImuError> {
        if yaw_seq.is_empty() || yaw_seq.len() != translation_seq.len() {
            return Err(ImuError::InvalidSignatureLengths);
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(ImuError::InvalidSampleRate(sample_rate));
        }
        Ok(Self {
            yaw_seq,
            translation_seq,
            sample_rate,
        })
    }

    pub fn yaw(&self) -> &[f64] {
        &self.yaw_seq
    }

    pub fn translation(&self) -> &[[f64; 3]] {
        &self.translation_seq
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.yaw_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yaw_seq.is_empty()
    }
}

/// Second-order low-pass biquad, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Butterworth low-pass via the bilinear transform (Q = 1/sqrt(2)).
    fn butterworth_lowpass(sample_rate: f64, cutoff: f64) -> Self {
        let omega = 2.0 * std::f64::consts::PI * cutoff / sample_rate;
        let (sin_w, cos_w) = omega.sin_cos();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let alpha = sin_w / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: (1.0 - cos_w) / 2.0 / a0,
            b1: (1.0 - cos_w) / a0,
            b2: (1.0 - cos_w) / 2.0 / a0,
            a1: -2.0 * cos_w / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Filters in place, direct form II transposed, with the delay line
    /// primed to the steady state of the first sample. A constant input
    /// therefore passes through unchanged.
    fn run_in_place(&self, xs: &mut [f64]) {
        let c = xs[0];
        let mut s2 = c * (self.b2 - self.a2);
        let mut s1 = c * (self.b1 - self.a1) + s2;
        for x in xs.iter_mut() {
            let y = self.b0 * *x + s1;
            s1 = self.b1 * *x - self.a1 * y + s2;
            s2 = self.b2 * *x - self.a2 * y;
            *x = y;
        }
    }
}

/// Pad length that lets each pass's transient decay: about three filter
/// time constants, capped by the series length.
fn reflect_pad_len(n: usize, sample_rate: f64, cutoff: f64) -> usize {
    let pad = (3.0 * sample_rate / cutoff).ceil() as usize;
    pad.min(n - 1)
}

fn zero_phase_filter(channel: &mut Vec<f64>, biquad: Biquad, pad: usize) {
    let n = channel.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    // Symmetric reflection: keeps the padding inside the signal's value
    // range, so oscillatory edges extend without a level jump and constants
    // stay constant.
    ext.extend((0..pad).map(|k| channel[pad - k]));
    ext.extend_from_slice(channel);
    ext.extend((0..pad).map(|k| channel[n - 2 - k]));

    biquad.run_in_place(&mut ext);
    ext.reverse();
    biquad.run_in_place(&mut ext);
    ext.reverse();

    channel.clear();
    channel.extend_from_slice(&ext[pad..pad + n]);
}

/// Zero-phase second-order Butterworth low-pass over a 3-vector series.
///
/// The cutoff must lie strictly below the Nyquist frequency. Output length
/// equals input length; a constant series is returned unchanged.
pub fn lowpass_filter(
    series: &[[f64; 3]],
    sample_rate: f64,
    cutoff: f64,
) -> Result<Vec<[f64; 3]>, ImuError> {
    if series.is_empty() {
        return Err(ImuError::EmptySeries);
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(ImuError::InvalidSampleRate(sample_rate));
    }
    let nyquist = sample_rate / 2.0;
    if !(cutoff.is_finite() && cutoff > 0.0 && cutoff < nyquist) {
        return Err(ImuError::InvalidCutoff { cutoff, nyquist });
    }

    let biquad = Biquad::butterworth_lowpass(sample_rate, cutoff);
    let pad = reflect_pad_len(series.len(), sample_rate, cutoff);
    let mut out = vec![[0.0; 3]; series.len()];
    for axis in 0..3 {
        let mut channel: Vec<f64> = series.iter().map(|v| v[axis]).collect();
        zero_phase_filter(&mut channel, biquad, pad);
        for (o, v) in out.iter_mut().zip(&channel) {
            o[axis] = *v;
        }
    }
    Ok(out)
}

/// Trapezoidal cumulative integral of a 3-vector series; output starts at
/// the origin.
pub fn integrate(series: &[[f64; 3]], timestamps: &[f64]) -> Result<Vec<[f64; 3]>, ImuError> {
    if series.len() != timestamps.len() {
        return Err(ImuError::LengthMismatch {
            series: series.len(),
            timestamps: timestamps.len(),
        });
    }
    if series.is_empty() {
        return Err(ImuError::EmptySeries);
    }
    let mut out = Vec::with_capacity(series.len());
    out.push([0.0; 3]);
    for i in 1..series.len() {
        let dt = timestamps[i] - timestamps[i - 1];
        if dt <= 0.0 {
            return Err(ImuError::NonMonotonicTimestamps(i));
        }
        let prev = out[i - 1];
        let mut next = [0.0; 3];
        for axis in 0..3 {
            next[axis] = prev[axis] + 0.5 * (series[i][axis] + series[i - 1][axis]) * dt;
        }
        out.push(next);
    }
    Ok(out)
}

/// Dead-reckoned translation: low-pass the acceleration, subtract its mean,
/// then integrate twice. Mean removal cancels any constant bias, so a
/// recording that starts and ends at rest produces a drift-free path.
pub fn accel_to_translation(rec: &ImuRecording, cutoff: f64) -> Result<Vec<[f64; 3]>, ImuError> {
    let timestamps = rec.timestamps();
    let filtered = lowpass_filter(&rec.accelerations(), rec.sample_rate(), cutoff)?;

    let n = filtered.len() as f64;
    let mut mean = [0.0; 3];
    for v in &filtered {
        for axis in 0..3 {
            mean[axis] += v[axis];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let debiased: Vec<[f64; 3]> = filtered
        .iter()
        .map(|v| [v[0] - mean[0], v[1] - mean[1], v[2] - mean[2]])
        .collect();

    let velocity = integrate(&debiased, &timestamps)?;
    integrate(&velocity, &timestamps)
}

/// Removes 360-degree jumps from a wrapped angle sequence: consecutive
/// output differences equal the input differences mapped to (-180, 180].
pub fn unwrap_degrees(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut prev_out = 0.0;
    for (i, &w) in wrapped.iter().enumerate() {
        if i == 0 {
            prev_out = w;
        } else {
            let mut delta = (w - wrapped[i - 1]).rem_euclid(360.0);
            if delta > 180.0 {
                delta -= 360.0;
            }
            prev_out += delta;
        }
        out.push(prev_out);
    }
    out
}

/// Builds the retrieval query for a recording: unwrapped yaw plus
/// dead-reckoned translation.
pub fn extract_signature(rec: &ImuRecording, cutoff: f64) -> Result<MotionSignature, ImuError> {
    let yaw_seq = unwrap_degrees(&rec.yaws());
    let translation_seq = accel_to_translation(rec, cutoff)?;
    MotionSignature::new(yaw_seq, translation_seq, rec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording_from_accel(
        accel: impl Fn(f64) -> [f64; 3],
        rate: f64,
        duration: f64,
    ) -> ImuRecording {
        let n = (duration * rate) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                ImuSample {
                    t,
                    accel: accel(t),
                    yaw: 0.0,
                }
            })
            .collect();
        ImuRecording::new(samples).unwrap()
    }

    #[test]
    fn lowpass_passes_dc_unchanged() {
        let series = vec![[1.0, 0.0, 0.0]; 100];
        let out = lowpass_filter(&series, 100.0, 5.0).unwrap();
        for v in &out[50..] {
            assert!((v[0] - 1.0).abs() < 1e-6, "got {}", v[0]);
            assert!(v[1].abs() < 1e-6 && v[2].abs() < 1e-6);
        }
    }

    #[test]
    fn lowpass_attenuates_nyquist_content() {
        // Analytic oracle: a second-order Butterworth has magnitude
        // 1/sqrt(1 + (f/fc)^4); two passes square it. At 50 Hz with a 5 Hz
        // cutoff that bounds the gain by 1e-4, and the digital filter only
        // attenuates harder near Nyquist.
        let f_over_fc: f64 = 50.0 / 5.0;
        let analytic_two_pass = 1.0 / (1.0 + f_over_fc.powi(4));
        assert!(analytic_two_pass < 0.05);

        let series: Vec<[f64; 3]> = (0..100)
            .map(|i| [if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0])
            .collect();
        let out = lowpass_filter(&series, 100.0, 5.0).unwrap();
        for v in &out[80..] {
            assert!(v[0].abs() < 0.05, "residual {}", v[0]);
        }
    }

    #[test]
    fn lowpass_rejects_bad_inputs() {
        assert!(matches!(
            lowpass_filter(&[], 100.0, 5.0),
            Err(ImuError::EmptySeries)
        ));
        assert!(matches!(
            lowpass_filter(&[[0.0; 3]; 4], 100.0, 50.0),
            Err(ImuError::InvalidCutoff { .. })
        ));
    }

    #[test]
    fn lowpass_single_sample_is_identity() {
        let out = lowpass_filter(&[[3.0, -1.0, 2.0]], 100.0, 5.0).unwrap();
        for (got, want) in out[0].iter().zip([3.0, -1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_zero_series() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let out = integrate(&vec![[0.0; 3]; 10], &t).unwrap();
        assert!(out.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn integrate_constant_is_exact() {
        let series = vec![[1.0, 0.0, 0.0]; 3];
        let t = [0.0, 0.5, 1.0];
        let out = integrate(&series, &t).unwrap();
        assert_eq!(out, vec![[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn integrate_sine_matches_antiderivative() {
        let rate = 1000.0;
        let n = 1001;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let series: Vec<[f64; 3]> = t.iter().map(|&t| [t.sin(), 0.0, 0.0]).collect();
        let out = integrate(&series, &t).unwrap();
        for (v, &t) in out.iter().zip(&t) {
            assert!((v[0] - (1.0 - t.cos())).abs() < 1e-4);
        }
    }

    #[test]
    fn integrate_rejects_mismatched_inputs() {
        assert!(matches!(
            integrate(&[[0.0; 3]; 3], &[0.0, 1.0]),
            Err(ImuError::LengthMismatch { .. })
        ));
        assert!(matches!(
            integrate(&[[0.0; 3]; 3], &[0.0, 1.0, 0.5]),
            Err(ImuError::NonMonotonicTimestamps(2))
        ));
    }

    #[test]
    fn integrate_is_linear() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let xs: Vec<[f64; 3]> = t.iter().map(|&t| [t.sin(), t.cos(), t]).collect();
        let ys: Vec<[f64; 3]> = t.iter().map(|&t| [t * t, 1.0, -t]).collect();
        let (a, b) = (2.5, -1.25);
        let combo: Vec<[f64; 3]> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                [
                    a * x[0] + b * y[0],
                    a * x[1] + b * y[1],
                    a * x[2] + b * y[2],
                ]
            })
            .collect();
        let ix = integrate(&xs, &t).unwrap();
        let iy = integrate(&ys, &t).unwrap();
        let ic = integrate(&combo, &t).unwrap();
        for i in 0..t.len() {
            for axis in 0..3 {
                let expected = a * ix[i][axis] + b * iy[i][axis];
                assert!((ic[i][axis] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_acceleration_gives_zero_translation() {
        let rec = recording_from_accel(|_| [0.0; 3], 100.0, 2.0);
        let out = accel_to_translation(&rec, 5.0).unwrap();
        assert!(out.iter().all(|v| v.iter().all(|c| c.abs() < 1e-12)));
    }

    #[test]
    fn constant_bias_cancels_exactly() {
        let rec = recording_from_accel(|_| [2.0, 0.0, 0.0], 100.0, 2.0);
        let out = accel_to_translation(&rec, 5.0).unwrap();
        for v in &out {
            assert!(v[0].abs() < 1e-9, "bias leaked: {}", v[0]);
        }
    }

    #[test]
    fn sine_translation_matches_closed_form() {
        // Closed-form double integral of sin(t) - mu where mu is the raw
        // sample mean: x(t) = t - sin(t) - mu t^2 / 2.
        let rate = 1000.0;
        let rec = recording_from_accel(|t| [t.sin(), 0.0, 0.0], rate, 2.0 * std::f64::consts::PI);
        let mu = rec.accelerations().iter().map(|a| a[0]).sum::<f64>() / rec.samples().len() as f64;
        let out = accel_to_translation(&rec, 5.0).unwrap();
        for (v, s) in out.iter().zip(rec.samples()) {
            let expected = s.t - s.t.sin() - mu * s.t * s.t / 2.0;
            assert!(
                (v[0] - expected).abs() < 1e-3,
                "t={} got {} want {}",
                s.t,
                v[0],
                expected
            );
        }
    }

    #[test]
    fn unwrap_crosses_the_wrap_point() {
        assert_eq!(
            unwrap_degrees(&[350.0, 355.0, 2.0, 8.0]),
            vec![350.0, 355.0, 362.0, 368.0]
        );
    }

    #[test]
    fn unwrap_difference_property() {
        let seq = [10.0, 200.0, 359.0, 1.0, 180.5, 180.0, 0.0];
        let out = unwrap_degrees(&seq);
        for i in 1..seq.len() {
            let mut want = (seq[i] - seq[i - 1]).rem_euclid(360.0);
            if want > 180.0 {
                want -= 360.0;
            }
            assert!(((out[i] - out[i - 1]) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_recording_has_flat_signature() {
        let samples: Vec<ImuSample> = (0..200)
            .map(|i| ImuSample {
                t: i as f64 / 100.0,
                accel: [0.0; 3],
                yaw: 42.0,
            })
            .collect();
        let rec = ImuRecording::new(samples).unwrap();
        let sig = extract_signature(&rec, 5.0).unwrap();
        assert!(sig.yaw().iter().all(|&y| y == 42.0));
        assert!(sig
            .translation()
            .iter()
            .all(|v| v.iter().all(|c| c.abs() < 1e-9)));
        assert_eq!(sig.len(), 200);
    }

    #[test]
    fn recording_validation() {
        let s = |t: f64, yaw: f64| ImuSample {
            t,
            accel: [0.0; 3],
            yaw,
        };
        assert!(matches!(
            ImuRecording::new(vec![s(0.0, 0.0)]),
            Err(ImuError::TooFewSamples(1))
        ));
        assert!(matches!(
            ImuRecording::new(vec![s(0.0, 0.0), s(0.0, 0.0)]),
            Err(ImuError::NonMonotonicTimestamps(1))
        ));
        assert!(matches!(
            ImuRecording::new(vec![s(0.0, 360.0), s(1.0, 0.0)]),
            Err(ImuError::YawOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn jsonl_parse_reports_line_numbers() {
        let good = "{\"t\":0.0,\"ax\":0,\"ay\":0,\"az\":0,\"yaw\":10}\n{\"t\":0.01,\"ax\":0,\"ay\":0,\"az\":0,\"yaw\":11}\n";
        let rec = ImuRecording::from_jsonl(good).unwrap();
        assert_eq!(rec.samples().len(), 2);

        let bad = "{\"t\":0.0,\"ax\":0,\"ay\":0,\"az\":0,\"yaw\":10}\nnot json\n";
        match ImuRecording::from_jsonl(bad) {
            Err(ImuError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn signature_round_trips_through_json() {
        let sig = MotionSignature::new(
            vec![1.0, 2.0, 3.0],
            vec![[0.0; 3], [0.1, 0.0, 0.0], [0.2, 0.0, 0.0]],
            30.0,
        )
        .unwrap();
        let json = serde_json::to_string(&sig).unwrap();
        let back: MotionSignature = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sig);

        let invalid = "{\"yaw\":[1.0],\"translation\":[],\"sample_rate\":30.0}";
        assert!(serde_json::from_str::<MotionSignature>(invalid).is_err());
    }
}
