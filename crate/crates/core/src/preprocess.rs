//! Signal conditioning and validity checks applied to every recording before
//! feature extraction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AxisSeries, RecordingSignals, TimeSeries};

pub const AUDIO_RATE: u32 = 44_100;
pub const SPEECH_CUTOFF_HZ: f64 = 4_000.0;
pub const FIR_TAPS: usize = 101;
pub const MOTION_RATE_HZ: f64 = 50.0;
pub const HR_RATE_HZ: f64 = 1.0;
pub const HR_MIN_BPM: f64 = 30.0;
pub const HR_MAX_BPM: f64 = 200.0;
pub const OUTLIER_SD: f64 = 2.0;
/// Files smaller than this fraction of the expected size are treated as corrupt.
pub const CORRUPT_SIZE_RATIO: f64 = 0.95;

/// Hamming-windowed sinc low-pass taps with unit DC gain.
pub fn fir_lowpass_taps(cutoff_hz: f64, sample_rate: f64, taps: usize) -> Result<Vec<f64>> {
    if !(cutoff_hz > 0.0) {
        return Err(Error::OutOfRange {
            what: "cutoff_hz",
            value: cutoff_hz,
        });
    }
    if cutoff_hz >= sample_rate / 2.0 {
        return Err(Error::OutOfRange {
            what: "cutoff_hz (must be below Nyquist)",
            value: cutoff_hz,
        });
    }
    if taps % 2 == 0 {
        return Err(Error::invalid("FIR tap count must be odd"));
    }
    let fc = cutoff_hz / sample_rate;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let k = n as f64 - mid;
            let sinc = if k == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * k).sin() / (PI * k)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= sum);
    Ok(h)
}

/// Zero-phase FIR filtering; edges are padded by repeating the end samples so
/// the output has the input's length.
pub fn fir_filter(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    if signal.is_empty() {
        return Vec::new();
    }
    let half = taps.len() / 2;
    let n = signal.len();
    let first = signal[0];
    let last = signal[n - 1];
    let mut padded = Vec::with_capacity(n + 2 * half);
    padded.extend(std::iter::repeat_n(first, half));
    padded.extend_from_slice(signal);
    padded.extend(std::iter::repeat_n(last, half));
    (0..n)
        .map(|i| {
            padded[i..i + taps.len()]
                .iter()
                .zip(taps.iter().rev())
                .map(|(x, h)| x * h)
                .sum()
        })
        .collect()
}

/// 101-tap linear-phase low-pass for 44.1 kHz audio.
pub fn lowpass_audio(waveform: &[f64], cutoff_hz: f64) -> Result<Vec<f64>> {
    let taps = fir_lowpass_taps(cutoff_hz, AUDIO_RATE as f64, FIR_TAPS)?;
    Ok(fir_filter(waveform, &taps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierMask {
    pub keep: Vec<bool>,
    /// Set when the series was too short to estimate a spread.
    pub too_short: bool,
}

impl OutlierMask {
    pub fn removed(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }
}

/// Marks points further than two population standard deviations from the
/// mean (strict inequality, moments computed once on the input).
pub fn outlier_mask(values: &[f64]) -> OutlierMask {
    if values.len() < 2 {
        return OutlierMask {
            keep: vec![true; values.len()],
            too_short: true,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let keep = values
        .iter()
        .map(|v| (v - mean).abs() <= OUTLIER_SD * sd)
        .collect();
    OutlierMask {
        keep,
        too_short: false,
    }
}

pub fn remove_outliers(values: &[f64]) -> (Vec<f64>, bool) {
    let mask = outlier_mask(values);
    let kept = values
        .iter()
        .zip(&mask.keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .collect();
    (kept, mask.too_short)
}

pub fn remove_series_outliers(series: &TimeSeries) -> TimeSeries {
    series.retain_mask(&outlier_mask(&series.v).keep)
}

fn check_increasing(t: &[f64]) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::invalid(format!(
            "resampling needs at least 2 points, got {}",
            t.len()
        )));
    }
    if let Some(w) = t.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!(
            "timestamps not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Uniform grid `first + k / rate` covering `[first, last]`.
fn uniform_grid(first: f64, last: f64, rate_hz: f64) -> Vec<f64> {
    let n = ((last - first) * rate_hz + 1e-9).floor() as usize + 1;
    (0..n).map(|k| first + k as f64 / rate_hz).collect()
}

/// Linear interpolation of `(t, y)` at monotone query points.
fn interpolate<T: Copy>(t: &[f64], y: &[T], grid: &[f64], lerp: impl Fn(T, T, f64) -> T) -> Vec<T> {
    let mut j = 0;
    grid.iter()
        .map(|&g| {
            while j + 2 < t.len() && t[j + 1] < g {
                j += 1;
            }
            let span = t[j + 1] - t[j];
            let a = ((g - t[j]) / span).clamp(0.0, 1.0);
            lerp(y[j], y[j + 1], a)
        })
        .collect()
}

/// Linear interpolation onto a uniform grid at `target_hz` spanning the
/// first and last timestamps.
pub fn resample(series: &TimeSeries, target_hz: f64) -> Result<TimeSeries> {
    if !(target_hz > 0.0) {
        return Err(Error::OutOfRange {
            what: "target_hz",
            value: target_hz,
        });
    }
    check_increasing(&series.t)?;
    let grid = uniform_grid(series.t[0], *series.t.last().unwrap(), target_hz);
    let v = interpolate(&series.t, &series.v, &grid, |a, b, w| a + (b - a) * w);
    Ok(TimeSeries { t: grid, v })
}

pub fn resample_axes(series: &AxisSeries, target_hz: f64) -> Result<AxisSeries> {
    if !(target_hz > 0.0) {
        return Err(Error::OutOfRange {
            what: "target_hz",
            value: target_hz,
        });
    }
    check_increasing(&series.t)?;
    let grid = uniform_grid(series.t[0], *series.t.last().unwrap(), target_hz);
    let xyz = interpolate(&series.t, &series.xyz, &grid, |a, b, w| {
        [
            a[0] + (b[0] - a[0]) * w,
            a[1] + (b[1] - a[1]) * w,
            a[2] + (b[2] - a[2]) * w,
        ]
    });
    Ok(AxisSeries { t: grid, xyz })
}

/// Drops heart-rate samples outside 30–200 bpm (bounds kept).
pub fn filter_hr_range(series: &TimeSeries) -> TimeSeries {
    let keep: Vec<bool> = series
        .v
        .iter()
        .map(|v| (HR_MIN_BPM..=HR_MAX_BPM).contains(v))
        .collect();
    series.retain_mask(&keep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WearState {
    Worn,
    NonWorn,
}

/// Non-worn when at least half of the confidence readings are zero.
pub fn infer_wear_state(confidence: &[f64]) -> WearState {
    if confidence.is_empty() {
        return WearState::NonWorn;
    }
    let zeros = confidence.iter().filter(|c| **c == 0.0).count();
    if 2 * zeros >= confidence.len() {
        WearState::NonWorn
    } else {
        WearState::Worn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AudioFormat {
    pub sample_rate: u32,
    pub bytes_per_sample: u32,
    pub channels: u32,
    pub header_bytes: u64,
}

impl AudioFormat {
    pub const PCM16_MONO_44K: AudioFormat = AudioFormat {
        sample_rate: AUDIO_RATE,
        bytes_per_sample: 2,
        channels: 1,
        header_bytes: 44,
    };

    pub fn expected_bytes(&self, duration_s: f64) -> u64 {
        let frames = (duration_s * self.sample_rate as f64).round() as u64;
        frames * (self.bytes_per_sample * self.channels) as u64 + self.header_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioCheck {
    Ok,
    Corrupt,
}

pub fn detect_corrupt_audio(byte_size: u64, duration_s: f64, format: AudioFormat) -> AudioCheck {
    let expected = format.expected_bytes(duration_s) as f64;
    if (byte_size as f64) < CORRUPT_SIZE_RATIO * expected {
        AudioCheck::Corrupt
    } else {
        AudioCheck::Ok
    }
}

/// Recording after conditioning, ready for feature extraction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionedSession {
    pub hr: Option<TimeSeries>,
    pub accel: Option<AxisSeries>,
    pub gyro: Option<AxisSeries>,
    pub audio: Option<Vec<f64>>,
    pub worn: bool,
}

/// One row of `preprocess_report.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub outcome: String,
}

impl CheckOutcome {
    fn new(check: &str, outcome: impl Into<String>) -> Self {
        CheckOutcome {
            check: check.to_owned(),
            outcome: outcome.into(),
        }
    }
}

fn magnitudes(xyz: &[[f64; 3]]) -> Vec<f64> {
    xyz.iter().map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()).collect()
}

/// Outlier removal on the magnitude, then 50 Hz resampling of the axes.
pub fn condition_motion(raw: &AxisSeries) -> Result<AxisSeries> {
    let mask = outlier_mask(&magnitudes(&raw.xyz));
    let kept = AxisSeries {
        t: raw.t.iter().zip(&mask.keep).filter(|(_, k)| **k).map(|(t, _)| *t).collect(),
        xyz: raw.xyz.iter().zip(&mask.keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect(),
    };
    resample_axes(&kept, MOTION_RATE_HZ)
}

/// Range filter, outlier removal, then 1 Hz resampling.
pub fn condition_hr(raw: &TimeSeries) -> Result<TimeSeries> {
    let in_range = filter_hr_range(raw);
    if in_range.is_empty() {
        return Err(Error::invalid("no heart-rate samples within 30-200 bpm"));
    }
    let cleaned = remove_series_outliers(&in_range);
    if cleaned.len() == 1 {
        return Ok(cleaned);
    }
    resample(&cleaned, HR_RATE_HZ)
}

/// Runs every conditioning step on one recording and reports each outcome.
pub fn condition_session(signals: &RecordingSignals) -> (ConditionedSession, Vec<CheckOutcome>) {
    let mut checks = Vec::new();
    let mut out = ConditionedSession::default();

    let wear = infer_wear_state(&signals.wear.v);
    out.worn = wear == WearState::Worn;
    checks.push(CheckOutcome::new(
        "wear_state",
        if out.worn { "worn" } else { "non_worn" },
    ));

    match condition_hr(&signals.hr) {
        Ok(hr) => {
            let dropped = signals.hr.len() - filter_hr_range(&signals.hr).len();
            checks.push(CheckOutcome::new("hr_range", format!("dropped {dropped}")));
            checks.push(CheckOutcome::new("hr", format!("ok {} samples", hr.len())));
            out.hr = Some(hr);
        }
        Err(e) => checks.push(CheckOutcome::new("hr", format!("unusable: {e}"))),
    }
    for (name, raw, slot) in [
        ("accel", &signals.accel, &mut out.accel),
        ("gyro", &signals.gyro, &mut out.gyro),
    ] {
        match condition_motion(raw) {
            Ok(s) => {
                checks.push(CheckOutcome::new(name, format!("ok {} samples", s.len())));
                *slot = Some(s);
            }
            Err(e) => checks.push(CheckOutcome::new(name, format!("unusable: {e}"))),
        }
    }
    match &signals.audio {
        Some(a) if signals.audio_rate == AUDIO_RATE => {
            let wave: Vec<f64> = a.iter().map(|&x| x as f64).collect();
            match lowpass_audio(&wave, SPEECH_CUTOFF_HZ) {
                Ok(lp) => {
                    checks.push(CheckOutcome::new("lowpass", "ok"));
                    out.audio = Some(lp);
                }
                Err(e) => checks.push(CheckOutcome::new("lowpass", format!("failed: {e}"))),
            }
        }
        Some(_) => checks.push(CheckOutcome::new(
            "lowpass",
            format!("unsupported sample rate {}", signals.audio_rate),
        )),
        None => checks.push(CheckOutcome::new("lowpass", "no audio")),
    }
    (out, checks)
}
