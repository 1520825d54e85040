//! A reduced Geneva-style acoustic parameter set.
//!
//! Frames of 25 ms with a 10 ms hop are analysed within each speech segment
//! (frames never straddle two segments). Twelve low-level descriptors are
//! computed per frame:
//!
//! | # | descriptor | notes |
//! |---|------------|-------|
//! | 0 | F0 | normalised autocorrelation, 60–400 Hz, voiced iff peak ≥ 0.45 |
//! | 1 | loudness | frame RMS |
//! | 2 | spectral centroid | Hz |
//! | 3 | alpha ratio | dB, 50–1000 Hz over 1–5 kHz energy |
//! | 4 | Hammarberg index | dB, peak 0–2 kHz minus peak 2–5 kHz |
//! | 5 | spectral slope 0–500 Hz | dB/kHz, least squares |
//! | 6 | spectral slope 500–1500 Hz | dB/kHz |
//! | 7 | spectral flux | L2-normalised magnitude spectra |
//! | 8–11 | MFCC 1–4 | 26 mel bands over 0–8 kHz, DCT-II |
//!
//! The 46 outputs are: mean and coefficient of variation of every descriptor
//! (24; F0 over voiced frames only), then for F0 and loudness the 20th/50th/
//! 80th percentiles, the 20–80 range and mean/std of rising and falling slopes
//! (16), then loudness-peak rate, voiced and unvoiced run length mean/std and
//! voiced runs per second (6).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::features::stats::percentile_sorted;
use crate::model::{FeatureVector, Modality, Speaker};
use crate::qa::{AnnotationTrack, SegmentLabel};

pub const ACOUSTIC_LITE_DIM: usize = 46;
pub const LLD_COUNT: usize = 12;
pub const FRAME_SECONDS: f64 = 0.025;
pub const HOP_SECONDS: f64 = 0.010;
pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 400.0;
pub const VOICING_THRESHOLD: f64 = 0.45;
pub const MEL_BANDS: usize = 26;
pub const MEL_MAX_HZ: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-10;

pub const LLD_NAMES: [&str; LLD_COUNT] = [
    "f0",
    "loudness",
    "spectral_centroid",
    "alpha_ratio",
    "hammarberg",
    "slope_0_500",
    "slope_500_1500",
    "spectral_flux",
    "mfcc1",
    "mfcc2",
    "mfcc3",
    "mfcc4",
];

/// Feature names in output order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(ACOUSTIC_LITE_DIM);
    for lld in LLD_NAMES {
        names.push(format!("{lld}_mean"));
        names.push(format!("{lld}_cv"));
    }
    for lld in ["f0", "loudness"] {
        for f in [
            "p20", "p50", "p80", "p20_80", "rise_mean", "rise_std", "fall_mean", "fall_std",
        ] {
            names.push(format!("{lld}_{f}"));
        }
    }
    names.extend(
        [
            "loudness_peaks_per_s",
            "voiced_len_mean",
            "voiced_len_std",
            "unvoiced_len_mean",
            "unvoiced_len_std",
            "voiced_segments_per_s",
        ]
        .map(String::from),
    );
    names
}

/// Union of the annotation segments labelled with `speaker`, as sorted,
/// disjoint `(start_s, end_s)` intervals.
pub fn partner_speech_slices(annotation: &AnnotationTrack, speaker: Speaker) -> Vec<(f64, f64)> {
    let want = match speaker {
        Speaker::M => SegmentLabel::M,
        Speaker::F => SegmentLabel::F,
    };
    let mut spans: Vec<(f64, f64)> = annotation
        .segments
        .iter()
        .filter(|s| s.label == want)
        .map(|s| (s.start_s, s.end_s))
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Borrows the waveform samples covered by each interval.
pub fn slice_waveform<'a>(waveform: &'a [f64], rate: u32, spans: &[(f64, f64)]) -> Vec<&'a [f64]> {
    spans
        .iter()
        .filter_map(|&(s, e)| {
            let a = ((s * rate as f64).round() as usize).min(waveform.len());
            let b = ((e * rate as f64).round() as usize).min(waveform.len());
            (b > a).then(|| &waveform[a..b])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatures {
    pub vector: FeatureVector,
    /// No frame passed the voicing threshold; F0 and voiced-run fields are 0.
    pub all_unvoiced: bool,
    pub frames: usize,
    pub voiced_frames: usize,
}

/// Per-frame descriptors of one segment.
#[derive(Debug, Clone, Default)]
struct SegmentFrames {
    /// `lld[k][i]` is descriptor k of frame i; F0 is 0 on unvoiced frames.
    lld: Vec<Vec<f64>>,
    voiced: Vec<bool>,
}

pub struct GemapsLite {
    rate: u32,
    frame_len: usize,
    hop: usize,
    nfft: usize,
    min_lag: usize,
    max_lag: usize,
    window: Vec<f64>,
    mel: Vec<Vec<(usize, f64)>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GemapsLite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GemapsLite")
            .field("rate", &self.rate)
            .field("frame_len", &self.frame_len)
            .field("nfft", &self.nfft)
            .finish()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters as sparse (bin, weight) lists.
fn mel_filterbank(bands: usize, nfft: usize, rate: f64, max_hz: f64) -> Vec<Vec<(usize, f64)>> {
    let top = max_hz.min(rate / 2.0);
    let mel_max = hz_to_mel(top);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = rate / nfft as f64;
    (0..bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..=nfft / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std_pop(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn coeff_var(v: &[f64]) -> f64 {
    let m = mean(v);
    if m.abs() < 1e-12 {
        0.0
    } else {
        std_pop(v) / m.abs()
    }
}

/// Least-squares slope of `y` against `x`.
fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Slopes (units per second) of the maximal strictly rising and strictly
/// falling runs of each contiguous track; falling slopes are magnitudes.
fn run_slopes(tracks: &[Vec<f64>], hop_s: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    for track in tracks {
        let mut i = 0;
        while i + 1 < track.len() {
            let d = track[i + 1] - track[i];
            if d == 0.0 {
                i += 1;
                continue;
            }
            let up = d > 0.0;
            let mut j = i + 1;
            while j + 1 < track.len() {
                let dj = track[j + 1] - track[j];
                if (up && dj > 0.0) || (!up && dj < 0.0) {
                    j += 1;
                } else {
                    break;
                }
            }
            let slope = (track[j] - track[i]) / ((j - i) as f64 * hop_s);
            if up {
                rising.push(slope);
            } else {
                falling.push(-slope);
            }
            i = j;
        }
    }
    (rising, falling)
}

fn contour_functionals(values: &[f64], tracks: &[Vec<f64>], hop_s: f64) -> [f64; 8] {
    if values.is_empty() {
        return [0.0; 8];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p20 = percentile_sorted(&sorted, 0.2);
    let p50 = percentile_sorted(&sorted, 0.5);
    let p80 = percentile_sorted(&sorted, 0.8);
    let (rise, fall) = run_slopes(tracks, hop_s);
    [
        p20,
        p50,
        p80,
        p80 - p20,
        mean(&rise),
        std_pop(&rise),
        mean(&fall),
        std_pop(&fall),
    ]
}

impl GemapsLite {
    pub fn new(rate: u32) -> Result<Self> {
        if rate < 2 * F0_MAX_HZ as u32 {
            return Err(Error::OutOfRange {
                what: "sample rate",
                value: rate as f64,
            });
        }
        let r = rate as f64;
        let frame_len = (FRAME_SECONDS * r).floor() as usize;
        let hop = (HOP_SECONDS * r).round() as usize;
        let min_lag = (r / F0_MAX_HZ).ceil() as usize;
        let max_lag = ((r / F0_MIN_HZ).floor() as usize).min(frame_len - 2);
        let nfft = (frame_len + max_lag + 1).next_power_of_two();
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let mut planner = FftPlanner::new();
        Ok(GemapsLite {
            rate,
            frame_len,
            hop,
            nfft,
            min_lag,
            max_lag,
            window,
            mel: mel_filterbank(MEL_BANDS, nfft, r, MEL_MAX_HZ),
            forward: planner.plan_fft_forward(nfft),
            inverse: planner.plan_fft_inverse(nfft),
        })
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.rate as f64
    }

    /// F0 in Hz if the frame is voiced.
    fn pitch(&self, frame: &[f64], buf: &mut [Complex<f64>]) -> Option<f64> {
        let n = frame.len();
        let m = mean(frame);
        let centred: Vec<f64> = frame.iter().map(|x| x - m).collect();
        let energy: f64 = centred.iter().map(|x| x * x).sum();
        if energy <= 1e-12 {
            return None;
        }
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(if i < n { centred[i] } else { 0.0 }, 0.0);
        }
        self.forward.process(buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(buf);
        let scale = 1.0 / self.nfft as f64;

        // prefix[i] = sum of squares of the first i samples
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + centred[i] * centred[i];
        }
        let lo = self.min_lag.saturating_sub(1).max(1);
        let hi = (self.max_lag + 1).min(n - 1);
        let r: Vec<f64> = (lo..=hi)
            .map(|lag| {
                let head = prefix[n - lag];
                let tail = prefix[n] - prefix[lag];
                let denom = (head * tail).sqrt();
                if denom > 0.0 {
                    buf[lag].re * scale / denom
                } else {
                    0.0
                }
            })
            .collect();
        let at = |lag: usize| r[lag - lo];
        let search = self.min_lag..=self.max_lag.min(hi - 1);
        let best = search.clone().map(at).fold(f64::NEG_INFINITY, f64::max);
        if !(best >= VOICING_THRESHOLD) {
            return None;
        }
        let lag = search
            .clone()
            .find(|&l| at(l) >= 0.9 * best && at(l) > at(l - 1) && at(l) >= at(l + 1))
            .unwrap_or_else(|| search.max_by(|a, b| at(*a).total_cmp(&at(*b))).unwrap());
        let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        Some(self.rate as f64 / (lag as f64 + shift))
    }

    fn segment_frames(&self, segment: &[f64]) -> SegmentFrames {
        let mut out = SegmentFrames {
            lld: vec![Vec::new(); LLD_COUNT],
            voiced: Vec::new(),
        };
        if segment.len() < self.frame_len {
            return out;
        }
        let rate = self.rate as f64;
        let bin_hz = rate / self.nfft as f64;
        let half = self.nfft / 2;
        let mut buf = vec![Complex::new(0.0, 0.0); self.nfft];
        let mut prev_mag: Option<Vec<f64>> = None;
        let band = |lo: f64, hi: f64| {
            let a = (lo / bin_hz).ceil() as usize;
            let b = ((hi / bin_hz).ceil() as usize).min(half + 1);
            a..b
        };
        let alpha_lo = band(50.0, 1000.0);
        let alpha_hi = band(1000.0, 5000.0);
        let ham_lo = band(0.0, 2000.0);
        let ham_hi = band(2000.0, 5000.0);
        let sl_lo = band(0.0, 500.0);
        let sl_hi = band(500.0, 1500.0);

        let mut start = 0;
        while start + self.frame_len <= segment.len() {
            let frame = &segment[start..start + self.frame_len];
            start += self.hop;

            let f0 = self.pitch(frame, &mut buf);
            let rms = (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt();

            for (i, c) in buf.iter_mut().enumerate() {
                let x = if i < self.frame_len { frame[i] * self.window[i] } else { 0.0 };
                *c = Complex::new(x, 0.0);
            }
            self.forward.process(&mut buf);
            let power: Vec<f64> = buf[..=half].iter().map(|c| c.norm_sqr()).collect();
            let db: Vec<f64> = power.iter().map(|p| 10.0 * (p + LOG_FLOOR).log10()).collect();
            let total: f64 = power.iter().sum();

            let centroid = if total > 0.0 {
                power.iter().enumerate().map(|(k, p)| k as f64 * bin_hz * p).sum::<f64>() / total
            } else {
                0.0
            };
            let e_lo: f64 = power[alpha_lo.clone()].iter().sum();
            let e_hi: f64 = power[alpha_hi.clone()].iter().sum();
            let alpha = 10.0 * ((e_lo + LOG_FLOOR) / (e_hi + LOG_FLOOR)).log10();
            let peak = |r: std::ops::Range<usize>| db[r].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let hammarberg = peak(ham_lo.clone()) - peak(ham_hi.clone());
            let slope = |r: std::ops::Range<usize>| {
                let x: Vec<f64> = r.clone().map(|k| k as f64 * bin_hz / 1000.0).collect();
                ls_slope(&x, &db[r])
            };
            let slope_lo = slope(sl_lo.clone());
            let slope_hi = slope(sl_hi.clone());

            let mag: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
            let norm = mag.iter().map(|m| m * m).sum::<f64>().sqrt();
            let mag: Vec<f64> = if norm > 0.0 {
                mag.iter().map(|m| m / norm).collect()
            } else {
                vec![0.0; mag.len()]
            };
            let flux = prev_mag
                .as_ref()
                .map(|p| p.iter().zip(&mag).map(|(a, b)| (b - a).powi(2)).sum())
                .unwrap_or(0.0);
            prev_mag = Some(mag);

            let log_mel: Vec<f64> = self
                .mel
                .iter()
                .map(|filt| {
                    let e: f64 = filt.iter().map(|&(k, w)| w * power[k]).sum();
                    e.max(LOG_FLOOR).ln()
                })
                .collect();
            let m = log_mel.len() as f64;
            let mfcc = |c: usize| {
                (2.0 / m).sqrt()
                    * log_mel
                        .iter()
                        .enumerate()
                        .map(|(j, v)| v * (PI * c as f64 * (j as f64 + 0.5) / m).cos())
                        .sum::<f64>()
            };

            let row = [
                f0.unwrap_or(0.0),
                rms,
                centroid,
                alpha,
                hammarberg,
                slope_lo,
                slope_hi,
                flux,
                mfcc(1),
                mfcc(2),
                mfcc(3),
                mfcc(4),
            ];
            for (k, v) in row.into_iter().enumerate() {
                out.lld[k].push(v);
            }
            out.voiced.push(f0.is_some());
        }
        out
    }

    /// Extracts the 46 functionals from the given speech segments.
    pub fn extract(&self, segments: &[&[f64]]) -> Result<AcousticFeatures> {
        let total_samples: usize = segments.iter().map(|s| s.len()).sum();
        let duration = total_samples as f64 / self.rate as f64;
        if segments.is_empty() || duration < 1.0 {
            return Err(Error::invalid(format!(
                "acoustic extraction needs at least 1 s of speech, got {duration:.3} s"
            )));
        }
        let per_segment: Vec<SegmentFrames> = segments.iter().map(|s| self.segment_frames(s)).collect();
        let hop_s = self.hop_seconds();

        let mut lld: Vec<Vec<f64>> = vec![Vec::new(); LLD_COUNT];
        let mut f0_voiced = Vec::new();
        let mut f0_tracks: Vec<Vec<f64>> = Vec::new();
        let mut loud_tracks: Vec<Vec<f64>> = Vec::new();
        let mut voiced_runs = Vec::new();
        let mut unvoiced_runs = Vec::new();
        let mut peaks = 0usize;
        for seg in &per_segment {
            for k in 0..LLD_COUNT {
                lld[k].extend_from_slice(&seg.lld[k]);
            }
            let mut current: Vec<f64> = Vec::new();
            let mut run = 0usize;
            let mut run_voiced = None;
            for (i, &v) in seg.voiced.iter().enumerate() {
                if v {
                    f0_voiced.push(seg.lld[0][i]);
                    current.push(seg.lld[0][i]);
                } else if !current.is_empty() {
                    f0_tracks.push(std::mem::take(&mut current));
                }
                if run_voiced == Some(v) {
                    run += 1;
                } else {
                    match run_voiced {
                        Some(true) => voiced_runs.push(run as f64 * hop_s),
                        Some(false) => unvoiced_runs.push(run as f64 * hop_s),
                        None => {}
                    }
                    run_voiced = Some(v);
                    run = 1;
                }
            }
            match run_voiced {
                Some(true) => voiced_runs.push(run as f64 * hop_s),
                Some(false) => unvoiced_runs.push(run as f64 * hop_s),
                None => {}
            }
            if !current.is_empty() {
                f0_tracks.push(current);
            }
            let loud = &seg.lld[1];
            peaks += count_peaks(loud);
            loud_tracks.push(loud.clone());
        }
        let frames = lld[1].len();
        let voiced_frames = f0_voiced.len();

        let mut values = Vec::with_capacity(ACOUSTIC_LITE_DIM);
        for (k, series) in lld.iter().enumerate() {
            let s: &[f64] = if k == 0 { &f0_voiced } else { series };
            values.push(mean(s));
            values.push(coeff_var(s));
        }
        values.extend(contour_functionals(&f0_voiced, &f0_tracks, hop_s));
        values.extend(contour_functionals(&lld[1], &loud_tracks, hop_s));
        values.push(peaks as f64 / duration);
        values.push(mean(&voiced_runs));
        values.push(std_pop(&voiced_runs));
        values.push(mean(&unvoiced_runs));
        values.push(std_pop(&unvoiced_runs));
        values.push(voiced_runs.len() as f64 / duration);
        debug_assert_eq!(values.len(), ACOUSTIC_LITE_DIM);

        Ok(AcousticFeatures {
            vector: FeatureVector::new(Modality::Acoustic, values)?,
            all_unvoiced: voiced_frames == 0,
            frames,
            voiced_frames,
        })
    }
}

/// Local loudness maxima over a ±2 frame neighbourhood that exceed the track mean.
fn count_peaks(loud: &[f64]) -> usize {
    let m = mean(loud);
    (0..loud.len())
        .filter(|&i| {
            let x = loud[i];
            if x <= m || x <= 0.0 {
                return false;
            }
            let left = i.saturating_sub(2)..i;
            let right = i + 1..(i + 3).min(loud.len());
            left.clone().all(|j| loud[j] < x) && right.clone().all(|j| loud[j] <= x) && !left.is_empty() && !right.is_empty()
        })
        .count()
}

/// Convenience wrapper over [`GemapsLite::extract`].
pub fn gemaps_lite(segments: &[&[f64]], rate: u32) -> Result<AcousticFeatures> {
    GemapsLite::new(rate)?.extract(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::{AnnotationSegment, AnnotationTrack};
    use rand::{Rng, SeedableRng};

    const RATE: u32 = 44_100;

    fn tone(freq: f64, seconds: f64, amp: f64) -> Vec<f64> {
        (0..(seconds * RATE as f64) as usize)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / RATE as f64).sin())
            .collect()
    }

    fn track(segs: &[(f64, f64, SegmentLabel)]) -> AnnotationTrack {
        AnnotationTrack {
            segments: segs
                .iter()
                .map(|&(start_s, end_s, label)| AnnotationSegment { start_s, end_s, label })
                .collect(),
        }
    }

    #[test]
    fn dimension_and_names() {
        assert_eq!(feature_names().len(), ACOUSTIC_LITE_DIM);
    }

    #[test]
    fn slices_for_speaker() {
        let t = track(&[(0.0, 10.0, SegmentLabel::M), (10.0, 20.0, SegmentLabel::F)]);
        assert_eq!(partner_speech_slices(&t, Speaker::M), vec![(0.0, 10.0)]);
        let noise = track(&[(0.0, 300.0, SegmentLabel::N)]);
        assert!(partner_speech_slices(&noise, Speaker::M).is_empty());
        let overlap = track(&[
            (5.0, 15.0, SegmentLabel::M),
            (0.0, 10.0, SegmentLabel::M),
            (20.0, 22.0, SegmentLabel::C),
            (30.0, 31.0, SegmentLabel::M),
        ]);
        assert_eq!(partner_speech_slices(&overlap, Speaker::M), vec![(0.0, 15.0), (30.0, 31.0)]);
    }

    #[test]
    fn slice_waveform_bounds() {
        let w: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let parts = slice_waveform(&w, 10, &[(0.0, 1.0), (9.5, 20.0)]);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 10);
        assert_eq!(parts[1], &w[95..100]);
    }

    #[test]
    fn pure_tone_pitch() {
        let x = tone(220.0, 3.0, 0.5);
        let f = gemaps_lite(&[&x], RATE).unwrap();
        let v = &f.vector.values;
        assert!((218.0..=222.0).contains(&v[0]), "F0 mean {}", v[0]);
        assert!(!f.all_unvoiced);
        assert_eq!(f.voiced_frames, f.frames);
        assert!((v[45] - 1.0 / 3.0).abs() < 0.01, "voiced segments/s {}", v[45]);
        // loudness mean is the tone RMS
        assert!((v[2] - 0.5 / 2f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn pitch_tracks_other_frequencies() {
        for freq in [80.0, 120.0, 180.0, 310.0, 390.0] {
            let x = tone(freq, 1.2, 0.3);
            let v = gemaps_lite(&[&x], RATE).unwrap().vector.values;
            assert!((v[0] - freq).abs() < 0.01 * freq, "{freq} -> {}", v[0]);
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let x = vec![0.0; RATE as usize * 2];
        let f = gemaps_lite(&[&x], RATE).unwrap();
        assert!(f.all_unvoiced);
        let v = &f.vector.values;
        assert_eq!(v[0], 0.0);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[3], 0.0);
        for i in 32..40 {
            assert_eq!(v[i], 0.0, "loudness functional {i}");
        }
        assert_eq!(v[45], 0.0);
        assert_eq!(v[40], 0.0);
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..RATE as usize * 2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let lp = crate::preprocess::lowpass_audio(&x, 4000.0).unwrap();
        let f = gemaps_lite(&[&lp], RATE).unwrap();
        let frac = f.voiced_frames as f64 / f.frames as f64;
        assert!(frac <= 0.2, "voiced fraction {frac}");
    }

    #[test]
    fn constant_loudness_has_zero_variation() {
        // A Nyquist-rate square wave has identical RMS and magnitude spectrum in every frame.
        let x: Vec<f64> = (0..RATE as usize * 2).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let v = gemaps_lite(&[&x], RATE).unwrap().vector.values;
        for k in 1..LLD_COUNT {
            assert!(v[2 * k + 1].abs() < 1e-9, "{} cv = {}", LLD_NAMES[k], v[2 * k + 1]);
        }
        assert!(v[3].abs() < 1e-12);
    }

    #[test]
    fn too_short_input_errors() {
        let x = tone(200.0, 0.5, 0.5);
        assert!(gemaps_lite(&[&x], RATE).is_err());
        assert!(gemaps_lite(&[], RATE).is_err());
        let y = tone(200.0, 0.6, 0.5);
        // two segments summing to over a second are accepted
        assert_eq!(gemaps_lite(&[&x, &y], RATE).unwrap().vector.dim(), ACOUSTIC_LITE_DIM);
    }

    #[test]
    fn louder_and_higher_voice_moves_functionals() {
        let low = tone(120.0, 2.0, 0.1);
        let high = tone(200.0, 2.0, 0.4);
        let a = gemaps_lite(&[&low], RATE).unwrap().vector.values;
        let b = gemaps_lite(&[&high], RATE).unwrap().vector.values;
        assert!(b[0] > a[0] + 50.0);
        assert!(b[2] > a[2] * 3.0);
    }

    #[test]
    fn run_slopes_split_rise_and_fall() {
        let (r, f) = run_slopes(&[vec![0.0, 1.0, 2.0, 1.0, 1.0, 3.0]], 0.5);
        assert_eq!(r, vec![2.0, 4.0]);
        assert_eq!(f, vec![2.0]);
    }
}
