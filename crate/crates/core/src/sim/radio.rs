//! Proximity and speech sensing of the watches: log-distance signal strength
//! and an energy voice-activity detector.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{PathLoss, VadParams};
use crate::error::{Error, Result};

/// Received signal strength at distance `d_m` plus a shadowing term in dB.
pub fn rssi_from_distance(d_m: f64, params: &PathLoss, shadow_db: f64) -> Result<f64> {
    if !(d_m > 0.0) || !d_m.is_finite() {
        return Err(Error::OutOfRange {
            what: "distance_m",
            value: d_m,
        });
    }
    Ok(params.rssi_at_1m_dbm - 10.0 * params.exponent * d_m.log10() + shadow_db)
}

/// Draws the shadowing term from N(0, noise_db²).
pub fn sample_rssi<R: Rng + ?Sized>(d_m: f64, params: &PathLoss, rng: &mut R) -> Result<f64> {
    let shadow = if params.noise_db > 0.0 {
        Normal::new(0.0, params.noise_db).expect("positive sd").sample(rng)
    } else {
        0.0
    };
    rssi_from_distance(d_m, params, shadow)
}

/// Frame-RMS detector over a noise floor that adapts on non-speech frames.
#[derive(Debug, Clone)]
pub struct EnergyVad {
    params: VadParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadDecision {
    pub speech: bool,
    /// Longest run of speech frames, milliseconds.
    pub longest_run_ms: f64,
    pub final_floor: f64,
}

impl EnergyVad {
    pub fn new(params: VadParams) -> Self {
        EnergyVad { params }
    }

    pub fn frame_len(&self) -> usize {
        ((self.params.frame_ms / 1000.0 * self.params.rate_hz as f64).round() as usize).max(1)
    }

    pub fn detect(&self, snippet: &[f64]) -> VadDecision {
        let n = self.frame_len();
        let mut floor = self.params.initial_floor;
        let (mut run, mut best) = (0usize, 0usize);
        for frame in snippet.chunks_exact(n) {
            let rms = (frame.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
            if rms > self.params.ratio * floor {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
                floor = (1.0 - self.params.adapt) * floor + self.params.adapt * rms;
            }
        }
        let longest_run_ms = best as f64 * self.params.frame_ms;
        VadDecision {
            speech: best > 0 && longest_run_ms >= self.params.min_speech_ms,
            longest_run_ms,
            final_floor: floor,
        }
    }
}

/// The short snippet a watch listens to before deciding to record: a voiced
/// stretch of at least 0.6 s when someone speaks, background noise otherwise.
pub fn synth_vad_snippet<R: Rng + ?Sized>(params: &VadParams, speech: bool, noise_sd: f64, rng: &mut R) -> Vec<f64> {
    let rate = params.rate_hz as f64;
    let n = (params.snippet_s * rate).round() as usize;
    let noise = Normal::new(0.0, noise_sd.max(1e-12)).expect("positive sd");
    let mut out: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
    if speech {
        let f0 = rng.random_range(100.0..250.0);
        let amp = rng.random_range(0.05..0.15);
        let voiced = ((0.6 + 0.3 * rng.random::<f64>()).min(params.snippet_s) * rate) as usize;
        let start = rng.random_range(0..=(n - voiced.min(n)));
        for (k, x) in out[start..start + voiced.min(n)].iter_mut().enumerate() {
            let t = k as f64 / rate;
            let env = 0.7 + 0.3 * (2.0 * std::f64::consts::PI * 4.0 * t).sin();
            let tone: f64 = (1..=4)
                .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            *x += amp * env * tone;
        }
    }
    out
}
