//! Simulator configuration and its flat-file keys.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::model::{HourRange, Schedule};

/// Log-distance path-loss model of the watch-to-watch signal strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub rssi_at_1m_dbm: f64,
    pub exponent: f64,
    /// Standard deviation of the Gaussian shadowing term, dB.
    pub noise_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadParams {
    /// Sample rate of the snippet the watch listens to before recording.
    pub rate_hz: u32,
    pub snippet_s: f64,
    pub frame_ms: f64,
    /// A frame is speech when its RMS exceeds `ratio` × the noise floor.
    pub ratio: f64,
    pub initial_floor: f64,
    /// Smoothing factor of the floor update on non-speech frames.
    pub adapt: f64,
    pub min_speech_ms: f64,
}

/// Planted dependence of the signals on the latent emotion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    /// Heart-rate increase at arousal 100, bpm.
    pub alpha_hr: f64,
    /// Motion noise standard deviation at arousal 100, m/s² (gyro: rad/s).
    pub beta_mv: f64,
    /// F0 increase at arousal 100, Hz.
    pub gamma_f0: f64,
    /// Relative voice-amplitude increase at arousal 100.
    pub gamma_en: f64,
    /// Probability that a sentiment word is positive, at valence 0 and 100.
    pub lex_pos_min: f64,
    pub lex_pos_max: f64,
    /// Share of spoken tokens drawn from the sentiment lexicon.
    pub sentiment_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub hr_sd: f64,
    /// Per-partner spread of resting heart rate, bpm.
    pub base_bpm_sd: f64,
    pub motion_sd: f64,
    pub audio_sd: f64,
    /// Share of transcript tokens that are inaudible (`XY`).
    pub xy_rate: f64,
    /// Self-report deviation from the latent value, slider points.
    pub report_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    pub valence_mean: f64,
    pub arousal_mean: f64,
    /// Partner baselines are drawn uniformly within ± this spread of the mean.
    pub baseline_spread: f64,
    /// Per-minute pull back towards the partner baseline.
    pub reversion: f64,
    pub step_sd: f64,
    pub spike_prob: f64,
    pub spike_sd: f64,
    /// Correlation between a partner's valence and arousal, applied to the
    /// baseline offsets and the per-minute steps.
    pub va_correlation: f64,
}

/// Minute-level proximity and conversation process of a couple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialParams {
    pub p_stay_together: f64,
    pub p_come_together: f64,
    pub p_talk_start: f64,
    pub p_talk_stop: f64,
    /// Per-minute chance that a partner talks with someone else while apart.
    pub p_talk_apart: f64,
    pub near_m: (f64, f64),
    pub far_m: (f64, f64),
    /// Length range of one speaking turn, seconds.
    pub turn_s: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    /// Seconds of audio written per retained recording.
    pub audio_clip_s: f64,
    /// Seconds of sensor data written per recording.
    pub sensor_window_s: f64,
    pub hr_rate_hz: f64,
    pub motion_rate_hz: f64,
    pub aux_rate_hz: f64,
    /// Timestamp jitter as a fraction of the nominal sample period.
    pub jitter: f64,
}

/// Injected data-quality problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Faults {
    pub nonworn_prob: f64,
    pub corrupt_audio_prob: f64,
    pub missing_sensor_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_couples: u32,
    pub days: u32,
    pub seed: u64,
    pub rssi_threshold_dbm: f64,
    pub path_loss: PathLoss,
    pub vad: VadParams,
    pub compliance: f64,
    pub base_bpm: f64,
    pub effects: Effects,
    pub noise: Noise,
    pub latent: LatentParams,
    pub social: SocialParams,
    pub signal: SignalParams,
    pub faults: Faults,
    pub default_schedule: Schedule,
    pub schedules: BTreeMap<u32, Schedule>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_couples: 13,
            days: 7,
            seed: 0,
            rssi_threshold_dbm: -70.0,
            path_loss: PathLoss {
                rssi_at_1m_dbm: -59.0,
                exponent: 2.0,
                noise_db: 2.0,
            },
            vad: VadParams {
                rate_hz: 8000,
                snippet_s: 1.0,
                frame_ms: 20.0,
                ratio: 4.0,
                initial_floor: 0.005,
                adapt: 0.05,
                min_speech_ms: 500.0,
            },
            compliance: 0.6,
            base_bpm: 72.0,
            effects: Effects {
                alpha_hr: 25.0,
                beta_mv: 1.5,
                gamma_f0: 60.0,
                gamma_en: 1.0,
                lex_pos_min: 0.1,
                lex_pos_max: 0.9,
                sentiment_density: 0.4,
            },
            noise: Noise {
                hr_sd: 3.0,
                base_bpm_sd: 6.0,
                motion_sd: 0.15,
                audio_sd: 0.003,
                xy_rate: 0.03,
                report_sd: 8.0,
            },
            latent: LatentParams {
                valence_mean: 68.0,
                arousal_mean: 58.0,
                baseline_spread: 10.0,
                reversion: 0.05,
                step_sd: 4.0,
                spike_prob: 0.02,
                spike_sd: 20.0,
                va_correlation: 0.0,
            },
            social: SocialParams {
                p_stay_together: 0.9,
                p_come_together: 0.25,
                p_talk_start: 0.35,
                p_talk_stop: 0.3,
                p_talk_apart: 0.15,
                near_m: (0.5, 3.0),
                far_m: (10.0, 60.0),
                turn_s: (2.0, 8.0),
            },
            signal: SignalParams {
                audio_clip_s: 300.0,
                sensor_window_s: 300.0,
                hr_rate_hz: 1.0,
                motion_rate_hz: 50.0,
                aux_rate_hz: 1.0,
                jitter: 0.1,
            },
            faults: Faults {
                nonworn_prob: 0.0,
                corrupt_audio_prob: 0.0,
                missing_sensor_prob: 0.0,
            },
            default_schedule: Schedule::default(),
            schedules: BTreeMap::new(),
        }
    }
}

fn parse_pair(s: &str) -> Option<(f64, f64)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

const PAIR_KEYS: [&str; 3] = ["social.near_m", "social.far_m", "social.turn_s"];

/// Keys every simulation config file must define (possibly via overrides).
pub const REQUIRED_KEYS: [&str; 3] = ["n_couples", "days", "seed"];

macro_rules! scalar_keys {
    ($cfg:ident, $f:ident) => {
        $f!("n_couples", $cfg.n_couples);
        $f!("days", $cfg.days);
        $f!("seed", $cfg.seed);
        $f!("rssi_threshold_dbm", $cfg.rssi_threshold_dbm);
        $f!("path_loss.rssi_at_1m_dbm", $cfg.path_loss.rssi_at_1m_dbm);
        $f!("path_loss.exponent", $cfg.path_loss.exponent);
        $f!("path_loss.noise_db", $cfg.path_loss.noise_db);
        $f!("vad.rate_hz", $cfg.vad.rate_hz);
        $f!("vad.snippet_s", $cfg.vad.snippet_s);
        $f!("vad.frame_ms", $cfg.vad.frame_ms);
        $f!("vad.ratio", $cfg.vad.ratio);
        $f!("vad.initial_floor", $cfg.vad.initial_floor);
        $f!("vad.adapt", $cfg.vad.adapt);
        $f!("vad.min_speech_ms", $cfg.vad.min_speech_ms);
        $f!("compliance", $cfg.compliance);
        $f!("base_bpm", $cfg.base_bpm);
        $f!("effect.alpha_hr", $cfg.effects.alpha_hr);
        $f!("effect.beta_mv", $cfg.effects.beta_mv);
        $f!("effect.gamma_f0", $cfg.effects.gamma_f0);
        $f!("effect.gamma_en", $cfg.effects.gamma_en);
        $f!("effect.lex_pos_min", $cfg.effects.lex_pos_min);
        $f!("effect.lex_pos_max", $cfg.effects.lex_pos_max);
        $f!("effect.sentiment_density", $cfg.effects.sentiment_density);
        $f!("noise.hr_sd", $cfg.noise.hr_sd);
        $f!("noise.base_bpm_sd", $cfg.noise.base_bpm_sd);
        $f!("noise.motion_sd", $cfg.noise.motion_sd);
        $f!("noise.audio_sd", $cfg.noise.audio_sd);
        $f!("noise.xy_rate", $cfg.noise.xy_rate);
        $f!("noise.report_sd", $cfg.noise.report_sd);
        $f!("latent.valence_mean", $cfg.latent.valence_mean);
        $f!("latent.arousal_mean", $cfg.latent.arousal_mean);
        $f!("latent.baseline_spread", $cfg.latent.baseline_spread);
        $f!("latent.reversion", $cfg.latent.reversion);
        $f!("latent.step_sd", $cfg.latent.step_sd);
        $f!("latent.spike_prob", $cfg.latent.spike_prob);
        $f!("latent.spike_sd", $cfg.latent.spike_sd);
        $f!("latent.va_correlation", $cfg.latent.va_correlation);
        $f!("social.p_stay_together", $cfg.social.p_stay_together);
        $f!("social.p_come_together", $cfg.social.p_come_together);
        $f!("social.p_talk_start", $cfg.social.p_talk_start);
        $f!("social.p_talk_stop", $cfg.social.p_talk_stop);
        $f!("social.p_talk_apart", $cfg.social.p_talk_apart);
        $f!("signal.audio_clip_s", $cfg.signal.audio_clip_s);
        $f!("signal.sensor_window_s", $cfg.signal.sensor_window_s);
        $f!("signal.hr_rate_hz", $cfg.signal.hr_rate_hz);
        $f!("signal.motion_rate_hz", $cfg.signal.motion_rate_hz);
        $f!("signal.aux_rate_hz", $cfg.signal.aux_rate_hz);
        $f!("signal.jitter", $cfg.signal.jitter);
        $f!("fault.nonworn_prob", $cfg.faults.nonworn_prob);
        $f!("fault.corrupt_audio_prob", $cfg.faults.corrupt_audio_prob);
        $f!("fault.missing_sensor_prob", $cfg.faults.missing_sensor_prob);
    };
}

const SCHEDULE_FIELDS: [&str; 3] = ["weekday_morning", "weekday_evening", "weekend"];

fn set_window(s: &mut Schedule, field: &str, r: HourRange) {
    match field {
        "weekday_morning" => s.weekday_morning = r,
        "weekday_evening" => s.weekday_evening = r,
        _ => s.weekend = r,
    }
}

impl SimConfig {
    /// Every scalar key understood by [`SimConfig::from_kv`].
    pub fn scalar_keys() -> Vec<&'static str> {
        let mut keys = Vec::new();
        let c = SimConfig::default();
        macro_rules! push {
            ($k:expr, $slot:expr) => {{
                let _ = &$slot;
                keys.push($k);
            }};
        }
        scalar_keys!(c, push);
        keys.extend(PAIR_KEYS);
        keys
    }

    /// Builds a config from defaults plus file entries. Keys:
    /// the scalars in [`SimConfig::scalar_keys`]; `social.near_m`,
    /// `social.far_m` and `social.turn_s` as `lo,hi`; `schedule.<window>` for every couple and
    /// `schedule.<couple>.<window>` for one couple, windows written `start-end`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let known: Vec<&str> = Self::scalar_keys();
        kv.reject_unknown(|k| {
            if known.contains(&k) {
                return true;
            }
            let parts: Vec<&str> = k.split('.').collect();
            match parts.as_slice() {
                ["schedule", w] => SCHEDULE_FIELDS.contains(w),
                ["schedule", c, w] => c.parse::<u32>().is_ok() && SCHEDULE_FIELDS.contains(w),
                _ => false,
            }
        })?;
        for key in REQUIRED_KEYS {
            if !kv.contains(key) {
                return Err(Error::MissingKey(key.to_string()));
            }
        }
        let mut cfg = SimConfig::default();
        macro_rules! read {
            ($k:expr, $slot:expr) => {
                kv.read_into($k, &mut $slot)?
            };
        }
        scalar_keys!(cfg, read);
        for (key, slot) in [
            ("social.near_m", &mut cfg.social.near_m),
            ("social.far_m", &mut cfg.social.far_m),
            ("social.turn_s", &mut cfg.social.turn_s),
        ] {
            if let Some(raw) = kv.raw(key) {
                *slot = parse_pair(raw).ok_or_else(|| kv.error_at(key, "expected `lo,hi`"))?;
            }
        }
        let range = |key: &str| -> Result<HourRange> {
            kv.raw(key)
                .unwrap_or_default()
                .parse()
                .map_err(|e: Error| kv.error_at(key, e.to_string()))
        };
        for field in SCHEDULE_FIELDS {
            let key = format!("schedule.{field}");
            if kv.contains(&key) {
                set_window(&mut cfg.default_schedule, field, range(&key)?);
            }
        }
        let per_couple: Vec<&str> = kv.keys().filter(|k| k.split('.').count() == 3).collect();
        for key in per_couple {
            let parts: Vec<&str> = key.split('.').collect();
            let couple: u32 = parts[1].parse().expect("checked above");
            let entry = cfg.schedules.entry(couple).or_insert(cfg.default_schedule);
            set_window(entry, parts[2], range(key)?);
        }
        cfg.validate().map_err(|e| match e {
            Error::OutOfRange { what, value } => kv.error_at(what, format!("value {value} out of range")),
            other => Error::Config {
                line: 0,
                msg: other.to_string(),
            },
        })?;
        Ok(cfg)
    }

    /// Serialises every key, so that `from_kv(parse(to_kv_text()))` round-trips.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let c = self.clone();
        macro_rules! emit {
            ($k:expr, $slot:expr) => {
                out.push_str(&format!("{} = {}\n", $k, $slot))
            };
        }
        scalar_keys!(c, emit);
        out.push_str(&format!("social.near_m = {},{}\n", c.social.near_m.0, c.social.near_m.1));
        out.push_str(&format!("social.far_m = {},{}\n", c.social.far_m.0, c.social.far_m.1));
        out.push_str(&format!("social.turn_s = {},{}\n", c.social.turn_s.0, c.social.turn_s.1));
        let d = c.default_schedule;
        out.push_str(&format!(
            "schedule.weekday_morning = {}\nschedule.weekday_evening = {}\nschedule.weekend = {}\n",
            d.weekday_morning, d.weekday_evening, d.weekend
        ));
        for (id, s) in &c.schedules {
            out.push_str(&format!(
                "schedule.{id}.weekday_morning = {}\nschedule.{id}.weekday_evening = {}\nschedule.{id}.weekend = {}\n",
                s.weekday_morning, s.weekday_evening, s.weekend
            ));
        }
        out
    }

    pub fn schedule_of(&self, couple: u32) -> Schedule {
        self.schedules.get(&couple).copied().unwrap_or(self.default_schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let range = |what: &'static str, value: f64, lo: f64, hi: f64| {
            if value.is_finite() && value >= lo && value <= hi {
                Ok(())
            } else {
                Err(Error::OutOfRange { what, value })
            }
        };
        range("n_couples", self.n_couples as f64, 1.0, 10_000.0)?;
        range("days", self.days as f64, 1.0, 366.0)?;
        if !(self.rssi_threshold_dbm < 0.0) {
            return Err(Error::OutOfRange {
                what: "rssi_threshold_dbm",
                value: self.rssi_threshold_dbm,
            });
        }
        range("path_loss.exponent", self.path_loss.exponent, 1.5, 4.0)?;
        range("path_loss.noise_db", self.path_loss.noise_db, 0.0, 50.0)?;
        range("compliance", self.compliance, 0.0, 1.0)?;
        range("vad.rate_hz", self.vad.rate_hz as f64, 1000.0, 96_000.0)?;
        range("vad.snippet_s", self.vad.snippet_s, 0.1, 10.0)?;
        range("vad.frame_ms", self.vad.frame_ms, 1.0, 100.0)?;
        range("vad.ratio", self.vad.ratio, 1.0, 1e6)?;
        range("vad.initial_floor", self.vad.initial_floor, 1e-9, 1.0)?;
        range("vad.adapt", self.vad.adapt, 0.0, 1.0)?;
        range("vad.min_speech_ms", self.vad.min_speech_ms, 0.0, self.vad.snippet_s * 1000.0)?;
        for (what, v) in [
            ("effect.lex_pos_min", self.effects.lex_pos_min),
            ("effect.lex_pos_max", self.effects.lex_pos_max),
            ("effect.sentiment_density", self.effects.sentiment_density),
            ("noise.xy_rate", self.noise.xy_rate),
            ("latent.reversion", self.latent.reversion),
            ("latent.spike_prob", self.latent.spike_prob),
            ("social.p_stay_together", self.social.p_stay_together),
            ("social.p_come_together", self.social.p_come_together),
            ("social.p_talk_start", self.social.p_talk_start),
            ("social.p_talk_stop", self.social.p_talk_stop),
            ("social.p_talk_apart", self.social.p_talk_apart),
            ("fault.nonworn_prob", self.faults.nonworn_prob),
            ("fault.corrupt_audio_prob", self.faults.corrupt_audio_prob),
            ("fault.missing_sensor_prob", self.faults.missing_sensor_prob),
        ] {
            range(what, v, 0.0, 1.0)?;
        }
        for (what, v) in [
            ("effect.alpha_hr", self.effects.alpha_hr),
            ("effect.beta_mv", self.effects.beta_mv),
            ("effect.gamma_f0", self.effects.gamma_f0),
            ("effect.gamma_en", self.effects.gamma_en),
            ("noise.hr_sd", self.noise.hr_sd),
            ("noise.base_bpm_sd", self.noise.base_bpm_sd),
            ("noise.motion_sd", self.noise.motion_sd),
            ("noise.audio_sd", self.noise.audio_sd),
            ("noise.report_sd", self.noise.report_sd),
            ("latent.baseline_spread", self.latent.baseline_spread),
            ("latent.step_sd", self.latent.step_sd),
            ("latent.spike_sd", self.latent.spike_sd),
        ] {
            range(what, v, 0.0, 1e4)?;
        }
        range("effect.gamma_f0", self.effects.gamma_f0, 0.0, 200.0)?;
        range("latent.valence_mean", self.latent.valence_mean, 0.0, 100.0)?;
        range("latent.va_correlation", self.latent.va_correlation, -1.0, 1.0)?;
        range("latent.arousal_mean", self.latent.arousal_mean, 0.0, 100.0)?;
        range("base_bpm", self.base_bpm, 30.0, 200.0)?;
        range("signal.audio_clip_s", self.signal.audio_clip_s, 1.0, 300.0)?;
        range("signal.sensor_window_s", self.signal.sensor_window_s, 2.0, 300.0)?;
        range("signal.hr_rate_hz", self.signal.hr_rate_hz, 0.1, 100.0)?;
        range("signal.motion_rate_hz", self.signal.motion_rate_hz, 1.0, 1000.0)?;
        range("signal.aux_rate_hz", self.signal.aux_rate_hz, 0.1, 100.0)?;
        range("signal.jitter", self.signal.jitter, 0.0, 0.45)?;
        for (lo, hi) in [self.social.near_m, self.social.far_m, self.social.turn_s] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::OutOfRange {
                    what: "social distance range",
                    value: lo,
                });
            }
        }
        self.default_schedule.validate()?;
        for s in self.schedules.values() {
            s.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let mut c = SimConfig::default();
        c.validate().unwrap();
        c.schedules.insert(
            3,
            Schedule {
                weekday_morning: HourRange::new(5, 7),
                weekday_evening: HourRange::new(18, 21),
                weekend: HourRange::new(8, 20),
            },
        );
        c.social.far_m = (12.5, 40.0);
        let back = SimConfig::from_kv(&KvConfig::parse(&c.to_kv_text()).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn schema_violations() {
        let e = SimConfig::from_kv(&KvConfig::parse("n_couples = 2\ndays = 1\n").unwrap()).unwrap_err();
        assert!(matches!(&e, Error::MissingKey(k) if k == "seed"));
        let e = SimConfig::from_kv(&KvConfig::parse("seed=1\nn_couples=2\ndays=1\nbogus = 3\n").unwrap()).unwrap_err();
        assert!(matches!(e, Error::Config { line: 4, .. }));
        let e = SimConfig::from_kv(&KvConfig::parse("seed=1\nn_couples=2\ndays=1\ncompliance = 1.5\n").unwrap())
            .unwrap_err();
        assert!(matches!(e, Error::Config { line: 4, .. }), "{e}");
        let e = SimConfig::from_kv(
            &KvConfig::parse("seed=1\nn_couples=2\ndays=1\npath_loss.exponent = 5\n").unwrap(),
        )
        .unwrap_err();
        assert!(matches!(e, Error::Config { line: 4, .. }));
        let e = SimConfig::from_kv(
            &KvConfig::parse("seed=1\nn_couples=2\ndays=1\nschedule.weekday_morning = 2-3\n").unwrap(),
        )
        .unwrap_err();
        assert!(e.is_usage());
    }
}
