//! Signal synthesis for one recording: sensor series, speech audio, the
//! speaker annotation, per-partner transcripts and the context code.
//!
//! Emotion enters the signals only through the configured effect sizes, so a
//! corpus carries a known amount of signal per modality.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Effects, SimConfig};
use super::traces::{HourTrace, MinuteState};
use crate::model::{AxisSeries, ContextCode, Gender, Speaker, TimeSeries, ROMANTIC_PARTNER};
use crate::preprocess::AUDIO_RATE;
use crate::qa::{AnnotationSegment, AnnotationTrack, SegmentLabel, Transcript, CHUNK_SECONDS, INAUDIBLE};

pub const GRAVITY: f64 = 9.81;
/// Spoken tokens per second of a speaking turn.
pub const WORDS_PER_SECOND: f64 = 2.5;

pub const POSITIVE_WORDS: [&str; 12] = [
    "gut", "schoen", "super", "toll", "danke", "lieb", "freude", "prima", "klasse", "gerne", "lachen", "herrlich",
];
pub const NEGATIVE_WORDS: [&str; 12] = [
    "schlecht", "bloed", "nervig", "aerger", "traurig", "muede", "stress", "leider", "schlimm", "mist", "sorge",
    "streit",
];
pub const NEUTRAL_WORDS: [&str; 24] = [
    "und", "ich", "du", "wir", "das", "ist", "heute", "noch", "mal", "essen", "jetzt", "dann", "auch", "morgen",
    "haben", "schon", "kaffee", "einkaufen", "zucker", "arbeit", "abend", "wetter", "kinder", "termin",
];

/// A recording of one watch placed on its hour trace.
#[derive(Debug, Clone, Copy)]
pub struct RecordingContext<'a> {
    pub trace: &'a HourTrace,
    /// Partner index of the wearer (0 patient, 1 support partner).
    pub wearer: usize,
    /// Genders of partners 0 and 1.
    pub genders: [Gender; 2],
    /// Seconds from the start of the hour.
    pub start_offset_s: f64,
    pub duration_s: f64,
}

impl RecordingContext<'_> {
    /// Minute state at `t` seconds into the recording; a recording running
    /// past the hour keeps the last minute's state.
    pub fn minute_at(&self, t: f64) -> &MinuteState {
        let m = ((self.start_offset_s + t) / 60.0).floor().max(0.0) as usize;
        &self.trace.minutes[m.min(self.trace.minutes.len() - 1)]
    }

    pub fn speaker_of(&self, partner: usize) -> Speaker {
        self.genders[partner].speaker()
    }
}

/// Strictly increasing sample times `k / rate` shifted by uniform jitter of
/// up to ± `jitter / 2` sample periods.
pub fn jittered_times<R: Rng + ?Sized>(duration_s: f64, rate: f64, jitter: f64, rng: &mut R) -> Vec<f64> {
    let n = (duration_s * rate).floor() as usize;
    (0..n)
        .map(|k| {
            let j = if jitter > 0.0 { jitter * (rng.random::<f64>() - 0.5) } else { 0.0 };
            ((k as f64 + j) / rate).max(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSignals {
    pub hr: TimeSeries,
    pub accel: AxisSeries,
    pub gyro: AxisSeries,
    pub light: TimeSeries,
    /// On-wrist confidence, 0 (off) to 3.
    pub wear: TimeSeries,
}

fn gaussian(sd: f64) -> Option<Normal<f64>> {
    (sd > 0.0).then(|| Normal::new(0.0, sd).expect("positive sd"))
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: [f64; 3] = [n.sample(rng), n.sample(rng), n.sample(rng)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-6 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Heart rate rises by `alpha_hr` at arousal 100; accelerometer and gyroscope
/// noise grow by `beta_mv` at arousal 100 on top of activity-driven motion.
/// The accelerometer carries gravity in a random fixed orientation.
pub fn synth_sensors<R: Rng + ?Sized>(
    ctx: &RecordingContext,
    cfg: &SimConfig,
    base_bpm: f64,
    rng: &mut R,
) -> SensorSignals {
    let sig = &cfg.signal;
    let window = sig.sensor_window_s.min(ctx.duration_s);
    let arousal = |t: f64| ctx.minute_at(t).arousal[ctx.wearer];
    let activity = ctx.trace.activity[ctx.wearer];

    let hr_noise = gaussian(cfg.noise.hr_sd);
    let t_hr = jittered_times(window, sig.hr_rate_hz, sig.jitter, rng);
    let v_hr: Vec<f64> = t_hr
        .iter()
        .map(|&t| {
            let e = hr_noise.map_or(0.0, |n| n.sample(rng));
            base_bpm + cfg.effects.alpha_hr * arousal(t) / 100.0 + e
        })
        .collect();

    let up = random_unit(rng);
    let motion_sd = |t: f64| cfg.effects.beta_mv * arousal(t) / 100.0 + cfg.noise.motion_sd * activity;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let t_acc = jittered_times(window, sig.motion_rate_hz, sig.jitter, rng);
    let acc: Vec<[f64; 3]> = t_acc
        .iter()
        .map(|&t| {
            let sd = motion_sd(t);
            let mut v = [GRAVITY * up[0], GRAVITY * up[1], GRAVITY * up[2]];
            if sd > 0.0 {
                for x in &mut v {
                    *x += sd * unit.sample(rng);
                }
            }
            v
        })
        .collect();
    let t_gyr = jittered_times(window, sig.motion_rate_hz, sig.jitter, rng);
    let gyr: Vec<[f64; 3]> = t_gyr
        .iter()
        .map(|&t| {
            let sd = 0.5 * motion_sd(t);
            let mut v = [0.0; 3];
            if sd > 0.0 {
                for x in &mut v {
                    *x = sd * unit.sample(rng);
                }
            }
            v
        })
        .collect();

    let lux = rng.random_range(20.0..400.0);
    let t_aux = jittered_times(window, sig.aux_rate_hz, sig.jitter, rng);
    let light = t_aux.iter().map(|_| (lux * (1.0 + 0.05 * unit.sample(rng))).max(0.0)).collect();
    let wear = vec![3.0; t_aux.len()];
    SensorSignals {
        hr: TimeSeries { t: t_hr, v: v_hr },
        accel: AxisSeries { t: t_acc, xyz: acc },
        gyro: AxisSeries { t: t_gyr, xyz: gyr },
        light: TimeSeries {
            t: t_aux.clone(),
            v: light,
        },
        wear: TimeSeries {
            t: t_aux,
            v: wear,
        },
    }
}

/// One speaking turn; `who` is a partner index, `None` for another person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub who: Option<usize>,
    pub start: f64,
    pub end: f64,
}

/// A speaking turn on the hour timeline (seconds from the start of the hour),
/// with the watches that pick it up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourTurn {
    pub who: Option<usize>,
    pub audible: [bool; 2],
    pub start: f64,
    pub end: f64,
}

fn turn_len<R: Rng + ?Sized>(turn_s: (f64, f64), rng: &mut R) -> f64 {
    if turn_s.1 > turn_s.0 {
        rng.random_range(turn_s.0..turn_s.1)
    } else {
        turn_s.0
    }
}

/// Conversation timeline of an hour: alternating turns between the partners
/// in minutes they talk together, heard by both watches; and for each
/// partner talking with someone else while apart, turns alternating between
/// that partner and the other person, heard only by that partner's watch.
pub fn plan_hour_turns<R: Rng + ?Sized>(trace: &HourTrace, turn_s: (f64, f64), rng: &mut R) -> Vec<HourTurn> {
    let hour = trace.minutes.len() as f64 * 60.0;
    let minute = |t: f64| &trace.minutes[((t / 60.0) as usize).min(trace.minutes.len() - 1)];
    let mut turns = Vec::new();
    let mut lane = |active: &dyn Fn(&MinuteState) -> bool, speakers: [Option<usize>; 2], audible: [bool; 2], rng: &mut R| {
        let mut t = 0.0;
        let mut next = rng.random_range(0..2usize);
        while t < hour {
            if active(minute(t)) {
                let end = (t + turn_len(turn_s, rng)).min(hour);
                turns.push(HourTurn {
                    who: speakers[next],
                    audible,
                    start: t,
                    end,
                });
                next = 1 - next;
                t = end + rng.random_range(0.2..0.8);
            } else {
                t = ((t / 60.0).floor() + 1.0) * 60.0;
            }
        }
    };
    lane(&|m: &MinuteState| m.talking, [Some(0), Some(1)], [true, true], rng);
    lane(&|m: &MinuteState| m.talk_apart[0], [Some(0), None], [true, false], rng);
    lane(&|m: &MinuteState| m.talk_apart[1], [Some(1), None], [false, true], rng);
    turns.sort_by(|a, b| a.start.total_cmp(&b.start));
    turns
}

/// Turns heard by the recording's watch, clipped to the recording and
/// shifted to recording time.
pub fn turns_in_recording(hour_turns: &[HourTurn], ctx: &RecordingContext) -> Vec<Turn> {
    let (lo, hi) = (ctx.start_offset_s, ctx.start_offset_s + ctx.duration_s);
    hour_turns
        .iter()
        .filter(|t| t.audible[ctx.wearer] && t.start < hi && t.end > lo)
        .map(|t| Turn {
            who: t.who,
            start: t.start.max(lo) - lo,
            end: t.end.min(hi) - lo,
        })
        .filter(|t| t.end > t.start)
        .collect()
}

/// Times are rounded to the millisecond; the last segment is cut at the
/// last whole millisecond of the recording so it never ends past the audio.
pub fn annotation_of(ctx: &RecordingContext, turns: &[Turn]) -> AnnotationTrack {
    let last_ms = (ctx.duration_s * 1000.0).floor() / 1000.0;
    AnnotationTrack {
        segments: turns
            .iter()
            .map(|t| AnnotationSegment {
                start_s: round_ms(t.start),
                end_s: round_ms(t.end).min(last_ms),
                label: match t.who {
                    Some(p) => SegmentLabel::of_speaker(ctx.speaker_of(p)),
                    None => SegmentLabel::U,
                },
            })
            .filter(|s| s.end_s > s.start_s)
            .collect(),
    }
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Base fundamental frequency of a voice, Hz.
pub fn base_f0(gender: Gender) -> f64 {
    match gender {
        Gender::Male => 110.0,
        Gender::Female => 200.0,
    }
}

/// Voice audio of the first `clip_s` seconds at 44.1 kHz. A partner's F0
/// rises by `gamma_f0` and amplitude by the factor `1 + gamma_en` at arousal
/// 100; the wearer is recorded at full level, everyone else at half.
pub fn synth_audio<R: Rng + ?Sized>(
    ctx: &RecordingContext,
    turns: &[Turn],
    cfg: &SimConfig,
    clip_s: f64,
    rng: &mut R,
) -> Vec<f64> {
    let rate = AUDIO_RATE as f64;
    let n = (clip_s.min(ctx.duration_s) * rate).round() as usize;
    let mut out: Vec<f64> = match gaussian(cfg.noise.audio_sd) {
        Some(noise) => (0..n).map(|_| noise.sample(rng)).collect(),
        None => vec![0.0; n],
    };
    for turn in turns {
        let (i0, i1) = ((turn.start * rate) as usize, ((turn.end * rate) as usize).min(n));
        if i0 >= i1 {
            continue;
        }
        let (f0_base, arousal, level) = match turn.who {
            Some(p) => (
                base_f0(ctx.genders[p]),
                ctx.minute_at(turn.start).arousal[p],
                if p == ctx.wearer { 1.0 } else { 0.5 },
            ),
            None => (rng.random_range(120.0..220.0), 50.0, 0.5),
        };
        let f0 = (f0_base + cfg.effects.gamma_f0 * arousal / 100.0) * rng.random_range(0.95..1.05);
        let amp = 0.08 * level * (1.0 + cfg.effects.gamma_en * arousal / 100.0);
        let syllable_hz = rng.random_range(3.5..5.0);
        render_voice(&mut out[i0..i1], f0, amp, syllable_hz, rate);
    }
    out
}

/// Harmonic voice with a 10 % falling intonation over the turn and a
/// syllable-rate amplitude envelope.
fn render_voice(buf: &mut [f64], f0: f64, amp: f64, syllable_hz: f64, rate: f64) {
    const HARMONICS: usize = 6;
    let len = buf.len() as f64;
    let mut phase = 0.0f64;
    for (k, x) in buf.iter_mut().enumerate() {
        let frac = k as f64 / len;
        let f = f0 * (1.0 - 0.1 * frac);
        phase += 2.0 * PI * f / rate;
        let t = k as f64 / rate;
        let env = 0.6 - 0.4 * (2.0 * PI * syllable_hz * t).cos();
        // sin(h·φ) by the Chebyshev recurrence
        let (s1, c1) = phase.sin_cos();
        let (mut prev, mut cur) = (0.0, s1);
        let mut acc = 0.0;
        for h in 1..=HARMONICS {
            acc += cur / h as f64;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        *x += amp * env * acc;
    }
}

/// Probability that a sentiment word is positive at the given valence.
pub fn positive_probability(valence: f64, e: &Effects) -> f64 {
    e.lex_pos_min + (e.lex_pos_max - e.lex_pos_min) * valence.clamp(0.0, 100.0) / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
    Inaudible,
}

/// Draws one spoken token: inaudible with `xy_rate`, otherwise a sentiment
/// word with `sentiment_density` (positive with [`positive_probability`]),
/// otherwise a neutral word.
pub fn draw_token<R: Rng + ?Sized>(valence: f64, e: &Effects, xy_rate: f64, rng: &mut R) -> (&'static str, Polarity) {
    if rng.random::<f64>() < xy_rate {
        return (INAUDIBLE, Polarity::Inaudible);
    }
    if rng.random::<f64>() < e.sentiment_density {
        if rng.random::<f64>() < positive_probability(valence, e) {
            (POSITIVE_WORDS.choose(rng).expect("non-empty"), Polarity::Positive)
        } else {
            (NEGATIVE_WORDS.choose(rng).expect("non-empty"), Polarity::Negative)
        }
    } else {
        (NEUTRAL_WORDS.choose(rng).expect("non-empty"), Polarity::Neutral)
    }
}

/// Transcripts of both partners, in 15-second chunks over the recording.
/// Turns by other people are not transcribed.
pub fn transcripts<R: Rng + ?Sized>(ctx: &RecordingContext, turns: &[Turn], cfg: &SimConfig, rng: &mut R) -> [Transcript; 2] {
    let n_chunks = (ctx.duration_s / CHUNK_SECONDS).ceil() as usize;
    let mut chunks = [vec![Vec::<&str>::new(); n_chunks], vec![Vec::<&str>::new(); n_chunks]];
    for turn in turns {
        let Some(p) = turn.who else { continue };
        let count = ((turn.end - turn.start) * WORDS_PER_SECOND).round().max(1.0) as usize;
        let valence = ctx.minute_at(turn.start).valence[p];
        for k in 0..count {
            let t = turn.start + (turn.end - turn.start) * (k as f64 + 0.5) / count as f64;
            let i = ((t / CHUNK_SECONDS) as usize).min(n_chunks - 1);
            let (word, _) = draw_token(valence, &cfg.effects, cfg.noise.xy_rate, rng);
            chunks[p][i].push(word);
        }
    }
    let make = |p: usize, c: &Vec<Vec<&str>>| {
        let empty = c.iter().all(Vec::is_empty);
        Transcript {
            speaker: ctx.speaker_of(p),
            chunks: if empty { Vec::new() } else { c.iter().map(|w| w.join(" ")).collect() },
        }
    };
    [make(0, &chunks[0]), make(1, &chunks[1])]
}

/// Context code derived from who speaks in the recording.
pub fn context_code(session_id: &str, ctx: &RecordingContext, turns: &[Turn]) -> ContextCode {
    let spoke = |g: Gender| turns.iter().any(|t| t.who.is_some_and(|p| ctx.genders[p] == g));
    let other = turns.iter().any(|t| t.who.is_none());
    let (male, female) = (spoke(Gender::Male), spoke(Gender::Female));
    let voices = male as u8 + female as u8 + other as u8;
    let together = ctx.minute_at(0.0).together;
    ContextCode {
        session_id: session_id.to_string(),
        speech_present: voices > 0,
        male_spoke: male,
        female_spoke: female,
        conversation: voices >= 2,
        partner_conversation: male && female,
        interaction_partner: if male && female {
            ROMANTIC_PARTNER.to_string()
        } else if other {
            "other person".to_string()
        } else {
            "none".to_string()
        },
        location: if together { "home" } else { "away" }.to_string(),
        activity: "daily routine".to_string(),
        conversation_type: if voices >= 2 { "everyday talk" } else { "none" }.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HourSlot, WindowKind};
    use crate::qa::consistency_checks;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_trace(valence: f64, arousal: f64, talking: bool) -> HourTrace {
        HourTrace {
            slot: HourSlot {
                day: 0,
                hour: 7,
                window_kind: WindowKind::WeekdayMorning,
            },
            activity: [0.0, 0.0],
            minutes: vec![
                MinuteState {
                    together: true,
                    distance_m: 1.0,
                    talking,
                    talk_apart: [false; 2],
                    valence: [valence; 2],
                    arousal: [arousal; 2],
                };
                60
            ],
        }
    }

    fn ctx(trace: &HourTrace) -> RecordingContext<'_> {
        RecordingContext {
            trace,
            wearer: 0,
            genders: [Gender::Male, Gender::Female],
            start_offset_s: 600.0,
            duration_s: 300.0,
        }
    }

    fn quiet() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.noise.hr_sd = 0.0;
        cfg.noise.motion_sd = 0.0;
        cfg.signal.jitter = 0.0;
        cfg
    }

    #[test]
    fn heart_rate_shift_equals_alpha() {
        let cfg = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (hi, lo) = (flat_trace(50.0, 100.0, false), flat_trace(50.0, 0.0, false));
        let a = synth_sensors(&ctx(&hi), &cfg, 70.0, &mut rng);
        let b = synth_sensors(&ctx(&lo), &cfg, 70.0, &mut rng);
        let mean = |s: &TimeSeries| s.v.iter().sum::<f64>() / s.v.len() as f64;
        assert!((mean(&a.hr) - mean(&b.hr) - cfg.effects.alpha_hr).abs() < 1e-9);
    }

    #[test]
    fn rest_state_is_pure_gravity() {
        let cfg = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trace = flat_trace(50.0, 0.0, false);
        let s = synth_sensors(&ctx(&trace), &cfg, 70.0, &mut rng);
        for v in &s.accel.xyz {
            let m = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((m - GRAVITY).abs() < 1e-9);
        }
        assert!(s.gyro.xyz.iter().flatten().all(|x| *x == 0.0));
        assert!(s.hr.t.windows(2).all(|w| w[1] > w[0]));
    }

    /// P(X <= k) for X ~ Binomial(n, p), summed in log space.
    fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
        let ln_fact = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        (0..=k)
            .map(|i| (ln_fact(n) - ln_fact(i) - ln_fact(n - i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp())
            .sum()
    }

    #[test]
    fn lexicon_follows_valence() {
        let mut e = SimConfig::default().effects;
        e.lex_pos_max = 0.9;
        e.sentiment_density = 1.0;
        assert!((positive_probability(100.0, &e) - 0.9).abs() < 1e-12);
        // fewer than 800 positives in 1000 draws is practically impossible
        assert!(binom_cdf(799, 1000, 0.9) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pos = (0..1000)
            .filter(|_| draw_token(100.0, &e, 0.0, &mut rng).1 == Polarity::Positive)
            .count();
        assert!(pos >= 800, "{pos}");
    }

    #[test]
    fn conversation_artifacts_are_consistent() {
        let cfg = SimConfig::default();
        let trace = flat_trace(80.0, 60.0, true);
        let c = ctx(&trace);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hour_turns = plan_hour_turns(&trace, cfg.social.turn_s, &mut rng);
        assert!(hour_turns.iter().all(|t| t.audible == [true, true]));
        let turns = turns_in_recording(&hour_turns, &c);
        assert!(turns.iter().all(|t| t.end <= 300.0 && t.start < t.end));
        assert!(turns.windows(2).all(|w| w[0].end <= w[1].start));
        let ann = annotation_of(&c, &turns);
        let [tm, tf] = transcripts(&c, &turns, &cfg, &mut rng);
        tm.validate(300.0).unwrap();
        let code = context_code("s", &c, &turns);
        assert!(code.partner_conversation && code.interaction_partner == ROMANTIC_PARTNER);
        assert!(consistency_checks(&code, &ann, &tm, &tf).is_empty());
        let wave = synth_audio(&c, &turns, &cfg, 4.0, &mut rng);
        assert_eq!(wave.len(), 4 * AUDIO_RATE as usize);
        assert!(wave.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn synthetic_voice_pitch_tracks_arousal() {
        use crate::features::gemaps_lite;
        let mut cfg = SimConfig::default();
        cfg.noise.audio_sd = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean_f0 = |arousal: f64, rng: &mut ChaCha8Rng| {
            let trace = flat_trace(50.0, arousal, true);
            let c = ctx(&trace);
            let turns = vec![Turn {
                who: Some(0),
                start: 0.0,
                end: 3.0,
            }];
            let wave = synth_audio(&c, &turns, &cfg, 3.0, rng);
            gemaps_lite(&[&wave], AUDIO_RATE).unwrap().vector.values[0]
        };
        let lo = mean_f0(0.0, &mut rng);
        let hi = mean_f0(100.0, &mut rng);
        assert!(hi - lo > 0.5 * cfg.effects.gamma_f0, "{lo} {hi}");
    }
}
