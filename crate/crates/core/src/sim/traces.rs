//! Minute-level ground truth of a couple: latent emotion of both partners,
//! proximity and conversation state.
//!
//! Partner index 0 is the patient, whose watch acts as the central; index 1
//! is the support partner.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{LatentParams, SimConfig, SocialParams};
use crate::model::{HourSlot, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteState {
    pub together: bool,
    pub distance_m: f64,
    /// The partners talk with each other.
    pub talking: bool,
    /// Each partner talks with someone else.
    pub talk_apart: [bool; 2],
    pub valence: [f64; 2],
    pub arousal: [f64; 2],
}

impl MinuteState {
    /// Whether the wearer's watch hears speech.
    pub fn speech_near(&self, partner: usize) -> bool {
        self.talking || self.talk_apart[partner]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourTrace {
    pub slot: HourSlot,
    /// Physical activity of each partner during the hour, in [0, 1].
    pub activity: [f64; 2],
    pub minutes: Vec<MinuteState>,
}

/// Bounded random walk with reversion to a per-partner baseline and
/// occasional spikes. Values stay in [0, 100].
#[derive(Debug, Clone)]
pub struct LatentEmotionProcess {
    params: LatentParams,
    /// [partner][valence, arousal]
    baseline: [[f64; 2]; 2],
    current: [[f64; 2]; 2],
}

impl LatentEmotionProcess {
    pub fn new<R: Rng + ?Sized>(params: LatentParams, rng: &mut R) -> Self {
        let mut baseline = [[0.0; 2]; 2];
        let s = params.baseline_spread;
        for b in &mut baseline {
            let offsets = if s > 0.0 {
                let u = [rng.random_range(-s..=s), rng.random_range(-s..=s)];
                correlate(u, params.va_correlation)
            } else {
                [0.0; 2]
            };
            for (d, mean) in [params.valence_mean, params.arousal_mean].into_iter().enumerate() {
                b[d] = (mean + offsets[d]).clamp(0.0, 100.0);
            }
        }
        LatentEmotionProcess {
            params,
            baseline,
            current: baseline,
        }
    }

    pub fn baseline(&self) -> [[f64; 2]; 2] {
        self.baseline
    }

    /// Advances one minute and returns `[partner][valence, arousal]`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [[f64; 2]; 2] {
        let p = &self.params;
        let step = Normal::new(0.0, p.step_sd.max(1e-12)).expect("positive sd");
        let spike = Normal::new(0.0, p.spike_sd.max(1e-12)).expect("positive sd");
        for i in 0..2 {
            let steps = if p.step_sd > 0.0 {
                correlate([step.sample(rng), step.sample(rng)], p.va_correlation)
            } else {
                [0.0; 2]
            };
            for d in 0..2 {
                let x = self.current[i][d];
                let mut next = x + p.reversion * (self.baseline[i][d] - x) + steps[d];
                if p.spike_sd > 0.0 && rng.random::<f64>() < p.spike_prob {
                    next += spike.sample(rng);
                }
                self.current[i][d] = next.clamp(0.0, 100.0);
            }
        }
        self.current
    }
}

/// Mixes two independent draws of equal spread so the second has
/// correlation `rho` with the first and keeps its spread.
fn correlate(u: [f64; 2], rho: f64) -> [f64; 2] {
    [u[0], rho * u[0] + (1.0 - rho * rho).sqrt() * u[1]]
}

/// Proximity and conversation Markov chain, one step per minute.
#[derive(Debug, Clone)]
pub struct SocialProcess {
    params: SocialParams,
    together: bool,
    talking: bool,
}

impl SocialProcess {
    pub fn new<R: Rng + ?Sized>(params: SocialParams, rng: &mut R) -> Self {
        let stay = params.p_stay_together;
        let come = params.p_come_together;
        // start from the stationary share of time spent together
        let share = if stay < 1.0 || come > 0.0 { come / (come + 1.0 - stay) } else { 1.0 };
        SocialProcess {
            params,
            together: rng.random::<f64>() < share,
            talking: false,
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (bool, f64, bool, [bool; 2]) {
        let p = &self.params;
        let u: f64 = rng.random();
        self.together = if self.together { u < p.p_stay_together } else { u < p.p_come_together };
        let v: f64 = rng.random();
        self.talking = self.together && if self.talking { v >= p.p_talk_stop } else { v < p.p_talk_start };
        let (lo, hi) = if self.together { p.near_m } else { p.far_m };
        let distance = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let mut apart = [false; 2];
        for a in &mut apart {
            *a = !self.together && rng.random::<f64>() < p.p_talk_apart;
        }
        (self.together, distance, self.talking, apart)
    }
}

/// Minute traces for every in-window hour of a couple, in time order. The
/// latent and social processes advance only through collection hours.
pub fn couple_traces<R: Rng + ?Sized>(cfg: &SimConfig, schedule: &Schedule, rng: &mut R) -> Vec<HourTrace> {
    let mut latent = LatentEmotionProcess::new(cfg.latent, rng);
    let mut social = SocialProcess::new(cfg.social, rng);
    let mut out = Vec::new();
    for day in 0..cfg.days {
        for slot in schedule.slots(day) {
            let activity = [rng.random::<f64>(), rng.random::<f64>()];
            let minutes = (0..60)
                .map(|_| {
                    let (together, distance_m, talking, talk_apart) = social.step(rng);
                    let l = latent.step(rng);
                    MinuteState {
                        together,
                        distance_m,
                        talking,
                        talk_apart,
                        valence: [l[0][0], l[1][0]],
                        arousal: [l[0][1], l[1][1]],
                    }
                })
                .collect();
            out.push(HourTrace { slot, activity, minutes });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn latent_stays_bounded_and_is_deterministic() {
        let mut p = SimConfig::default().latent;
        p.spike_prob = 0.5;
        p.spike_sd = 80.0;
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut l = LatentEmotionProcess::new(p, &mut rng);
            (0..5000).map(|_| l.step(&mut rng)).collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        assert!(a.iter().flatten().flatten().all(|x| (0.0..=100.0).contains(x)));
        assert!(a.iter().any(|m| m[0][0] == 0.0 || m[0][0] == 100.0));
    }

    #[test]
    fn correlation_couples_the_steps() {
        let mut p = SimConfig::default().latent;
        p.spike_prob = 0.0;
        p.reversion = 0.0;
        p.baseline_spread = 0.0;
        p.va_correlation = 0.7;
        p.valence_mean = 50.0;
        p.arousal_mean = 50.0;
        p.step_sd = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut l = LatentEmotionProcess::new(p, &mut rng);
        let mut prev = l.step(&mut rng);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..20_000 {
            let next = l.step(&mut rng);
            let dv = next[0][0] - prev[0][0];
            let da = next[0][1] - prev[0][1];
            sxy += dv * da;
            sxx += dv * dv;
            syy += da * da;
            prev = next;
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!((r - 0.7).abs() < 0.03, "{r}");
    }

    #[test]
    fn traces_cover_schedule() {
        let mut cfg = SimConfig::default();
        cfg.days = 7;
        let sched = Schedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = couple_traces(&cfg, &sched, &mut rng);
        let expected: usize = (0..7).map(|d| sched.slots(d).len()).sum();
        assert_eq!(t.len(), expected);
        for h in &t {
            assert_eq!(h.minutes.len(), 60);
            for m in &h.minutes {
                let (lo, hi) = if m.together { cfg.social.near_m } else { cfg.social.far_m };
                assert!(m.distance_m >= lo && m.distance_m <= hi);
                assert!(!m.talking || m.together);
            }
        }
    }
}
