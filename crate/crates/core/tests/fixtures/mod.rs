//! Hand-built selection fixture whose surviving samples reproduce the
//! published per-gender class counts.

use std::collections::BTreeMap;

use dyad_core::model::{
    session_id, AudioInfo, ContextCode, Gender, Schedule, SelfReport, SensorKind, SessionRecord, TriggerKind,
    ROMANTIC_PARTNER,
};
use dyad_core::preprocess::AudioFormat;
use dyad_core::sim::world::{couple_of, partners};

pub const COUPLES: u32 = 13;
pub const TOTAL_SESSIONS: usize = 1021;
pub const USABLE_SESSIONS: usize = 1014;
pub const SELECTED: usize = 380;

/// `[negative, positive]` valence and `[low, high]` arousal per gender.
pub const MALE_VALENCE: [usize; 2] = [8, 191];
pub const MALE_AROUSAL: [usize; 2] = [43, 156];
pub const FEMALE_VALENCE: [usize; 2] = [12, 169];
pub const FEMALE_AROUSAL: [usize; 2] = [54, 127];

pub struct Table1Fixture {
    pub sessions: Vec<SessionRecord>,
    pub reports: Vec<SelfReport>,
    pub codes: Vec<ContextCode>,
    pub schedules: BTreeMap<u32, Schedule>,
}

#[derive(Clone, Copy)]
enum Fate {
    /// Survives selection with these raw ratings.
    Sample(f64, f64),
    NotBothSpoke,
    Incomplete,
    NoReport,
    NoAudio,
    Corrupt,
    MissingGyro,
    OutsideHours,
}

const NEG_COUPLES: [u32; 8] = [3, 4, 6, 7, 8, 9, 10, 12];
const LOW_COUPLES: [u32; 11] = [1, 3, 4, 5, 6, 7, 8, 9, 10, 12, 13];

fn samples_of(couple: u32, gender: Gender) -> usize {
    match gender {
        Gender::Male if couple <= 4 => 16,
        Gender::Male => 15,
        Gender::Female if couple == 13 => 13,
        Gender::Female => 14,
    }
}

fn negatives_of(couple: u32, gender: Gender) -> usize {
    if !NEG_COUPLES.contains(&couple) {
        return 0;
    }
    match gender {
        Gender::Male => 1,
        Gender::Female if [3, 4, 6, 7].contains(&couple) => 2,
        Gender::Female => 1,
    }
}

fn lows_of(couple: u32, gender: Gender) -> usize {
    if !LOW_COUPLES.contains(&couple) {
        return 0;
    }
    let last = couple == *LOW_COUPLES.last().unwrap();
    match gender {
        Gender::Male => 4 - last as usize,
        Gender::Female => 5 - last as usize,
    }
}

/// Ratings alternate between the boundary value and a clear value so that a
/// rating of exactly 50 is exercised on the low side.
fn ratings(couple: u32, gender: Gender) -> Vec<Fate> {
    let (n, neg, low) = (samples_of(couple, gender), negatives_of(couple, gender), lows_of(couple, gender));
    (0..n)
        .map(|i| {
            let v = if i < neg { [50.0, 20.0][i % 2] } else { [51.0, 80.0][i % 2] };
            let a = if i < low { [50.0, 30.0][i % 2] } else { [51.0, 75.0][i % 2] };
            Fate::Sample(v, a)
        })
        .collect()
}

pub fn table1_fixture() -> Table1Fixture {
    let mut others = Vec::new();
    others.extend([Fate::NoAudio; 2]);
    others.extend([Fate::Corrupt; 2]);
    others.push(Fate::MissingGyro);
    others.extend([Fate::OutsideHours; 2]);
    others.extend([Fate::NotBothSpoke; 220]);
    others.extend([Fate::Incomplete; 12]);
    others.extend([Fate::NoReport; 402]);

    let refs: Vec<_> = (1..=COUPLES).flat_map(|c| partners(&couple_of(c))).collect();
    let mut plans: Vec<Vec<Fate>> = refs.iter().map(|p| ratings(p.couple_id, p.gender)).collect();
    for (i, f) in others.into_iter().enumerate() {
        plans[i % refs.len()].push(f);
    }

    let schedule = Schedule::default();
    let slots: Vec<_> = (0..7).flat_map(|d| schedule.slots(d)).collect();
    let format = AudioFormat::PCM16_MONO_44K;
    let mut fx = Table1Fixture {
        sessions: Vec::new(),
        reports: Vec::new(),
        codes: Vec::new(),
        schedules: (1..=COUPLES).map(|c| (c, schedule)).collect(),
    };
    for (p, plan) in refs.iter().zip(plans) {
        for (seq, fate) in plan.into_iter().enumerate() {
            let mut slot = slots[seq % slots.len()];
            if matches!(fate, Fate::OutsideHours) {
                slot.hour = 2;
            }
            let id = session_id(p, slot.day, slot.hour, seq as u32);
            let mut audio = Some(AudioInfo {
                path: format!("corpus/{id}/audio.wav"),
                byte_size: format.expected_bytes(300.0),
                duration_s: 300.0,
            });
            let mut sensors: BTreeMap<SensorKind, String> = SensorKind::ALL
                .into_iter()
                .map(|k| (k, format!("corpus/{id}/{}.csv", k.as_str())))
                .collect();
            match fate {
                Fate::NoAudio => audio = None,
                Fate::Corrupt => audio.as_mut().unwrap().byte_size /= 2,
                Fate::MissingGyro => {
                    sensors.remove(&SensorKind::Gyro);
                }
                _ => {}
            }
            fx.sessions.push(SessionRecord {
                session_id: id.clone(),
                partner: *p,
                slot,
                start_offset_s: 60.0,
                duration_s: 300.0,
                trigger_kind: TriggerKind::Interaction,
                peripheral_delay_s: 0.0,
                audio,
                sensors,
            });
            let (valence, arousal, completed) = match fate {
                Fate::Sample(v, a) => (Some(v), Some(a), true),
                Fate::NoReport => continue,
                Fate::Incomplete => (Some(70.0), None, false),
                _ => (Some(70.0), Some(70.0), true),
            };
            fx.reports.push(SelfReport {
                session_id: id.clone(),
                valence_raw: valence,
                arousal_raw: arousal,
                started_within_first_window: true,
                completed,
            });
            let both = !matches!(fate, Fate::NotBothSpoke);
            fx.codes.push(ContextCode {
                session_id: id,
                speech_present: true,
                male_spoke: true,
                female_spoke: both,
                conversation: both,
                partner_conversation: both,
                interaction_partner: ROMANTIC_PARTNER.into(),
                location: "home".into(),
                activity: "eating".into(),
                conversation_type: "casual".into(),
            });
        }
    }
    fx
}
