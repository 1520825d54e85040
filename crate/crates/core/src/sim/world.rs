//! Protocol simulation of whole couples, the event log and its replay, and
//! generation of the on-disk corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::hash::Hasher;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::fsm::{apply_retention, step_trigger_fsm, Action, DeleteReason, FsmEvent, FsmState, HourRecording,
    TriggerState, WatchRole, REPORT_WINDOW_S};
use super::radio::{sample_rssi, synth_vad_snippet, EnergyVad};
use super::synth::{
    annotation_of, context_code, plan_hour_turns, synth_audio, synth_sensors, transcripts, turns_in_recording,
    HourTurn, RecordingContext,
};
use super::traces::{couple_traces, HourTrace};
use crate::corpus::{self, session_dir, sensor_file, transcript_file};
use crate::error::{Error, Result};
use crate::model::{
    session_id, AudioInfo, Couple, Gender, HourSlot, PartnerRef, Role, Schedule, SelfReport, SensorKind,
    SessionRecord, TriggerKind, SESSION_SECONDS,
};
use crate::preprocess::AUDIO_RATE;

/// Background level of the snippet the voice-activity detector hears.
pub const VAD_BACKGROUND_SD: f64 = 0.002;
pub const MAX_PERIPHERAL_DELAY_S: f64 = 10.0;
/// A compliant wearer opens the report within this many seconds of the prompt.
pub const REPORT_START_MAX_S: f64 = 2.0 * REPORT_WINDOW_S;
/// Time a wearer needs to fill in a report, seconds.
pub const REPORT_FILL_S: (f64, f64) = (20.0, 60.0);
/// Clock hour of the end-of-day questionnaire prompt.
pub const DAILY_SURVEY_HOUR: u8 = 22;

const DAY_S: f64 = 86_400.0;
const HOUR_S: f64 = 3_600.0;

/// Deterministic generator for a named sub-stream of a run.
pub fn sub_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut h = FnvHasher::default();
    h.write(tag.as_bytes());
    ChaCha8Rng::seed_from_u64(seed ^ h.finish())
}

/// Odd couple ids have a male patient, even ids a female one.
pub fn couple_of(id: u32) -> Couple {
    Couple {
        id,
        patient_gender: if id % 2 == 1 { Gender::Male } else { Gender::Female },
    }
}

/// Partner index 0 is the patient (central watch), 1 the support partner.
pub fn partners(c: &Couple) -> [PartnerRef; 2] {
    [c.patient(), c.support_partner()]
}

fn watch_index(role: Role) -> usize {
    match role {
        Role::Patient => 0,
        Role::SupportPartner => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Scan {
        rssi_dbm: f64,
        passed: bool,
    },
    VadPositive,
    VadNegative,
    BackupStart {
        session_id: String,
    },
    RecordStart {
        session_id: String,
        side: WatchRole,
        kind: TriggerKind,
        gender: Gender,
        day: u32,
        hour: u8,
        start_offset_s: f64,
        duration_s: f64,
        peripheral_delay_s: f64,
    },
    RecordEnd {
        session_id: String,
    },
    ReportPrompt {
        session_id: String,
    },
    Vibrate2 {
        session_id: String,
    },
    ReportStarted {
        session_id: String,
    },
    ReportCompleted {
        session_id: String,
        valence: f64,
        arousal: f64,
        started_within_first_window: bool,
    },
    ReportDismissed {
        session_id: String,
    },
    AudioDeleted {
        session_id: String,
        reason: DeleteReason,
    },
    AudioRetained {
        session_id: String,
    },
    ProtocolError {
        state: FsmState,
        detail: String,
    },
    DailySurvey {
        day: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Seconds since the start of study day 0.
    pub t: f64,
    pub couple: u32,
    pub watch: Role,
    /// Per-couple append counter.
    pub seq: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

/// Append-only log of one couple.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn push(&mut self, t: f64, couple: u32, watch: Role, event: LogEvent) {
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry {
            t,
            couple,
            watch,
            seq,
            event,
        });
    }
}

/// Orders merged logs by time, then couple, watch and append order.
pub fn sort_log(entries: &mut [LogEntry]) {
    entries.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.couple.cmp(&b.couple))
            .then(a.watch.cmp(&b.watch))
            .then(a.seq.cmp(&b.seq))
    });
}

pub fn write_log(path: &Path, entries: &[LogEntry]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let r = std::io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// One recording as produced by the protocol, before signal synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSession {
    pub session_id: String,
    pub partner: PartnerRef,
    pub slot: HourSlot,
    pub side: WatchRole,
    pub start_offset_s: f64,
    pub duration_s: f64,
    pub trigger_kind: TriggerKind,
    pub peripheral_delay_s: f64,
    pub audio_retained: bool,
}

impl SimSession {
    pub fn start_clock(&self) -> f64 {
        self.slot.day as f64 * DAY_S + self.slot.hour as f64 * HOUR_S + self.start_offset_s
    }
}

/// Sessions and completed reports, sorted by session id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolState {
    pub sessions: Vec<SimSession>,
    pub reports: Vec<SelfReport>,
}

impl ProtocolState {
    fn normalize(mut self) -> Self {
        self.sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        self.reports.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        self
    }
}

/// Time-ordered agenda of pending FSM events.
#[derive(Default)]
struct Agenda {
    items: BTreeMap<(u64, u64), (usize, FsmEvent)>,
    order: u64,
}

impl Agenda {
    fn push(&mut self, t: f64, watch: usize, ev: FsmEvent) {
        debug_assert!(t >= 0.0);
        self.items.insert((t.to_bits(), self.order), (watch, ev));
        self.order += 1;
    }

    fn pop(&mut self) -> Option<(f64, usize, FsmEvent)> {
        self.items.pop_first().map(|((t, _), (w, ev))| (f64::from_bits(t), w, ev))
    }
}

struct PendingReport {
    prompt_t: f64,
    started_t: Option<f64>,
    latent: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HourOutcome {
    pub sessions: Vec<SimSession>,
    pub reports: Vec<SelfReport>,
}

/// Drives both watches' state machines through one collection hour of a
/// couple. Events caused by the hour's recordings (report flow, retention)
/// are resolved before returning, even when they fall after the hour ends.
pub fn run_hour<R: Rng + ?Sized>(
    cfg: &SimConfig,
    couple: &Couple,
    trace: &HourTrace,
    states: &mut [TriggerState; 2],
    rng: &mut R,
    log: &mut EventLog,
) -> HourOutcome {
    let slot = trace.slot;
    let t0 = slot.day as f64 * DAY_S + slot.hour as f64 * HOUR_S;
    let refs = partners(couple);
    let vad = EnergyVad::new(cfg.vad);
    let minute_of = |t: f64| &trace.minutes[(((t - t0) / 60.0).floor().max(0.0) as usize).min(59)];

    let mut agenda = Agenda::default();
    for w in 0..2 {
        agenda.push(t0, w, FsmEvent::NewHour);
    }
    for m in 0..60u32 {
        for w in 0..2 {
            agenda.push(t0 + 60.0 * m as f64, w, FsmEvent::Tick { minute: m });
        }
    }

    let mut out = HourOutcome::default();
    let mut next_seq = [0u32; 2];
    let mut pending: HashMap<String, PendingReport> = HashMap::new();
    let mut completed: BTreeSet<String> = BTreeSet::new();
    let mut deleted: BTreeSet<String> = BTreeSet::new();
    let mut last_t = t0;
    let mut new_id = |w: usize| {
        let id = session_id(&refs[w], slot.day, slot.hour, next_seq[w]);
        next_seq[w] += 1;
        id
    };

    while let Some((t, w, ev)) = agenda.pop() {
        last_t = last_t.max(t);
        let role = refs[w].role;
        let started_id = match (&ev, &states[w].pending_report) {
            (FsmEvent::ReportStarted, Some((id, _, _))) => Some(id.clone()),
            _ => None,
        };
        let (next, actions) = match step_trigger_fsm(&states[w], &ev, t) {
            Ok(r) => r,
            Err(e) => {
                log.push(
                    t,
                    couple.id,
                    role,
                    LogEvent::ProtocolError {
                        state: e.state,
                        detail: e.event,
                    },
                );
                continue;
            }
        };
        states[w] = next;
        if let Some(id) = started_id {
            if let Some(p) = pending.get_mut(&id) {
                p.started_t = Some(t);
            }
            log.push(t, couple.id, role, LogEvent::ReportStarted { session_id: id });
        }
        for action in actions {
            match action {
                Action::StartScan => {
                    let m = minute_of(t);
                    let rssi = sample_rssi(m.distance_m, &cfg.path_loss, rng).expect("distances are positive");
                    let passed = rssi >= cfg.rssi_threshold_dbm;
                    log.push(t, couple.id, role, LogEvent::Scan { rssi_dbm: rssi, passed });
                    agenda.push(
                        t,
                        w,
                        FsmEvent::Scan {
                            rssi_dbm: rssi,
                            threshold_dbm: cfg.rssi_threshold_dbm,
                        },
                    );
                }
                Action::RunVad => {
                    let snippet = synth_vad_snippet(&cfg.vad, minute_of(t).speech_near(w), VAD_BACKGROUND_SD, rng);
                    let speech = vad.detect(&snippet).speech;
                    let ev = if speech {
                        log.push(t, couple.id, role, LogEvent::VadPositive);
                        FsmEvent::Vad {
                            speech,
                            session_id: new_id(w),
                            peripheral_delay: rng.random_range(0.0..=MAX_PERIPHERAL_DELAY_S),
                        }
                    } else {
                        log.push(t, couple.id, role, LogEvent::VadNegative);
                        FsmEvent::Vad {
                            speech,
                            session_id: String::new(),
                            peripheral_delay: 0.0,
                        }
                    };
                    agenda.push(t, w, ev);
                }
                Action::ArmBackup => {
                    let id = new_id(w);
                    agenda.push(t, w, FsmEvent::Backup { session_id: id });
                }
                Action::ConnectPeripheral => {}
                Action::StartBoth {
                    session_id,
                    kind,
                    peripheral_delay,
                } => {
                    let s = SimSession {
                        session_id: session_id.clone(),
                        partner: refs[w],
                        slot,
                        side: WatchRole::Central,
                        start_offset_s: t - t0,
                        duration_s: SESSION_SECONDS,
                        trigger_kind: kind,
                        peripheral_delay_s: peripheral_delay,
                        audio_retained: false,
                    };
                    log.push(t, couple.id, role, record_start(&s));
                    agenda.push(t + SESSION_SECONDS, w, FsmEvent::RecordingDone);
                    out.sessions.push(s);
                    let peer = 1 - w;
                    let peer_id = new_id(peer);
                    agenda.push(
                        t + peripheral_delay,
                        peer,
                        FsmEvent::PeerStart {
                            session_id: peer_id,
                            kind,
                            delay: peripheral_delay,
                        },
                    );
                }
                Action::StartRecording { session_id, kind, delay } => {
                    let rec = states[w].recording.as_ref().expect("recording just started");
                    let s = SimSession {
                        session_id: session_id.clone(),
                        partner: refs[w],
                        slot,
                        side: rec.role,
                        start_offset_s: t - t0,
                        duration_s: rec.duration,
                        trigger_kind: kind,
                        peripheral_delay_s: delay,
                        audio_retained: false,
                    };
                    if kind == TriggerKind::Backup {
                        log.push(t, couple.id, role, LogEvent::BackupStart { session_id });
                    }
                    log.push(t, couple.id, role, record_start(&s));
                    agenda.push(t + s.duration_s, w, FsmEvent::RecordingDone);
                    out.sessions.push(s);
                }
                Action::EndRecording { session_id } => {
                    log.push(t, couple.id, role, LogEvent::RecordEnd { session_id });
                    states[1 - w].peer_last_end = Some(t);
                }
                Action::PromptReport { session_id } => {
                    log.push(t, couple.id, role, LogEvent::ReportPrompt { session_id: session_id.clone() });
                    // the wearer rates the state at the end of the recording
                    let m = minute_of(t - 1e-6);
                    pending.insert(
                        session_id,
                        PendingReport {
                            prompt_t: t,
                            started_t: None,
                            latent: (m.valence[w], m.arousal[w]),
                        },
                    );
                    agenda.push(t + REPORT_WINDOW_S, w, FsmEvent::Timeout);
                    agenda.push(t + 2.0 * REPORT_WINDOW_S, w, FsmEvent::Timeout);
                    if rng.random::<f64>() < cfg.compliance {
                        let start = t + rng.random_range(0.0..REPORT_START_MAX_S);
                        let done = start + rng.random_range(REPORT_FILL_S.0..=REPORT_FILL_S.1);
                        agenda.push(start, w, FsmEvent::ReportStarted);
                        agenda.push(done, w, FsmEvent::ReportCompleted);
                    }
                }
                Action::Vibrate2 { session_id } => {
                    log.push(t, couple.id, role, LogEvent::Vibrate2 { session_id });
                }
                Action::DismissReport { session_id } => {
                    log.push(t, couple.id, role, LogEvent::ReportDismissed { session_id });
                }
                Action::DeleteAudio { session_id } => {
                    deleted.insert(session_id.clone());
                    log.push(
                        t,
                        couple.id,
                        role,
                        LogEvent::AudioDeleted {
                            session_id,
                            reason: DeleteReason::NoReport,
                        },
                    );
                }
                Action::CompleteReport { session_id } => {
                    let p = pending.get(&session_id).expect("prompted before completion");
                    let report = slider_report(&session_id, p, cfg.noise.report_sd, rng);
                    log.push(
                        t,
                        couple.id,
                        role,
                        LogEvent::ReportCompleted {
                            session_id: session_id.clone(),
                            valence: report.valence_raw.expect("completed"),
                            arousal: report.arousal_raw.expect("completed"),
                            started_within_first_window: report.started_within_first_window,
                        },
                    );
                    completed.insert(session_id);
                    out.reports.push(report);
                }
            }
        }
    }

    let t_ret = last_t.max(t0 + HOUR_S);
    for w in 0..2 {
        let hour: Vec<HourRecording> = out
            .sessions
            .iter()
            .filter(|s| s.partner == refs[w])
            .map(|s| HourRecording {
                session_id: s.session_id.clone(),
                kind: s.trigger_kind,
                start: s.start_offset_s,
                report_completed: completed.contains(&s.session_id),
            })
            .collect();
        let r = apply_retention(&hour);
        for (id, reason) in r.deleted {
            if deleted.insert(id.clone()) {
                log.push(t_ret, couple.id, refs[w].role, LogEvent::AudioDeleted { session_id: id, reason });
            }
        }
        if let Some(id) = r.retained {
            log.push(t_ret, couple.id, refs[w].role, LogEvent::AudioRetained { session_id: id.clone() });
            if let Some(s) = out.sessions.iter_mut().find(|s| s.session_id == id) {
                s.audio_retained = true;
            }
        }
    }
    out
}

fn record_start(s: &SimSession) -> LogEvent {
    LogEvent::RecordStart {
        session_id: s.session_id.clone(),
        side: s.side,
        kind: s.trigger_kind,
        gender: s.partner.gender,
        day: s.slot.day,
        hour: s.slot.hour,
        start_offset_s: s.start_offset_s,
        duration_s: s.duration_s,
        peripheral_delay_s: s.peripheral_delay_s,
    }
}

/// Slider values: the latent state plus rating noise, clamped to [0, 100]
/// and rounded to whole points.
fn slider_report<R: Rng + ?Sized>(id: &str, p: &PendingReport, sd: f64, rng: &mut R) -> SelfReport {
    let mut rate = |x: f64| {
        let e = if sd > 0.0 {
            Normal::new(0.0, sd).expect("positive sd").sample(rng)
        } else {
            0.0
        };
        (x + e).clamp(0.0, 100.0).round()
    };
    SelfReport {
        session_id: id.to_string(),
        valence_raw: Some(rate(p.latent.0)),
        arousal_raw: Some(rate(p.latent.1)),
        started_within_first_window: p.started_t.is_some_and(|s| s < p.prompt_t + REPORT_WINDOW_S),
        completed: true,
    }
}

/// Everything the protocol produced for one couple.
#[derive(Debug, Clone)]
pub struct CoupleRun {
    pub couple: Couple,
    pub schedule: Schedule,
    pub traces: Vec<HourTrace>,
    pub base_bpm: [f64; 2],
    pub sessions: Vec<SimSession>,
    pub reports: Vec<SelfReport>,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub couples: Vec<CoupleRun>,
    /// Merged log of all couples, sorted with [`sort_log`].
    pub log: Vec<LogEntry>,
}

impl ProtocolRun {
    pub fn state(&self) -> ProtocolState {
        ProtocolState {
            sessions: self.couples.iter().flat_map(|c| c.sessions.iter().cloned()).collect(),
            reports: self.couples.iter().flat_map(|c| c.reports.iter().cloned()).collect(),
        }
        .normalize()
    }

    pub fn protocol_errors(&self) -> usize {
        self.log
            .iter()
            .filter(|e| matches!(e.event, LogEvent::ProtocolError { .. }))
            .count()
    }
}

pub fn simulate_couple(cfg: &SimConfig, couple_id: u32) -> CoupleRun {
    let couple = couple_of(couple_id);
    let schedule = cfg.schedule_of(couple_id);
    let mut rng = sub_rng(cfg.seed, &format!("couple/{couple_id}"));
    let traces = couple_traces(cfg, &schedule, &mut rng);
    let spread = Normal::new(0.0, cfg.noise.base_bpm_sd.max(1e-12)).expect("positive sd");
    let mut base_bpm = [cfg.base_bpm; 2];
    if cfg.noise.base_bpm_sd > 0.0 {
        for b in &mut base_bpm {
            *b += spread.sample(&mut rng);
        }
    }
    let refs = partners(&couple);
    let mut states = [TriggerState::new(true), TriggerState::new(false)];
    let mut log = EventLog::default();
    let mut sessions = Vec::new();
    let mut reports = Vec::new();
    for (i, trace) in traces.iter().enumerate() {
        let out = run_hour(cfg, &couple, trace, &mut states, &mut rng, &mut log);
        sessions.extend(out.sessions);
        reports.extend(out.reports);
        let day = trace.slot.day;
        let last_of_day = traces.get(i + 1).is_none_or(|n| n.slot.day != day);
        if last_of_day {
            let t = day as f64 * DAY_S + DAILY_SURVEY_HOUR as f64 * HOUR_S;
            for r in refs {
                log.push(t, couple.id, r.role, LogEvent::DailySurvey { day });
            }
        }
    }
    CoupleRun {
        couple,
        schedule,
        traces,
        base_bpm,
        sessions,
        reports,
        log: log.entries,
    }
}

/// Runs the protocol for every couple (in parallel, one generator each) and
/// merges the logs.
pub fn simulate_protocol(cfg: &SimConfig) -> Result<ProtocolRun> {
    cfg.validate()?;
    let couples: Vec<CoupleRun> = (1..=cfg.n_couples)
        .into_par_iter()
        .map(|id| simulate_couple(cfg, id))
        .collect();
    let mut log: Vec<LogEntry> = couples.iter().flat_map(|c| c.log.iter().cloned()).collect();
    sort_log(&mut log);
    Ok(ProtocolRun { couples, log })
}

/// Rebuilds sessions, retained audio and completed reports from a sorted log.
pub fn replay(entries: &[LogEntry]) -> Result<ProtocolState> {
    let mut sessions: BTreeMap<String, SimSession> = BTreeMap::new();
    let mut reports = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for e in entries {
        if e.t < prev {
            return Err(Error::invalid(format!("log time goes backwards at {} (seq {})", e.t, e.seq)));
        }
        prev = e.t;
        let lookup = |sessions: &mut BTreeMap<String, SimSession>, id: &str| {
            sessions.get_mut(id).map(|_| ()).ok_or_else(|| Error::Reference(format!("session {id} in event log")))
        };
        match &e.event {
            LogEvent::RecordStart {
                session_id,
                side,
                kind,
                gender,
                day,
                hour,
                start_offset_s,
                duration_s,
                peripheral_delay_s,
            } => {
                let s = SimSession {
                    session_id: session_id.clone(),
                    partner: PartnerRef {
                        couple_id: e.couple,
                        role: e.watch,
                        gender: *gender,
                    },
                    slot: HourSlot {
                        day: *day,
                        hour: *hour,
                        window_kind: corpus::nominal_window(*day, *hour),
                    },
                    side: *side,
                    start_offset_s: *start_offset_s,
                    duration_s: *duration_s,
                    trigger_kind: *kind,
                    peripheral_delay_s: *peripheral_delay_s,
                    audio_retained: false,
                };
                if sessions.insert(session_id.clone(), s).is_some() {
                    return Err(Error::Duplicate(format!("session {session_id} started twice")));
                }
            }
            LogEvent::AudioRetained { session_id } => {
                lookup(&mut sessions, session_id)?;
                sessions.get_mut(session_id).expect("checked").audio_retained = true;
            }
            LogEvent::AudioDeleted { session_id, .. } => {
                lookup(&mut sessions, session_id)?;
                sessions.get_mut(session_id).expect("checked").audio_retained = false;
            }
            LogEvent::ReportCompleted {
                session_id,
                valence,
                arousal,
                started_within_first_window,
            } => {
                lookup(&mut sessions, session_id)?;
                reports.push(SelfReport {
                    session_id: session_id.clone(),
                    valence_raw: Some(*valence),
                    arousal_raw: Some(*arousal),
                    started_within_first_window: *started_within_first_window,
                    completed: true,
                });
            }
            _ => {}
        }
    }
    Ok(ProtocolState {
        sessions: sessions.into_values().collect(),
        reports,
    }
    .normalize())
}

/// What [`generate_world`] wrote.
#[derive(Debug, Clone)]
pub struct World {
    pub run: ProtocolRun,
    pub sessions: Vec<SessionRecord>,
    pub schedules: BTreeMap<u32, Schedule>,
    pub codes: usize,
}

struct SessionFiles {
    record: SessionRecord,
    code: Option<crate::model::ContextCode>,
}

fn synth_session(
    root: &Path,
    cfg: &SimConfig,
    run: &CoupleRun,
    trace: &HourTrace,
    hour_turns: &[HourTurn],
    s: &SimSession,
) -> Result<SessionFiles> {
    let dir_rel = session_dir(&s.session_id);
    fs::create_dir_all(root.join(&dir_rel))?;
    let w = watch_index(s.partner.role);
    let refs = partners(&run.couple);
    let ctx = RecordingContext {
        trace,
        wearer: w,
        genders: [refs[0].gender, refs[1].gender],
        start_offset_s: s.start_offset_s,
        duration_s: s.duration_s,
    };
    let mut rng = sub_rng(cfg.seed, &format!("session/{}", s.session_id));
    let mut sig = synth_sensors(&ctx, cfg, run.base_bpm[w], &mut rng);
    if rng.random::<f64>() < cfg.faults.nonworn_prob {
        sig.wear.v.iter_mut().for_each(|v| *v = 0.0);
    }
    let missing = (rng.random::<f64>() < cfg.faults.missing_sensor_prob)
        .then(|| SensorKind::ALL[rng.random_range(0..SensorKind::ALL.len())]);
    let mut sensors = BTreeMap::new();
    for kind in SensorKind::ALL {
        if Some(kind) == missing {
            continue;
        }
        let rel = format!("{dir_rel}/{}", sensor_file(kind));
        let path = root.join(&rel);
        match kind {
            SensorKind::Hr => corpus::write_scalar_series(&path, corpus::scalar_column(kind), &sig.hr)?,
            SensorKind::Light => corpus::write_scalar_series(&path, corpus::scalar_column(kind), &sig.light)?,
            SensorKind::Wear => corpus::write_scalar_series(&path, corpus::scalar_column(kind), &sig.wear)?,
            SensorKind::Accel => corpus::write_axis_series(&path, &sig.accel)?,
            SensorKind::Gyro => corpus::write_axis_series(&path, &sig.gyro)?,
        }
        sensors.insert(kind, rel);
    }

    let mut audio = None;
    let mut code = None;
    if s.audio_retained {
        let turns = turns_in_recording(hour_turns, &ctx);
        let wave = synth_audio(&ctx, &turns, cfg, cfg.signal.audio_clip_s, &mut rng);
        let rel = format!("{dir_rel}/audio.wav");
        let path = root.join(&rel);
        corpus::write_wav(&path, &wave)?;
        if rng.random::<f64>() < cfg.faults.corrupt_audio_prob {
            let len = fs::metadata(&path)?.len();
            fs::OpenOptions::new().write(true).open(&path)?.set_len(len / 2)?;
        }
        audio = Some(AudioInfo {
            path: rel,
            byte_size: fs::metadata(&path)?.len(),
            duration_s: wave.len() as f64 / AUDIO_RATE as f64,
        });
        fs::write(root.join(&dir_rel).join(corpus::ANNOTATION_FILE), annotation_of(&ctx, &turns).serialize())?;
        for t in transcripts(&ctx, &turns, cfg, &mut rng) {
            fs::write(root.join(&dir_rel).join(transcript_file(t.speaker)), t.serialize())?;
        }
        code = Some(context_code(&s.session_id, &ctx, &turns));
    }
    Ok(SessionFiles {
        record: SessionRecord {
            session_id: s.session_id.clone(),
            partner: s.partner,
            slot: s.slot,
            start_offset_s: s.start_offset_s,
            duration_s: s.duration_s,
            trigger_kind: s.trigger_kind,
            peripheral_delay_s: s.peripheral_delay_s,
            audio,
            sensors,
        },
        code,
    })
}

fn synth_couple(root: &Path, cfg: &SimConfig, run: &CoupleRun) -> Result<Vec<SessionFiles>> {
    let mut by_slot: BTreeMap<(u32, u8), (usize, Vec<HourTurn>)> = BTreeMap::new();
    for (i, tr) in run.traces.iter().enumerate() {
        let mut rng = sub_rng(
            cfg.seed,
            &format!("turns/{}/{}/{}", run.couple.id, tr.slot.day, tr.slot.hour),
        );
        by_slot.insert((tr.slot.day, tr.slot.hour), (i, plan_hour_turns(tr, cfg.social.turn_s, &mut rng)));
    }
    run.sessions
        .iter()
        .map(|s| {
            let (i, turns) = by_slot
                .get(&(s.slot.day, s.slot.hour))
                .ok_or_else(|| Error::Reference(format!("no trace for session {}", s.session_id)))?;
            synth_session(root, cfg, run, &run.traces[*i], turns, s).map_err(|e| e.in_stage("simulate", &s.session_id))
        })
        .collect()
}

/// Simulates the protocol and writes the full corpus under `root`. Output is
/// byte-identical for a fixed configuration.
pub fn generate_world(cfg: &SimConfig, root: &Path) -> Result<World> {
    let run = simulate_protocol(cfg)?;
    fs::create_dir_all(root.join(corpus::SESSION_DIR))?;
    let files: Vec<Vec<SessionFiles>> = run
        .couples
        .par_iter()
        .map(|c| synth_couple(root, cfg, c))
        .collect::<Result<_>>()?;
    let files: Vec<SessionFiles> = files.into_iter().flatten().collect();
    let sessions: Vec<SessionRecord> = files.iter().map(|f| f.record.clone()).collect();
    let codes: Vec<_> = files.iter().filter_map(|f| f.code.clone()).collect();
    let reports: Vec<SelfReport> = run.couples.iter().flat_map(|c| c.reports.iter().cloned()).collect();
    let schedules: BTreeMap<u32, Schedule> = run.couples.iter().map(|c| (c.couple.id, c.schedule)).collect();

    corpus::write_sessions(&root.join(corpus::SESSIONS_CSV), &sessions)?;
    corpus::write_reports(&root.join(corpus::SELFREPORTS_CSV), &reports)?;
    corpus::write_codes(&root.join(corpus::CODES_CSV), &codes)?;
    corpus::write_schedules(&root.join(corpus::SCHEDULES_CSV), &schedules)?;
    write_ground_truth(&root.join(corpus::GROUND_TRUTH_CSV), &run)?;
    write_log(&root.join(corpus::EVENTS_LOG), &run.log)?;
    fs::write(root.join("sim_config.txt"), cfg.to_kv_text())?;
    log::info!(
        "simulated {} couples: {} sessions, {} reports, {} codes",
        run.couples.len(),
        sessions.len(),
        reports.len(),
        codes.len()
    );
    Ok(World {
        codes: codes.len(),
        run,
        sessions,
        schedules,
    })
}

fn write_ground_truth(path: &Path, run: &ProtocolRun) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "minute,couple,partner,valence_latent,arousal_latent")?;
    for c in &run.couples {
        let refs = partners(&c.couple);
        for tr in &c.traces {
            let base = tr.slot.day * 1440 + tr.slot.hour as u32 * 60;
            for (m, st) in tr.minutes.iter().enumerate() {
                for (p, r) in refs.iter().enumerate() {
                    let role = match r.role {
                        Role::Patient => "patient",
                        Role::SupportPartner => "support_partner",
                    };
                    writeln!(
                        w,
                        "{},{},{role},{},{}",
                        base + m as u32,
                        c.couple.id,
                        st.valence[p],
                        st.arousal[p]
                    )?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
