//! Per-watch trigger state machine and the hourly audio retention rule.
//!
//! Clock values are seconds since the start of study day 0. Ticks arrive on
//! every whole minute of a collection hour; report and recording events
//! arrive at their exact times.

use serde::{Deserialize, Serialize};

use crate::model::{TriggerKind, SESSION_SECONDS};

/// Minimum gap between the end of one recording and the start of the next.
pub const COOLDOWN_S: f64 = 20.0 * 60.0;
/// First minute of the hour at which a backup recording may fire.
pub const BACKUP_MINUTE: u32 = 45;
/// Latest backup start; the backup then ends exactly on the hour.
pub const LAST_BACKUP_MINUTE: u32 = 55;
/// Latest minute an interaction recording may start. An interaction at this
/// minute ends at 35 and its cooldown at 55, so a backup can still fire in
/// the same hour when the report is not completed.
pub const LAST_INTERACTION_MINUTE: u32 = 30;
pub const REPORT_WINDOW_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    Idle,
    Scanning,
    VadCheck,
    Recording,
    AwaitReport1,
    AwaitReport2,
    Cooldown,
    BackupArmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchRole {
    Central,
    Peripheral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRecording {
    pub session_id: String,
    pub kind: TriggerKind,
    pub role: WatchRole,
    pub start: f64,
    pub duration: f64,
    pub peripheral_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerState {
    pub state: FsmState,
    /// Only the central watch scans; the peripheral follows its starts.
    pub central: bool,
    /// An interaction recording with a completed self-report started during
    /// the current hour.
    pub triggered_this_hour: bool,
    pub retained_audio_id: Option<String>,
    pub last_recording_end: Option<f64>,
    /// End of the partner watch's last recording, known to the central.
    pub peer_last_end: Option<f64>,
    pub recording: Option<ActiveRecording>,
    /// The session awaiting a self-report, and whether the wearer has begun it.
    pub pending_report: Option<(String, TriggerKind, bool)>,
}

impl TriggerState {
    pub fn new(central: bool) -> Self {
        TriggerState {
            state: FsmState::Idle,
            central,
            triggered_this_hour: false,
            retained_audio_id: None,
            last_recording_end: None,
            peer_last_end: None,
            recording: None,
            pending_report: None,
        }
    }

    /// Cooldown of this watch alone; gates backups.
    pub fn cooling_down(&self, clock: f64) -> bool {
        self.last_recording_end.is_some_and(|end| clock < end + COOLDOWN_S)
    }

    /// Cooldown of either watch; gates interactions, which start both.
    pub fn pair_cooling_down(&self, clock: f64) -> bool {
        self.cooling_down(clock) || self.peer_last_end.is_some_and(|end| clock < end + COOLDOWN_S)
    }
}

impl Default for TriggerState {
    fn default() -> Self {
        Self::new(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FsmEvent {
    NewHour,
    Tick { minute: u32 },
    Scan { rssi_dbm: f64, threshold_dbm: f64 },
    Vad { speech: bool, session_id: String, peripheral_delay: f64 },
    /// Each watch records its own backup; the partner's watch is not started.
    Backup { session_id: String },
    PeerStart { session_id: String, kind: TriggerKind, delay: f64 },
    RecordingDone,
    Timeout,
    ReportStarted,
    ReportCompleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    StartScan,
    RunVad,
    ArmBackup,
    ConnectPeripheral,
    StartBoth { session_id: String, kind: TriggerKind, peripheral_delay: f64 },
    StartRecording { session_id: String, kind: TriggerKind, delay: f64 },
    EndRecording { session_id: String },
    PromptReport { session_id: String },
    Vibrate2 { session_id: String },
    DismissReport { session_id: String },
    /// Delete the interaction audio; the sensor series are kept.
    DeleteAudio { session_id: String },
    CompleteReport { session_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolError {
    pub state: FsmState,
    pub event: String,
}

/// Pure transition function. An event the current state cannot accept yields
/// an error and leaves the caller's state untouched.
pub fn step_trigger_fsm(
    state: &TriggerState,
    event: &FsmEvent,
    clock: f64,
) -> std::result::Result<(TriggerState, Vec<Action>), ProtocolError> {
    use FsmState::*;
    let mut s = state.clone();
    let mut actions = Vec::new();
    let illegal = || ProtocolError {
        state: state.state,
        event: format!("{event:?}"),
    };
    match (state.state, event) {
        (_, FsmEvent::NewHour) => {
            s.triggered_this_hour = false;
            s.retained_audio_id = None;
        }
        (Idle | Cooldown | Scanning, FsmEvent::Tick { minute }) => {
            let backup_due = (BACKUP_MINUTE..=LAST_BACKUP_MINUTE).contains(minute) && !s.triggered_this_hour;
            if backup_due && !s.cooling_down(clock) {
                s.state = BackupArmed;
                actions.push(Action::ArmBackup);
            } else if s.central && *minute <= LAST_INTERACTION_MINUTE {
                if s.pair_cooling_down(clock) {
                    s.state = Cooldown;
                } else {
                    s.state = Scanning;
                    actions.push(Action::StartScan);
                }
            } else if s.cooling_down(clock) {
                s.state = Cooldown;
            } else {
                s.state = Idle;
            }
        }
        (Recording | AwaitReport1 | AwaitReport2 | VadCheck | BackupArmed, FsmEvent::Tick { .. }) => {}
        (Scanning, FsmEvent::Scan { rssi_dbm, threshold_dbm }) => {
            if rssi_dbm >= threshold_dbm {
                s.state = VadCheck;
                actions.push(Action::RunVad);
            }
        }
        (VadCheck, FsmEvent::Vad { speech, session_id, peripheral_delay }) => {
            if *speech {
                s.state = Recording;
                s.recording = Some(ActiveRecording {
                    session_id: session_id.clone(),
                    kind: TriggerKind::Interaction,
                    role: WatchRole::Central,
                    start: clock,
                    duration: SESSION_SECONDS,
                    peripheral_delay: *peripheral_delay,
                });
                actions.push(Action::ConnectPeripheral);
                actions.push(Action::StartBoth {
                    session_id: session_id.clone(),
                    kind: TriggerKind::Interaction,
                    peripheral_delay: *peripheral_delay,
                });
            } else {
                s.state = Scanning;
            }
        }
        (BackupArmed, FsmEvent::Backup { session_id }) => {
            s.state = Recording;
            s.retained_audio_id = Some(session_id.clone());
            s.recording = Some(ActiveRecording {
                session_id: session_id.clone(),
                kind: TriggerKind::Backup,
                role: if s.central { WatchRole::Central } else { WatchRole::Peripheral },
                start: clock,
                duration: SESSION_SECONDS,
                peripheral_delay: 0.0,
            });
            actions.push(Action::StartRecording {
                session_id: session_id.clone(),
                kind: TriggerKind::Backup,
                delay: 0.0,
            });
        }
        (Idle | Cooldown | Scanning | VadCheck | BackupArmed, FsmEvent::PeerStart { session_id, kind, delay })
            if !s.cooling_down(clock) =>
        {
            s.state = Recording;
            s.recording = Some(ActiveRecording {
                session_id: session_id.clone(),
                kind: *kind,
                role: WatchRole::Peripheral,
                start: clock,
                duration: SESSION_SECONDS - delay,
                peripheral_delay: *delay,
            });
            actions.push(Action::StartRecording {
                session_id: session_id.clone(),
                kind: *kind,
                delay: *delay,
            });
        }
        (Recording, FsmEvent::RecordingDone) => {
            let rec = s.recording.take().ok_or_else(illegal)?;
            s.last_recording_end = Some(clock);
            s.state = AwaitReport1;
            s.pending_report = Some((rec.session_id.clone(), rec.kind, false));
            actions.push(Action::EndRecording {
                session_id: rec.session_id.clone(),
            });
            actions.push(Action::PromptReport {
                session_id: rec.session_id,
            });
        }
        (AwaitReport1 | AwaitReport2, FsmEvent::ReportStarted) => {
            let p = s.pending_report.as_mut().ok_or_else(illegal)?;
            p.2 = true;
        }
        (AwaitReport1 | AwaitReport2, FsmEvent::ReportCompleted) => {
            let (id, kind, started) = s.pending_report.take().ok_or_else(illegal)?;
            if !started {
                return Err(illegal());
            }
            if kind == TriggerKind::Interaction {
                s.triggered_this_hour = true;
                s.retained_audio_id = Some(id.clone());
            }
            s.state = Idle;
            actions.push(Action::CompleteReport { session_id: id });
        }
        (AwaitReport1, FsmEvent::Timeout) => {
            let (id, _, started) = s.pending_report.clone().ok_or_else(illegal)?;
            if !started {
                s.state = AwaitReport2;
                actions.push(Action::Vibrate2 { session_id: id });
            }
        }
        (AwaitReport2, FsmEvent::Timeout) => {
            let (id, kind, started) = s.pending_report.clone().ok_or_else(illegal)?;
            if !started {
                s.pending_report = None;
                s.state = Idle;
                actions.push(Action::DismissReport { session_id: id.clone() });
                if kind == TriggerKind::Interaction {
                    actions.push(Action::DeleteAudio { session_id: id });
                }
            }
        }
        (Idle | Cooldown | Scanning, FsmEvent::Timeout) => {}
        _ => return Err(illegal()),
    }
    Ok((s, actions))
}

/// One recording of one watch within an hour, as seen by the retention rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecording {
    pub session_id: String,
    pub kind: TriggerKind,
    pub start: f64,
    pub report_completed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeleteReason {
    /// Interaction audio whose self-report was not completed.
    NoReport,
    /// A later eligible recording in the same hour replaced it.
    Superseded,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub retained: Option<String>,
    pub deleted: Vec<(String, DeleteReason)>,
}

/// Keeps the audio of the last eligible recording of the hour. Backup audio is
/// always eligible; interaction audio only with a completed self-report.
/// Sensor series are never deleted.
pub fn apply_retention(hour: &[HourRecording]) -> Retention {
    let mut sorted: Vec<&HourRecording> = hour.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let eligible = |r: &HourRecording| r.kind == TriggerKind::Backup || r.report_completed;
    let keep = sorted.iter().rev().find(|r| eligible(r)).map(|r| r.session_id.clone());
    let mut out = Retention {
        retained: keep.clone(),
        deleted: Vec::new(),
    };
    for r in sorted {
        if Some(&r.session_id) == keep.as_ref() {
            continue;
        }
        let reason = if eligible(r) {
            DeleteReason::Superseded
        } else {
            DeleteReason::NoReport
        };
        out.deleted.push((r.session_id.clone(), reason));
    }
    out
}
