//! Domain types shared across the simulator and the recognition pipeline,
//! plus label binarization and the sample-selection funnel.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{detect_corrupt_audio, AudioCheck, AudioFormat};

/// Slider midpoint; values at or below it fall into the low/negative bin.
pub const AFFECT_SPLIT: f64 = 50.0;

/// Nominal length of one recording, seconds.
pub const SESSION_SECONDS: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Patient,
    SupportPartner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn other(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }

    /// Annotation/transcript speaker code.
    pub fn speaker(self) -> Speaker {
        match self {
            Gender::Male => Speaker::M,
            Gender::Female => Speaker::F,
        }
    }
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            other => Err(Error::invalid(format!("unknown gender `{other}`"))),
        }
    }
}

/// A partner's speaker code in annotations and transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "m")]
    M,
    #[serde(rename = "f")]
    F,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::M => "m",
            Speaker::F => "f",
        }
    }
}

impl FromStr for Speaker {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Speaker::M),
            "f" => Ok(Speaker::F),
            other => Err(Error::invalid(format!("unknown speaker `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartnerRef {
    pub couple_id: u32,
    pub role: Role,
    pub gender: Gender,
}

/// One heterosexual couple; the patient's gender fixes the support partner's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Couple {
    pub id: u32,
    pub patient_gender: Gender,
}

impl Couple {
    pub fn new(id: u32, patient_gender: Gender) -> Result<Self> {
        if id == 0 {
            return Err(Error::invalid("couple ids start at 1"));
        }
        Ok(Couple { id, patient_gender })
    }

    pub fn patient(&self) -> PartnerRef {
        PartnerRef {
            couple_id: self.id,
            role: Role::Patient,
            gender: self.patient_gender,
        }
    }

    pub fn support_partner(&self) -> PartnerRef {
        PartnerRef {
            couple_id: self.id,
            role: Role::SupportPartner,
            gender: self.patient_gender.other(),
        }
    }

    pub fn partner(&self, gender: Gender) -> PartnerRef {
        if gender == self.patient_gender {
            self.patient()
        } else {
            self.support_partner()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    WeekdayMorning,
    WeekdayEvening,
    Weekend,
}

/// Study days are numbered from 0 (the Monday the study starts).
pub fn is_weekend(day: u32) -> bool {
    day % 7 >= 5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HourSlot {
    pub day: u32,
    pub hour: u8,
    pub window_kind: WindowKind,
}

/// Half-open range of clock hours `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourRange {
    pub start: u8,
    pub end: u8,
}

impl HourRange {
    pub fn new(start: u8, end: u8) -> Self {
        HourRange { start, end }
    }

    pub fn contains(&self, hour: u8) -> bool {
        hour >= self.start && hour < self.end
    }

    pub fn len(&self) -> u8 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for HourRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for HourRange {
    type Err = Error;
    /// Parses `start-end`, e.g. `6-9`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("hour range `{s}` is not `start-end`"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let start: u8 = a.trim().parse().map_err(|_| bad())?;
        let end: u8 = b.trim().parse().map_err(|_| bad())?;
        if start >= end || end > 24 {
            return Err(bad());
        }
        Ok(HourRange { start, end })
    }
}

/// Collection hours a couple picked at enrolment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub weekday_morning: HourRange,
    pub weekday_evening: HourRange,
    pub weekend: HourRange,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            weekday_morning: HourRange::new(6, 9),
            weekday_evening: HourRange::new(18, 22),
            weekend: HourRange::new(7, 21),
        }
    }
}

impl Schedule {
    /// Morning within 04–11 and evening within 16–23, each at least two hours;
    /// the weekend window must be non-empty and within the day.
    pub fn validate(&self) -> Result<()> {
        let m = self.weekday_morning;
        if m.start < 4 || m.end > 11 || m.len() < 2 {
            return Err(Error::invalid(format!(
                "weekday morning window {}-{} must lie in 4-11 and span at least 2 h",
                m.start, m.end
            )));
        }
        let e = self.weekday_evening;
        if e.start < 16 || e.end > 23 || e.len() < 2 {
            return Err(Error::invalid(format!(
                "weekday evening window {}-{} must lie in 16-23 and span at least 2 h",
                e.start, e.end
            )));
        }
        let w = self.weekend;
        if w.is_empty() || w.end > 24 {
            return Err(Error::invalid(format!(
                "weekend window {}-{} is empty or past midnight",
                w.start, w.end
            )));
        }
        Ok(())
    }

    pub fn window_of(&self, day: u32, hour: u8) -> Option<WindowKind> {
        if is_weekend(day) {
            self.weekend.contains(hour).then_some(WindowKind::Weekend)
        } else if self.weekday_morning.contains(hour) {
            Some(WindowKind::WeekdayMorning)
        } else if self.weekday_evening.contains(hour) {
            Some(WindowKind::WeekdayEvening)
        } else {
            None
        }
    }

    /// All in-window hour slots of a day, in clock order.
    pub fn slots(&self, day: u32) -> Vec<HourSlot> {
        (0..24u8)
            .filter_map(|hour| {
                self.window_of(day, hour).map(|window_kind| HourSlot {
                    day,
                    hour,
                    window_kind,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Interaction,
    Backup,
}

/// Timestamped scalar samples (seconds, value).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: v.len(),
            });
        }
        Ok(TimeSeries { t, v })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Keeps the samples whose mask entry is true.
    pub fn retain_mask(&self, keep: &[bool]) -> TimeSeries {
        let (t, v) = self
            .t
            .iter()
            .zip(&self.v)
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|((&t, &v), _)| (t, v))
            .unzip();
        TimeSeries { t, v }
    }
}

/// Timestamped three-axis samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisSeries {
    pub t: Vec<f64>,
    pub xyz: Vec<[f64; 3]>,
}

impl AxisSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// On-disk audio as seen by the selection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioInfo {
    pub path: String,
    pub byte_size: u64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Hr,
    Accel,
    Gyro,
    Light,
    Wear,
}

impl SensorKind {
    pub const ALL: [SensorKind; 5] = [
        SensorKind::Hr,
        SensorKind::Accel,
        SensorKind::Gyro,
        SensorKind::Light,
        SensorKind::Wear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Hr => "hr",
            SensorKind::Accel => "accel",
            SensorKind::Gyro => "gyro",
            SensorKind::Light => "light",
            SensorKind::Wear => "wear",
        }
    }
}

/// One 5-minute recording of one partner's watch, as listed in `sessions.csv`.
/// Signal payloads are loaded separately (see [`RecordingSignals`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub partner: PartnerRef,
    pub slot: HourSlot,
    pub start_offset_s: f64,
    pub duration_s: f64,
    pub trigger_kind: TriggerKind,
    pub peripheral_delay_s: f64,
    pub audio: Option<AudioInfo>,
    /// Relative paths of the sensor files that exist for this session.
    pub sensors: BTreeMap<SensorKind, String>,
}

impl SessionRecord {
    pub fn has_sensor(&self, kind: SensorKind) -> bool {
        self.sensors.contains_key(&kind)
    }
}

/// Canonical id `c{couple}_{role}_{day}_{hour}_{seq}`.
pub fn session_id(partner: &PartnerRef, day: u32, hour: u8, seq: u32) -> String {
    let role = match partner.role {
        Role::Patient => "patient",
        Role::SupportPartner => "support",
    };
    format!("c{}_{}_{}_{}_{}", partner.couple_id, role, day, hour, seq)
}

/// Decoded signals of a recording.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordingSignals {
    pub audio: Option<Vec<f32>>,
    pub audio_rate: u32,
    pub hr: TimeSeries,
    pub accel: AxisSeries,
    pub gyro: AxisSeries,
    pub light: TimeSeries,
    pub wear: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfReport {
    pub session_id: String,
    pub valence_raw: Option<f64>,
    pub arousal_raw: Option<f64>,
    pub started_within_first_window: bool,
    pub completed: bool,
}

impl SelfReport {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("valence_raw", self.valence_raw), ("arousal_raw", self.arousal_raw)] {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    return Err(Error::OutOfRange { what, value: v });
                }
            }
        }
        if self.completed && (self.valence_raw.is_none() || self.arousal_raw.is_none()) {
            return Err(Error::invalid(format!(
                "self-report {} is completed but lacks ratings",
                self.session_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arousal {
    Low,
    High,
}

/// Circumplex quadrants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    /// high arousal, positive valence (excited)
    Q1HighPos,
    /// high arousal, negative valence (angry)
    Q2HighNeg,
    /// low arousal, negative valence (depressed)
    Q3LowNeg,
    /// low arousal, positive valence (relaxed)
    Q4LowPos,
}

pub fn quadrant_of(valence: Valence, arousal: Arousal) -> Quadrant {
    match (valence, arousal) {
        (Valence::Positive, Arousal::High) => Quadrant::Q1HighPos,
        (Valence::Negative, Arousal::High) => Quadrant::Q2HighNeg,
        (Valence::Negative, Arousal::Low) => Quadrant::Q3LowNeg,
        (Valence::Positive, Arousal::Low) => Quadrant::Q4LowPos,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmotionLabel {
    pub valence: Valence,
    pub arousal: Arousal,
    pub quadrant: Quadrant,
}

impl EmotionLabel {
    /// 0 for the low/negative class, 1 for high/positive.
    pub fn class(&self, target: Target) -> u8 {
        match target {
            Target::Arousal => (self.arousal == Arousal::High) as u8,
            Target::Valence => (self.valence == Valence::Positive) as u8,
        }
    }
}

pub fn binarize_affect(valence_raw: f64, arousal_raw: f64) -> Result<EmotionLabel> {
    for (what, v) in [("valence_raw", valence_raw), ("arousal_raw", arousal_raw)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::OutOfRange { what, value: v });
        }
    }
    let valence = if valence_raw > AFFECT_SPLIT {
        Valence::Positive
    } else {
        Valence::Negative
    };
    let arousal = if arousal_raw > AFFECT_SPLIT {
        Arousal::High
    } else {
        Arousal::Low
    };
    Ok(EmotionLabel {
        valence,
        arousal,
        quadrant: quadrant_of(valence, arousal),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Arousal,
    Valence,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Arousal, Target::Valence];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Arousal => "arousal",
            Target::Valence => "valence",
        }
    }

    /// Human names of the (class 0, class 1) bins.
    pub fn class_names(self) -> [&'static str; 2] {
        match self {
            Target::Arousal => ["low", "high"],
            Target::Valence => ["negative", "positive"],
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arousal" => Ok(Target::Arousal),
            "valence" => Ok(Target::Valence),
            other => Err(Error::invalid(format!("unknown target `{other}`"))),
        }
    }
}

/// Coded context of one audio file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextCode {
    pub session_id: String,
    pub speech_present: bool,
    pub male_spoke: bool,
    pub female_spoke: bool,
    pub conversation: bool,
    pub partner_conversation: bool,
    pub interaction_partner: String,
    pub location: String,
    pub activity: String,
    pub conversation_type: String,
}

pub const ROMANTIC_PARTNER: &str = "romantic partner";

impl ContextCode {
    pub fn validate(&self) -> Result<()> {
        if self.partner_conversation && !(self.male_spoke && self.female_spoke) {
            return Err(Error::invalid(format!(
                "{}: partner conversation coded without both partners speaking",
                self.session_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Physio,
    Movement,
    Acoustic,
    Linguistic,
}

impl Modality {
    /// Canonical fusion order.
    pub const ALL: [Modality; 4] = [
        Modality::Physio,
        Modality::Movement,
        Modality::Acoustic,
        Modality::Linguistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Physio => "physio",
            Modality::Movement => "movement",
            Modality::Acoustic => "acoustic",
            Modality::Linguistic => "linguistic",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physio" | "physiological" => Ok(Modality::Physio),
            "movement" => Ok(Modality::Movement),
            "acoustic" => Ok(Modality::Acoustic),
            "linguistic" => Ok(Modality::Linguistic),
            other => Err(Error::invalid(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub modality: Modality,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(modality: Modality, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{modality} feature {i}")));
        }
        Ok(FeatureVector { modality, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub session_id: String,
    pub couple_id: u32,
    pub gender: Gender,
    pub features: BTreeMap<Modality, FeatureVector>,
    pub label: EmotionLabel,
}

/// Why a session (or dangling artifact) did not make it into the dataset.
/// Variants are listed in funnel order; a session is charged with the first
/// stage it fails.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoAudio,
    CorruptAudio,
    MissingSensor(SensorKind),
    NoSchedule,
    OutsideCollectionHours,
    NoSelfReport,
    DuplicateSelfReport,
    SelfReportIncomplete,
    InvalidSelfReport,
    NoContextCode,
    PartnersNotBothSpoke,
    OrphanSelfReport,
    OrphanContextCode,
}

impl RejectReason {
    pub fn as_str(&self) -> String {
        match self {
            RejectReason::MissingSensor(kind) => format!("missing_sensor:{}", kind.as_str()),
            other => serde_json::to_value(other)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
        }
    }

    /// The artifact refers to a session that is not in the manifest.
    pub fn is_orphan(&self) -> bool {
        matches!(self, RejectReason::OrphanSelfReport | RejectReason::OrphanContextCode)
    }

    /// True when the session had usable audio, sensors and lay in the
    /// collection window, i.e. it survived the first funnel stage.
    pub fn after_signal_stage(&self) -> bool {
        !matches!(
            self,
            RejectReason::NoAudio
                | RejectReason::CorruptAudio
                | RejectReason::MissingSensor(_)
                | RejectReason::NoSchedule
                | RejectReason::OutsideCollectionHours
                | RejectReason::OrphanSelfReport
                | RejectReason::OrphanContextCode
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub session_id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub samples: Vec<DatasetSample>,
    pub rejections: Vec<Rejection>,
}

impl Selection {
    pub fn reason_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rejections {
            *counts.entry(r.reason.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// Applies the selection funnel: usable audio and sensors, inside the couple's
/// collection hours, a completed self-report, and both partners coded as
/// having spoken. Every session that does not survive, and every report or
/// code that points at no session, appears in the rejection list.
pub fn select_samples(
    sessions: &[SessionRecord],
    reports: &[SelfReport],
    codes: &[ContextCode],
    schedules: &BTreeMap<u32, Schedule>,
) -> Selection {
    let known: BTreeSet<&str> = sessions.iter().map(|s| s.session_id.as_str()).collect();

    let mut report_index: HashMap<&str, Vec<&SelfReport>> = HashMap::new();
    for r in reports {
        report_index.entry(r.session_id.as_str()).or_default().push(r);
    }
    let mut code_index: HashMap<&str, &ContextCode> = HashMap::new();
    for c in codes {
        code_index.entry(c.session_id.as_str()).or_insert(c);
    }

    let mut out = Selection::default();
    let reject = |id: &str, reason: RejectReason| {
        log::debug!("rejecting {id}: {reason:?}");
        Rejection {
            session_id: id.to_owned(),
            reason,
        }
    };

    for s in sessions {
        let id = s.session_id.as_str();
        let verdict = (|| {
            let audio = s.audio.as_ref().ok_or(RejectReason::NoAudio)?;
            let check = detect_corrupt_audio(audio.byte_size, audio.duration_s, AudioFormat::PCM16_MONO_44K);
            if check == AudioCheck::Corrupt {
                return Err(RejectReason::CorruptAudio);
            }
            if let Some(kind) = SensorKind::ALL.into_iter().find(|k| !s.has_sensor(*k)) {
                return Err(RejectReason::MissingSensor(kind));
            }
            let schedule = schedules.get(&s.partner.couple_id).ok_or(RejectReason::NoSchedule)?;
            if schedule.window_of(s.slot.day, s.slot.hour).is_none() {
                return Err(RejectReason::OutsideCollectionHours);
            }
            let report = match report_index.get(id).map(Vec::as_slice) {
                None | Some([]) => return Err(RejectReason::NoSelfReport),
                Some([one]) => *one,
                Some(_) => return Err(RejectReason::DuplicateSelfReport),
            };
            if !report.completed {
                return Err(RejectReason::SelfReportIncomplete);
            }
            if report.validate().is_err() {
                return Err(RejectReason::InvalidSelfReport);
            }
            let code = code_index.get(id).ok_or(RejectReason::NoContextCode)?;
            if !(code.male_spoke && code.female_spoke) {
                return Err(RejectReason::PartnersNotBothSpoke);
            }
            let (Some(v), Some(a)) = (report.valence_raw, report.arousal_raw) else {
                return Err(RejectReason::InvalidSelfReport);
            };
            binarize_affect(v, a).map_err(|_| RejectReason::InvalidSelfReport)
        })();
        match verdict {
            Ok(label) => out.samples.push(DatasetSample {
                session_id: s.session_id.clone(),
                couple_id: s.partner.couple_id,
                gender: s.partner.gender,
                features: BTreeMap::new(),
                label,
            }),
            Err(reason) => out.rejections.push(reject(id, reason)),
        }
    }

    for r in reports {
        if !known.contains(r.session_id.as_str()) {
            out.rejections.push(reject(&r.session_id, RejectReason::OrphanSelfReport));
        }
    }
    for c in codes {
        if !known.contains(c.session_id.as_str()) {
            out.rejections.push(reject(&c.session_id, RejectReason::OrphanContextCode));
        }
    }
    out
}

/// Partitions samples into (male, female), preserving order.
pub fn split_by_gender(samples: &[DatasetSample]) -> (Vec<DatasetSample>, Vec<DatasetSample>) {
    samples.iter().cloned().partition(|s| s.gender == Gender::Male)
}

/// Per-class counts `[class0, class1]` for a target.
pub fn class_counts(samples: &[DatasetSample], target: Target) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for s in samples {
        counts[s.label.class(target) as usize] += 1;
    }
    counts
}
