//! On-disk corpus layout.
//!
//! ```text
//! <root>/sessions.csv  selfreports.csv  codes.csv  schedules.csv
//! <root>/ground_truth.csv  events.log
//! <root>/corpus/<session_id>/{audio.wav, hr.csv, accel.csv, gyro.csv,
//!                             light.csv, wear.csv, annotation.txt,
//!                             transcript_m.txt, transcript_f.txt}
//! ```
//!
//! Paths inside `sessions.csv` are relative to the root; an empty cell means
//! the file does not exist. Audio byte sizes are read from the file system.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    is_weekend, AudioInfo, AxisSeries, ContextCode, Gender, HourRange, HourSlot, PartnerRef, RecordingSignals, Role,
    Schedule, SelfReport, SensorKind, SessionRecord, Speaker, TimeSeries, TriggerKind, WindowKind,
};
use crate::preprocess::AUDIO_RATE;

pub const SESSIONS_CSV: &str = "sessions.csv";
pub const SELFREPORTS_CSV: &str = "selfreports.csv";
pub const CODES_CSV: &str = "codes.csv";
pub const SCHEDULES_CSV: &str = "schedules.csv";
pub const GROUND_TRUTH_CSV: &str = "ground_truth.csv";
pub const EVENTS_LOG: &str = "events.log";
pub const SESSION_DIR: &str = "corpus";
pub const ANNOTATION_FILE: &str = "annotation.txt";

pub fn session_dir(session_id: &str) -> String {
    format!("{SESSION_DIR}/{session_id}")
}

pub fn sensor_file(kind: SensorKind) -> String {
    format!("{}.csv", kind.as_str())
}

pub fn transcript_file(speaker: Speaker) -> String {
    format!("transcript_{}.txt", speaker.as_str())
}

/// Window kind implied by the day and clock hour alone; whether the hour is
/// inside the couple's schedule is decided during selection.
pub fn nominal_window(day: u32, hour: u8) -> WindowKind {
    if is_weekend(day) {
        WindowKind::Weekend
    } else if hour < 12 {
        WindowKind::WeekdayMorning
    } else {
        WindowKind::WeekdayEvening
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionRow {
    session_id: String,
    couple_id: u32,
    role: Role,
    gender: Gender,
    day: u32,
    hour: u8,
    start_offset_s: f64,
    duration_s: f64,
    trigger_kind: TriggerKind,
    peripheral_delay_s: f64,
    audio_path: String,
    audio_duration_s: Option<f64>,
    hr_path: String,
    accel_path: String,
    gyro_path: String,
    light_path: String,
    wear_path: String,
}

pub fn write_sessions(path: &Path, sessions: &[SessionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in sessions {
        let sensor = |k: SensorKind| s.sensors.get(&k).cloned().unwrap_or_default();
        w.serialize(SessionRow {
            session_id: s.session_id.clone(),
            couple_id: s.partner.couple_id,
            role: s.partner.role,
            gender: s.partner.gender,
            day: s.slot.day,
            hour: s.slot.hour,
            start_offset_s: s.start_offset_s,
            duration_s: s.duration_s,
            trigger_kind: s.trigger_kind,
            peripheral_delay_s: s.peripheral_delay_s,
            audio_path: s.audio.as_ref().map(|a| a.path.clone()).unwrap_or_default(),
            audio_duration_s: s.audio.as_ref().map(|a| a.duration_s),
            hr_path: sensor(SensorKind::Hr),
            accel_path: sensor(SensorKind::Accel),
            gyro_path: sensor(SensorKind::Gyro),
            light_path: sensor(SensorKind::Light),
            wear_path: sensor(SensorKind::Wear),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `sessions.csv` under `root`. Listed audio that is missing on disk is
/// treated as absent; sensor paths are kept only when the file exists.
pub fn read_sessions(root: &Path) -> Result<Vec<SessionRecord>> {
    let mut r = csv::Reader::from_path(root.join(SESSIONS_CSV))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: SessionRow = row?;
        let audio = if row.audio_path.is_empty() {
            None
        } else {
            match fs::metadata(root.join(&row.audio_path)) {
                Ok(meta) => Some(AudioInfo {
                    path: row.audio_path.clone(),
                    byte_size: meta.len(),
                    duration_s: row.audio_duration_s.unwrap_or(row.duration_s),
                }),
                Err(_) => {
                    log::warn!("{}: audio file {} is missing", row.session_id, row.audio_path);
                    None
                }
            }
        };
        let mut sensors = BTreeMap::new();
        for (kind, p) in [
            (SensorKind::Hr, &row.hr_path),
            (SensorKind::Accel, &row.accel_path),
            (SensorKind::Gyro, &row.gyro_path),
            (SensorKind::Light, &row.light_path),
            (SensorKind::Wear, &row.wear_path),
        ] {
            if !p.is_empty() && root.join(p).is_file() {
                sensors.insert(kind, p.clone());
            }
        }
        out.push(SessionRecord {
            session_id: row.session_id,
            partner: PartnerRef {
                couple_id: row.couple_id,
                role: row.role,
                gender: row.gender,
            },
            slot: HourSlot {
                day: row.day,
                hour: row.hour,
                window_kind: nominal_window(row.day, row.hour),
            },
            start_offset_s: row.start_offset_s,
            duration_s: row.duration_s,
            trigger_kind: row.trigger_kind,
            peripheral_delay_s: row.peripheral_delay_s,
            audio,
            sensors,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportRow {
    session_id: String,
    valence: Option<f64>,
    arousal: Option<f64>,
    started_within_first_window: bool,
    completed: bool,
}

pub fn write_reports(path: &Path, reports: &[SelfReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(ReportRow {
            session_id: r.session_id.clone(),
            valence: r.valence_raw,
            arousal: r.arousal_raw,
            started_within_first_window: r.started_within_first_window,
            completed: r.completed,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<SelfReport>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| {
            let row: ReportRow = row?;
            Ok(SelfReport {
                session_id: row.session_id,
                valence_raw: row.valence,
                arousal_raw: row.arousal,
                started_within_first_window: row.started_within_first_window,
                completed: row.completed,
            })
        })
        .collect()
}

pub fn write_codes(path: &Path, codes: &[ContextCode]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in codes {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_codes(path: &Path) -> Result<Vec<ContextCode>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_schedules(path: &Path, schedules: &BTreeMap<u32, Schedule>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "couple_id,weekday_morning,weekday_evening,weekend")?;
    for (id, s) in schedules {
        writeln!(w, "{id},{},{},{}", s.weekday_morning, s.weekday_evening, s.weekend)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_schedules(path: &Path) -> Result<BTreeMap<u32, Schedule>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::invalid(format!("schedules row {:?} has too few fields", rec.position())))
        };
        let id: u32 = field(0)?
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad couple id `{}`", field(0).unwrap_or(""))))?;
        let window = |i: usize| -> Result<HourRange> { field(i)?.trim().parse() };
        let s = Schedule {
            weekday_morning: window(1)?,
            weekday_evening: window(2)?,
            weekend: window(3)?,
        };
        if out.insert(id, s).is_some() {
            return Err(Error::Duplicate(format!("schedule for couple {id}")));
        }
    }
    Ok(out)
}

fn write_rows<const N: usize>(path: &Path, header: &str, rows: impl Iterator<Item = [f64; N]>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: rec.len(),
            });
        }
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("{}: bad number `{f}`", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_scalar_series(path: &Path, column: &str, s: &TimeSeries) -> Result<()> {
    write_rows(path, &format!("t,{column}"), s.t.iter().zip(&s.v).map(|(&t, &v)| [t, v]))
}

pub fn read_scalar_series(path: &Path) -> Result<TimeSeries> {
    let rows = read_rows(path, 2)?;
    Ok(TimeSeries {
        t: rows.iter().map(|r| r[0]).collect(),
        v: rows.iter().map(|r| r[1]).collect(),
    })
}

pub fn write_axis_series(path: &Path, s: &AxisSeries) -> Result<()> {
    write_rows(path, "t,x,y,z", s.t.iter().zip(&s.xyz).map(|(&t, v)| [t, v[0], v[1], v[2]]))
}

pub fn read_axis_series(path: &Path) -> Result<AxisSeries> {
    let rows = read_rows(path, 4)?;
    Ok(AxisSeries {
        t: rows.iter().map(|r| r[0]).collect(),
        xyz: rows.iter().map(|r| [r[1], r[2], r[3]]).collect(),
    })
}

/// Column name of each scalar sensor file.
pub fn scalar_column(kind: SensorKind) -> &'static str {
    match kind {
        SensorKind::Hr => "bpm",
        SensorKind::Light => "lux",
        SensorKind::Wear => "confidence",
        SensorKind::Accel | SensorKind::Gyro => "",
    }
}

/// 16-bit mono PCM at 44.1 kHz; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: AUDIO_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &x in samples {
        w.write_sample((x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Returns the samples scaled to [-1, 1] and the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::invalid(format!(
            "{}: expected 16-bit mono PCM, found {spec:?}",
            path.display()
        )));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
        .collect::<std::result::Result<Vec<f32>, _>>()?;
    Ok((samples, spec.sample_rate))
}

/// Loads every signal file of a session that exists.
pub fn load_signals(root: &Path, session: &SessionRecord) -> Result<RecordingSignals> {
    let mut out = RecordingSignals::default();
    if let Some(a) = &session.audio {
        let (samples, rate) = read_wav(&root.join(&a.path))?;
        out.audio = Some(samples);
        out.audio_rate = rate;
    }
    let path = |k: SensorKind| session.sensors.get(&k).map(|p| root.join(p));
    if let Some(p) = path(SensorKind::Hr) {
        out.hr = read_scalar_series(&p)?;
    }
    if let Some(p) = path(SensorKind::Accel) {
        out.accel = read_axis_series(&p)?;
    }
    if let Some(p) = path(SensorKind::Gyro) {
        out.gyro = read_axis_series(&p)?;
    }
    if let Some(p) = path(SensorKind::Light) {
        out.light = read_scalar_series(&p)?;
    }
    if let Some(p) = path(SensorKind::Wear) {
        out.wear = read_scalar_series(&p)?;
    }
    Ok(out)
}

/// Reads a session's text artifact if present.
pub fn read_session_text(root: &Path, session_id: &str, file: &str) -> Result<Option<String>> {
    let p: PathBuf = root.join(session_dir(session_id)).join(file);
    match fs::read_to_string(&p) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
