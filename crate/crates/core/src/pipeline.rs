//! End-to-end driver over a corpus directory: selection, conditioning,
//! feature extraction and the modality grid, plus the files each stage
//! writes.
//!
//! Samples that cannot yield a feature vector (watch not worn, no usable
//! heart rate, less than a second of the wearer's speech) are dropped and
//! counted in the funnel. Unreadable or inconsistent corpus files abort the
//! run with the stage and session that failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, ANNOTATION_FILE};
use crate::error::{Error, Result};
use crate::eval::{self, CellReport, EvalData, GridConfig, GridRequest};
use crate::features::{
    gemaps_lite, hashed_text_features, movement_features, partner_speech_slices, physio_features, slice_waveform,
    FeatureTable, ACOUSTIC_LITE_DIM, EGEMAPS_DIM, EMBEDDING_DIM, MOVEMENT_DIM, PHYSIO_DIM,
};
use crate::learn::{self, ModelSpec, TrainedModel};
use crate::model::{
    class_counts, quadrant_of, Arousal, ContextCode, DatasetSample, EmotionLabel, Gender, Modality, Schedule,
    SelfReport, Selection, SessionRecord, Speaker, Target, Valence,
};
use crate::preprocess::{condition_session, CheckOutcome, AUDIO_RATE};
use crate::qa::{self, AnnotationTrack, QaRow, Transcript};

pub const FUNNEL_JSON: &str = "funnel.json";
pub const PREPROCESS_REPORT: &str = "preprocess_report.csv";
pub const LABELS_CSV: &str = "labels.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const TABLE_TXT: &str = "table.txt";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const QA_REPORT: &str = "qa_report.csv";
pub const MODEL_JSON: &str = "model.json";
pub const DEFAULT_HASH_DIM: usize = 128;

pub fn features_file(m: Modality) -> String {
    format!("features_{}.csv", m.as_str())
}

/// The tables of a corpus directory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub sessions: Vec<SessionRecord>,
    pub reports: Vec<SelfReport>,
    pub codes: Vec<ContextCode>,
    pub schedules: BTreeMap<u32, Schedule>,
}

impl Corpus {
    pub fn load(root: &Path) -> Result<Self> {
        let at = |file: &str| {
            let p = root.join(file);
            move |e: Error| e.in_stage("load corpus", p.display().to_string())
        };
        Ok(Corpus {
            root: root.to_path_buf(),
            sessions: corpus::read_sessions(root).map_err(at(corpus::SESSIONS_CSV))?,
            reports: corpus::read_reports(&root.join(corpus::SELFREPORTS_CSV)).map_err(at(corpus::SELFREPORTS_CSV))?,
            codes: corpus::read_codes(&root.join(corpus::CODES_CSV)).map_err(at(corpus::CODES_CSV))?,
            schedules: corpus::read_schedules(&root.join(corpus::SCHEDULES_CSV)).map_err(at(corpus::SCHEDULES_CSV))?,
        })
    }

    pub fn select(&self) -> Selection {
        crate::model::select_samples(&self.sessions, &self.reports, &self.codes, &self.schedules)
    }

    pub fn session_ids(&self) -> BTreeSet<String> {
        self.sessions.iter().map(|s| s.session_id.clone()).collect()
    }

    fn record_index(&self) -> BTreeMap<&str, &SessionRecord> {
        self.sessions.iter().map(|s| (s.session_id.as_str(), s)).collect()
    }
}

/// Where acoustic features come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcousticSource {
    /// The built-in 46-value extractor over the wearer's annotated speech.
    Lite,
    /// An external 88-value table keyed by (session, speaker).
    Ingest(PathBuf),
}

impl FromStr for AcousticSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "lite" => Ok(AcousticSource::Lite),
            Some(("ingest", path)) if !path.is_empty() => Ok(AcousticSource::Ingest(path.into())),
            _ => Err(Error::invalid(format!(
                "acoustic source must be `lite` or `ingest:<file>`, got `{s}`"
            ))),
        }
    }
}

/// Where linguistic features come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinguisticSource {
    /// Signed token hashing of the transcript into `dim` buckets.
    Hash(usize),
    /// An external 768-value embedding table keyed by (session, speaker).
    Ingest(PathBuf),
}

impl FromStr for LinguisticSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("hash", dim)) => dim
                .parse()
                .map(LinguisticSource::Hash)
                .map_err(|_| Error::invalid(format!("bad hash dimension `{dim}`"))),
            None if s == "hash" => Ok(LinguisticSource::Hash(DEFAULT_HASH_DIM)),
            Some(("ingest", path)) if !path.is_empty() => Ok(LinguisticSource::Ingest(path.into())),
            _ => Err(Error::invalid(format!(
                "linguistic source must be `hash:<dim>` or `ingest:<file>`, got `{s}`"
            ))),
        }
    }
}

/// Which transcript the hashed text features read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextScope {
    /// Only the words of the partner whose emotion is predicted.
    Wearer,
    /// Both partners' transcripts of the recording.
    Both,
}

impl FromStr for TextScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wearer" => Ok(TextScope::Wearer),
            "both" => Ok(TextScope::Both),
            other => Err(Error::invalid(format!("text scope must be `wearer` or `both`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub modalities: BTreeSet<Modality>,
    pub acoustic: AcousticSource,
    pub linguistic: LinguisticSource,
    pub text_scope: TextScope,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            modalities: Modality::ALL.into_iter().collect(),
            acoustic: AcousticSource::Lite,
            linguistic: LinguisticSource::Hash(DEFAULT_HASH_DIM),
            text_scope: TextScope::Wearer,
        }
    }
}

impl ExtractOptions {
    pub fn dim(&self, m: Modality) -> usize {
        match m {
            Modality::Physio => PHYSIO_DIM,
            Modality::Movement => MOVEMENT_DIM,
            Modality::Acoustic => match self.acoustic {
                AcousticSource::Lite => ACOUSTIC_LITE_DIM,
                AcousticSource::Ingest(_) => EGEMAPS_DIM,
            },
            Modality::Linguistic => match self.linguistic {
                LinguisticSource::Hash(d) => d,
                LinguisticSource::Ingest(_) => EMBEDDING_DIM,
            },
        }
    }

    pub fn describe(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert(
            "modalities".into(),
            self.modalities.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
        );
        out.insert(
            "acoustic".into(),
            match &self.acoustic {
                AcousticSource::Lite => "lite".into(),
                AcousticSource::Ingest(p) => format!("ingest:{}", p.display()),
            },
        );
        out.insert(
            "linguistic".into(),
            match &self.linguistic {
                LinguisticSource::Hash(d) => format!("hash:{d}"),
                LinguisticSource::Ingest(p) => format!("ingest:{}", p.display()),
            },
        );
        out.insert(
            "text_scope".into(),
            match self.text_scope {
                TextScope::Wearer => "wearer".into(),
                TextScope::Both => "both".into(),
            },
        );
        out
    }
}

/// A sample that was selected but produced no feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drop {
    pub session_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub samples: Vec<DatasetSample>,
    pub dropped: Vec<Drop>,
    /// Conditioning and extraction outcomes per session.
    pub checks: Vec<(String, CheckOutcome)>,
}

struct IngestTables {
    acoustic: Option<FeatureTable>,
    linguistic: Option<FeatureTable>,
}

fn load_ingest(corpus: &Corpus, opts: &ExtractOptions) -> Result<IngestTables> {
    let known = corpus.session_ids();
    let load = |path: &Path, modality: Modality, dim: usize| -> Result<FeatureTable> {
        let t = FeatureTable::read_path(path, modality, dim)
            .and_then(|t| t.check_references(&known).map(|_| t))
            .map_err(|e| e.in_stage("ingest", path.display().to_string()))?;
        Ok(t)
    };
    Ok(IngestTables {
        acoustic: match &opts.acoustic {
            AcousticSource::Ingest(p) if opts.modalities.contains(&Modality::Acoustic) => {
                Some(load(p, Modality::Acoustic, EGEMAPS_DIM)?)
            }
            _ => None,
        },
        linguistic: match &opts.linguistic {
            LinguisticSource::Ingest(p) if opts.modalities.contains(&Modality::Linguistic) => {
                Some(load(p, Modality::Linguistic, EMBEDDING_DIM)?)
            }
            _ => None,
        },
    })
}

enum Outcome {
    Keep(BTreeMap<Modality, crate::model::FeatureVector>),
    Drop(String),
}

fn check(name: &str, outcome: impl Into<String>) -> CheckOutcome {
    CheckOutcome {
        check: name.to_string(),
        outcome: outcome.into(),
    }
}

fn extract_one(
    corpus: &Corpus,
    record: &SessionRecord,
    opts: &ExtractOptions,
    tables: &IngestTables,
) -> Result<(Outcome, Vec<CheckOutcome>)> {
    let id = record.session_id.as_str();
    let wearer = record.partner.gender.speaker();
    let signals = corpus::load_signals(&corpus.root, record)?;
    let (cond, mut checks) = condition_session(&signals);
    if !cond.worn {
        return Ok((Outcome::Drop("non_worn".into()), checks));
    }
    let mut features = BTreeMap::new();
    for &m in &opts.modalities {
        let v = match m {
            Modality::Physio => match cond.hr.as_ref().map(physio_features) {
                Some(Ok(v)) => v,
                _ => return Ok((Outcome::Drop("physio_unusable".into()), checks)),
            },
            Modality::Movement => match (&cond.accel, &cond.gyro) {
                (Some(a), Some(g)) => match movement_features(a, g) {
                    Ok(v) => v,
                    Err(e) => return Ok((Outcome::Drop(format!("movement_unusable: {e}")), checks)),
                },
                _ => return Ok((Outcome::Drop("movement_unusable".into()), checks)),
            },
            Modality::Acoustic => match &tables.acoustic {
                Some(t) => t.get(id, wearer)?.clone(),
                None => {
                    let audio = cond.audio.as_ref().ok_or_else(|| {
                        Error::invalid(format!(
                            "audio could not be conditioned (expected {AUDIO_RATE} Hz mono PCM)"
                        ))
                    })?;
                    let text = corpus::read_session_text(&corpus.root, id, ANNOTATION_FILE)?
                        .ok_or_else(|| Error::Reference(format!("{ANNOTATION_FILE} is missing")))?;
                    let parsed = AnnotationTrack::parse(&text, record.duration_s);
                    let spans = partner_speech_slices(&parsed.track, wearer);
                    let segments = slice_waveform(audio, AUDIO_RATE, &spans);
                    match gemaps_lite(&segments, AUDIO_RATE) {
                        Ok(f) => {
                            if f.all_unvoiced {
                                checks.push(check("acoustic", "all frames unvoiced"));
                            }
                            f.vector
                        }
                        Err(e) => return Ok((Outcome::Drop(format!("acoustic_unusable: {e}")), checks)),
                    }
                }
            },
            Modality::Linguistic => match (&tables.linguistic, &opts.linguistic) {
                (Some(t), _) => t.get(id, wearer)?.clone(),
                (None, LinguisticSource::Hash(dim)) => {
                    let speakers: Vec<Speaker> = match opts.text_scope {
                        TextScope::Wearer => vec![wearer],
                        TextScope::Both => vec![Speaker::M, Speaker::F],
                    };
                    let mut text = String::new();
                    for sp in speakers {
                        if let Some(raw) = corpus::read_session_text(&corpus.root, id, &corpus::transcript_file(sp))? {
                            text.push_str(&Transcript::parse(sp, &raw).full_text());
                            text.push(' ');
                        }
                    }
                    let f = hashed_text_features(&text, *dim)?;
                    if f.empty {
                        checks.push(check("linguistic", "empty transcript"));
                    }
                    f.vector
                }
                (None, LinguisticSource::Ingest(_)) => unreachable!("ingest tables are loaded up front"),
            },
        };
        features.insert(m, v);
    }
    Ok((Outcome::Keep(features), checks))
}

/// Conditions every selected session and extracts the requested modalities.
pub fn extract_features(corpus: &Corpus, selected: &[DatasetSample], opts: &ExtractOptions) -> Result<Extraction> {
    let tables = load_ingest(corpus, opts)?;
    let records = corpus.record_index();
    let outcomes = selected
        .par_iter()
        .map(|s| {
            let record = records
                .get(s.session_id.as_str())
                .ok_or_else(|| Error::Reference(format!("selected session {} is not in the manifest", s.session_id)))?;
            extract_one(corpus, record, opts, &tables).map_err(|e| e.in_stage("extract", s.session_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Extraction::default();
    for (s, (outcome, checks)) in selected.iter().zip(outcomes) {
        out.checks.extend(checks.into_iter().map(|c| (s.session_id.clone(), c)));
        match outcome {
            Outcome::Keep(features) => out.samples.push(DatasetSample {
                features,
                ..s.clone()
            }),
            Outcome::Drop(reason) => {
                log::debug!("dropping {}: {reason}", s.session_id);
                out.checks.push((s.session_id.clone(), check("extraction", format!("dropped: {reason}"))));
                out.dropped.push(Drop {
                    session_id: s.session_id.clone(),
                    reason,
                });
            }
        }
    }
    Ok(out)
}

/// Class counts of one gender for both targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenderCounts {
    pub samples: usize,
    /// `[negative, positive]`
    pub valence: [usize; 2],
    /// `[low, high]`
    pub arousal: [usize; 2],
}

pub fn gender_counts(samples: &[DatasetSample]) -> BTreeMap<String, GenderCounts> {
    let mut out = BTreeMap::new();
    for g in [Gender::Male, Gender::Female] {
        let of: Vec<DatasetSample> = samples.iter().filter(|s| s.gender == g).cloned().collect();
        out.insert(
            g.as_str().to_string(),
            GenderCounts {
                samples: of.len(),
                valence: class_counts(&of, Target::Valence),
                arousal: class_counts(&of, Target::Arousal),
            },
        );
    }
    out
}

/// Sample counts after each stage of the selection funnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Funnel {
    /// Sessions listed in the manifest.
    pub sessions: usize,
    /// Sessions with intact audio, every sensor, inside the collection hours.
    pub usable_signals: usize,
    /// Sessions with a completed self-report where both partners spoke.
    pub selected: usize,
    /// Selected sessions that produced every requested feature.
    pub extracted: Option<usize>,
    pub rejections: BTreeMap<String, usize>,
    pub dropped: BTreeMap<String, usize>,
    pub selected_counts: BTreeMap<String, GenderCounts>,
    pub extracted_counts: Option<BTreeMap<String, GenderCounts>>,
}

impl Funnel {
    pub fn new(n_sessions: usize, selection: &Selection, extraction: Option<&Extraction>) -> Self {
        let early = selection
            .rejections
            .iter()
            .filter(|r| !r.reason.is_orphan() && !r.reason.after_signal_stage())
            .count();
        let mut dropped = BTreeMap::new();
        for d in extraction.iter().flat_map(|e| &e.dropped) {
            let key = d.reason.split(':').next().unwrap_or_default().to_string();
            *dropped.entry(key).or_insert(0) += 1;
        }
        Funnel {
            sessions: n_sessions,
            usable_signals: n_sessions - early,
            selected: selection.samples.len(),
            extracted: extraction.map(|e| e.samples.len()),
            rejections: selection.reason_counts(),
            dropped,
            selected_counts: gender_counts(&selection.samples),
            extracted_counts: extraction.map(|e| gender_counts(&e.samples)),
        }
    }
}

/// SHA-256 digests of the inputs a command read, plus its settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub inputs: BTreeMap<String, String>,
    pub settings: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut f = fs::File::open(path)?;
    std::io::copy(&mut f, &mut h)?;
    Ok(format!("{:x}", h.finalize()))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if e.file_type()?.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl Manifest {
    pub fn add_file(&mut self, key: &str, path: &Path) -> Result<()> {
        self.inputs.insert(key.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Digests each corpus table and one combined digest over every file in
    /// the per-session directories.
    pub fn add_corpus(&mut self, root: &Path) -> Result<()> {
        for t in [
            corpus::SESSIONS_CSV,
            corpus::SELFREPORTS_CSV,
            corpus::CODES_CSV,
            corpus::SCHEDULES_CSV,
        ] {
            let p = root.join(t);
            if p.exists() {
                self.add_file(t, &p)?;
            }
        }
        let dir = root.join(corpus::SESSION_DIR);
        if dir.is_dir() {
            let mut files = Vec::new();
            files_under(&dir, &mut files)?;
            let digests = files
                .par_iter()
                .map(|p| sha256_file(p).map(|d| (p.strip_prefix(root).unwrap_or(p).to_path_buf(), d)))
                .collect::<Result<Vec<_>>>()?;
            let mut h = Sha256::new();
            for (rel, d) in digests {
                h.update(rel.to_string_lossy().as_bytes());
                h.update(b"\0");
                h.update(d.as_bytes());
                h.update(b"\n");
            }
            self.inputs
                .insert(format!("{}/", corpus::SESSION_DIR), format!("{:x}", h.finalize()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    pub fn flat(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = self
            .inputs
            .iter()
            .map(|(k, v)| (format!("sha256:{k}"), v.clone()))
            .collect();
        out.extend(self.settings.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_JSON), &serde_json::to_value(self)?)
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes the conditioning outcomes, then one row per selection rejection.
pub fn write_preprocess_report(path: &Path, selection: &Selection, checks: &[(String, CheckOutcome)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["session_id", "check", "outcome"])?;
    for (id, c) in checks {
        w.write_record([id.as_str(), &c.check, &c.outcome])?;
    }
    for r in &selection.rejections {
        w.write_record([r.session_id.as_str(), "selection", &format!("rejected: {}", r.reason.as_str())])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    session_id: String,
    couple_id: u32,
    gender: Gender,
    valence: Valence,
    arousal: Arousal,
}

/// Writes `labels.csv` and one `features_<modality>.csv` per modality.
pub fn write_dataset(dir: &Path, samples: &[DatasetSample], opts: &ExtractOptions) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(LABELS_CSV))?;
    for s in samples {
        w.serialize(LabelRow {
            session_id: s.session_id.clone(),
            couple_id: s.couple_id,
            gender: s.gender,
            valence: s.label.valence,
            arousal: s.label.arousal,
        })?;
    }
    w.flush()?;
    for &m in &opts.modalities {
        let mut table = FeatureTable::new(m, opts.dim(m));
        for s in samples {
            if let Some(v) = s.features.get(&m) {
                table.insert(&s.session_id, s.gender.speaker(), v.clone())?;
            }
        }
        table.write_path(&dir.join(features_file(m)))?;
    }
    Ok(())
}

/// Reads a directory written by [`write_dataset`]. Every feature file present
/// is loaded; its dimension is taken from the header.
pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetSample>> {
    let mut rdr = csv::Reader::from_path(dir.join(LABELS_CSV))
        .map_err(|e| Error::from(e).in_stage("read dataset", dir.join(LABELS_CSV).display().to_string()))?;
    let mut samples = Vec::new();
    for row in rdr.deserialize() {
        let r: LabelRow = row?;
        samples.push(DatasetSample {
            session_id: r.session_id,
            couple_id: r.couple_id,
            gender: r.gender,
            features: BTreeMap::new(),
            label: EmotionLabel {
                valence: r.valence,
                arousal: r.arousal,
                quadrant: quadrant_of(r.valence, r.arousal),
            },
        });
    }
    for m in Modality::ALL {
        let path = dir.join(features_file(m));
        if !path.exists() {
            continue;
        }
        let header = csv::Reader::from_path(&path)?.headers()?.clone();
        let dim = header.len().saturating_sub(3);
        let table = FeatureTable::read_path(&path, m, dim).map_err(|e| e.in_stage("read dataset", path.display().to_string()))?;
        for s in &mut samples {
            if let Ok(v) = table.get(&s.session_id, s.gender.speaker()) {
                s.features.insert(m, v.clone());
            }
        }
    }
    Ok(samples)
}

/// Which part of the grid to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub genders: Vec<Gender>,
    pub request: GridRequest,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            genders: vec![Gender::Male, Gender::Female],
            request: GridRequest::default(),
        }
    }
}

impl GridOptions {
    pub fn modalities(&self) -> BTreeSet<Modality> {
        self.request.rows.iter().flatten().copied().collect()
    }
}

/// Runs the modality grid separately for each requested gender.
pub fn evaluate(samples: &[DatasetSample], opts: &GridOptions) -> Result<Vec<CellReport>> {
    let mut cells = Vec::new();
    for &g in &opts.genders {
        let of: Vec<&DatasetSample> = samples.iter().filter(|s| s.gender == g).collect();
        if of.is_empty() {
            return Err(Error::invalid(format!("no {g} samples to evaluate")));
        }
        let mut out = eval::modality_grid(&of, Some(g), &opts.request).map_err(|e| e.in_stage("evaluate", g.as_str()))?;
        for c in &out {
            if let Some(b) = &c.best {
                b.verify(of.len())?;
            }
        }
        cells.append(&mut out);
    }
    Ok(cells)
}

/// Writes `metrics.json`, the confusion matrices and the text table.
pub fn write_metrics(dir: &Path, cells: &[CellReport], manifest: &Manifest) -> Result<()> {
    write_json(&dir.join(METRICS_JSON), &eval::metrics_json(cells, &manifest.flat()))?;
    eval::write_confusions(dir, cells)?;
    fs::write(dir.join(TABLE_TXT), eval::format_table(cells))?;
    Ok(())
}

/// Renders the table of a `metrics.json` written by [`write_metrics`].
pub fn table_from_metrics(metrics: &serde_json::Value) -> Result<String> {
    let root = metrics
        .get("metrics")
        .and_then(|m| m.as_object())
        .ok_or_else(|| Error::invalid("metrics file has no `metrics` object"))?;
    let mut columns = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    for (g, targets) in root {
        for (t, mods) in targets.as_object().into_iter().flatten() {
            columns.push((g.clone(), t.clone()));
            for m in mods.as_object().into_iter().flat_map(|o| o.keys()) {
                if !rows.contains(m) {
                    rows.push(m.clone());
                }
            }
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{:<40}", "modalities"));
    for (g, t) in &columns {
        out.push_str(&format!("{:>24}", format!("{g} {t}")));
    }
    out.push('\n');
    for r in &rows {
        out.push_str(&format!("{r:<40}"));
        for (g, t) in &columns {
            let cell = &root[g][t][r];
            let v = match (cell.get("uar").and_then(|u| u.as_f64()), cell.get("model").and_then(|m| m.as_str())) {
                (Some(u), Some(m)) => format!("{:.1}% {m}", 100.0 * u),
                _ => "n/a".to_string(),
            };
            out.push_str(&format!("{v:>24}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Settings of a full pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub extract: ExtractOptions,
    pub grid: GridOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            extract: ExtractOptions::default(),
            grid: GridOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub funnel: Funnel,
    pub samples: Vec<DatasetSample>,
    pub cells: Vec<CellReport>,
}

/// Selection, conditioning, extraction and evaluation of a corpus. Only the
/// modalities used by the requested grid rows are extracted.
pub fn run_pipeline(corpus_root: &Path, out: &Path, opts: &PipelineOptions) -> Result<PipelineOutput> {
    fs::create_dir_all(out)?;
    let corpus = Corpus::load(corpus_root)?;
    let selection = corpus.select();
    let mut extract = opts.extract.clone();
    extract.modalities = opts.grid.modalities();
    let extraction = extract_features(&corpus, &selection.samples, &extract)?;
    let funnel = Funnel::new(corpus.sessions.len(), &selection, Some(&extraction));
    log::info!(
        "funnel: {} sessions, {} usable, {} selected, {} extracted",
        funnel.sessions,
        funnel.usable_signals,
        funnel.selected,
        extraction.samples.len()
    );

    let mut manifest = Manifest::default();
    manifest.add_corpus(corpus_root)?;
    add_ingest_inputs(&mut manifest, &extract)?;
    for (k, v) in extract.describe() {
        manifest.set(&k, v);
    }
    describe_grid(&mut manifest, &opts.grid);
    manifest.write(out)?;

    write_json(&out.join(FUNNEL_JSON), &serde_json::json!({ "inputs": manifest.flat(), "funnel": funnel }))?;
    write_preprocess_report(&out.join(PREPROCESS_REPORT), &selection, &extraction.checks)?;
    write_dataset(out, &extraction.samples, &extract)?;
    let cells = evaluate(&extraction.samples, &opts.grid)?;
    write_metrics(out, &cells, &manifest)?;
    Ok(PipelineOutput {
        funnel,
        samples: extraction.samples,
        cells,
    })
}

pub fn add_ingest_inputs(manifest: &mut Manifest, opts: &ExtractOptions) -> Result<()> {
    if let AcousticSource::Ingest(p) = &opts.acoustic {
        manifest.add_file("acoustic_ingest", p)?;
    }
    if let LinguisticSource::Ingest(p) = &opts.linguistic {
        manifest.add_file("linguistic_ingest", p)?;
    }
    Ok(())
}

pub fn describe_grid(manifest: &mut Manifest, grid: &GridOptions) {
    let r = &grid.request;
    manifest.set("seed", r.seed);
    manifest.set(
        "genders",
        grid.genders.iter().map(|g| g.as_str()).collect::<Vec<_>>().join(","),
    );
    manifest.set(
        "targets",
        r.targets.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(","),
    );
    manifest.set(
        "rows",
        r.rows.iter().map(|m| eval::modality_label(m)).collect::<Vec<_>>().join(";"),
    );
    manifest.set("grid", serde_json::to_string(&r.grid).unwrap_or_default());
}

/// Tunes on all samples of one gender with couple-disjoint inner folds and
/// fits the chosen model on them.
pub fn train_model(
    samples: &[DatasetSample],
    gender: Gender,
    target: Target,
    modalities: &[Modality],
    grid: &GridConfig,
    kind: learn::ModelKind,
    seed: u64,
) -> Result<TrainedModel> {
    let of: Vec<&DatasetSample> = samples.iter().filter(|s| s.gender == gender).collect();
    let data = EvalData::from_samples(&of, modalities, target)?;
    let cells: Vec<_> = grid.cells().into_iter().filter(|h| h.kind() == kind).collect();
    let tune = eval::inner_tune(&data, &cells, seed, grid.balanced)?;
    if let Some(reason) = &tune.fallback {
        log::warn!("inner tuning fell back to the first grid cell: {reason}");
    }
    learn::train(
        &ModelSpec {
            hyper: tune.hyper,
            seed,
            balanced: grid.balanced,
        },
        &data.x,
        &data.y,
    )
}

/// Corpus-wide QA rows: every session with audio gets its annotation and
/// transcripts checked.
pub fn run_qa(corpus: &Corpus) -> Result<Vec<QaRow>> {
    let codes: BTreeMap<&str, &ContextCode> = corpus.codes.iter().map(|c| (c.session_id.as_str(), c)).collect();
    let per = corpus
        .sessions
        .par_iter()
        .filter(|s| s.audio.is_some())
        .map(|s| -> Result<Vec<QaRow>> {
            let id = s.session_id.as_str();
            let read = |f: &str| corpus::read_session_text(&corpus.root, id, f);
            let mut rows = Vec::new();
            let text = read(ANNOTATION_FILE)?.unwrap_or_else(|| {
                rows.push(QaRow {
                    session_id: id.to_string(),
                    check: "violation:annotation_missing".into(),
                    value: ANNOTATION_FILE.into(),
                });
                String::new()
            });
            let annotation = AnnotationTrack::parse(&text, s.duration_s);
            let tm = Transcript::parse(Speaker::M, &read(&corpus::transcript_file(Speaker::M))?.unwrap_or_default());
            let tf = Transcript::parse(Speaker::F, &read(&corpus::transcript_file(Speaker::F))?.unwrap_or_default());
            rows.extend(qa::session_qa(codes.get(id).copied(), id, &annotation, &tm, &tf));
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Count of violation rows in a QA report.
pub fn violations(rows: &[QaRow]) -> usize {
    rows.iter().filter(|r| r.check.starts_with("violation:")).count()
}

pub fn write_qa(path: &Path, rows: &[QaRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    qa::write_qa_report(&mut f, rows)?;
    f.flush()?;
    Ok(())
}
