//! Annotation and transcript artifacts, their cross-checks, and inter-rater ICC.
//!
//! Annotation files are tab-separated `start<TAB>end<TAB>label` lines.
//! Transcripts are free text split into 15-second chunks by `//`; chunk `i`
//! covers the half-open window `[15i, 15i + 15)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContextCode, Speaker, ROMANTIC_PARTNER};

pub const CHUNK_SECONDS: f64 = 15.0;
pub const CHUNK_SEPARATOR: &str = "//";
pub const INAUDIBLE: &str = "XY";
pub const ICC_VARIANT: &str = "ICC(2,1) two-way random, absolute agreement, single rater";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegmentLabel {
    M,
    F,
    U,
    C,
    V,
    P,
    N,
    UTvRadio,
}

impl SegmentLabel {
    pub const ALL: [SegmentLabel; 8] = [
        SegmentLabel::M,
        SegmentLabel::F,
        SegmentLabel::U,
        SegmentLabel::C,
        SegmentLabel::V,
        SegmentLabel::P,
        SegmentLabel::N,
        SegmentLabel::UTvRadio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentLabel::M => "m",
            SegmentLabel::F => "f",
            SegmentLabel::U => "u",
            SegmentLabel::C => "c",
            SegmentLabel::V => "v",
            SegmentLabel::P => "p",
            SegmentLabel::N => "n",
            SegmentLabel::UTvRadio => "u-tv/radio",
        }
    }

    pub fn of_speaker(s: Speaker) -> Self {
        match s {
            Speaker::M => SegmentLabel::M,
            Speaker::F => SegmentLabel::F,
        }
    }
}

impl FromStr for SegmentLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SegmentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown annotation label `{s}`")))
    }
}

impl fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: SegmentLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub segments: Vec<AnnotationSegment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedAnnotation {
    pub track: AnnotationTrack,
    pub malformed: Vec<MalformedLine>,
}

impl AnnotationTrack {
    /// Parses a track for audio of `duration_s` seconds. Bad lines are
    /// collected rather than failing the whole file; blank lines are skipped.
    pub fn parse(text: &str, duration_s: f64) -> ParsedAnnotation {
        let mut out = ParsedAnnotation::default();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            match parse_segment(raw, duration_s) {
                Ok(seg) => out.track.segments.push(seg),
                Err(reason) => out.malformed.push(MalformedLine {
                    line: i + 1,
                    text: raw.to_string(),
                    reason,
                }),
            }
        }
        if out.track.segments.is_empty() && out.malformed.is_empty() {
            log::warn!("empty annotation track");
        }
        out
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for seg in &self.segments {
            s.push_str(&format!("{}\t{}\t{}\n", seg.start_s, seg.end_s, seg.label));
        }
        s
    }

    pub fn has_label(&self, label: SegmentLabel) -> bool {
        self.segments.iter().any(|s| s.label == label)
    }
}

fn parse_segment(raw: &str, duration_s: f64) -> std::result::Result<AnnotationSegment, String> {
    let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    let start: f64 = fields[0].parse().map_err(|_| format!("bad start `{}`", fields[0]))?;
    let end: f64 = fields[1].parse().map_err(|_| format!("bad end `{}`", fields[1]))?;
    let label: SegmentLabel = fields[2].parse().map_err(|_| format!("unknown label `{}`", fields[2]))?;
    if !(start.is_finite() && end.is_finite()) {
        return Err("non-finite time".into());
    }
    if start < 0.0 || end > duration_s {
        return Err(format!("segment [{start}, {end}] outside [0, {duration_s}]"));
    }
    if start >= end {
        return Err(format!("start {start} not before end {end}"));
    }
    Ok(AnnotationSegment {
        start_s: start,
        end_s: end,
        label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub speaker: Speaker,
    /// Chunk texts, trimmed; chunk `i` covers `[15i, 15i + 15)` seconds.
    pub chunks: Vec<String>,
}

impl Transcript {
    pub fn parse(speaker: Speaker, text: &str) -> Self {
        let chunks = if text.trim().is_empty() {
            Vec::new()
        } else {
            text.split(CHUNK_SEPARATOR).map(|c| c.trim().to_string()).collect()
        };
        Transcript { speaker, chunks }
    }

    pub fn serialize(&self) -> String {
        self.chunks.join(&format!(" {CHUNK_SEPARATOR} "))
    }

    pub fn validate(&self, duration_s: f64) -> Result<()> {
        let max = (duration_s / CHUNK_SECONDS).ceil() as usize;
        if self.chunks.len() > max {
            return Err(Error::invalid(format!(
                "transcript has {} chunks, at most {max} fit {duration_s} s",
                self.chunks.len()
            )));
        }
        Ok(())
    }

    pub fn chunk_tokens(&self, i: usize) -> Vec<&str> {
        self.chunks[i].split_whitespace().collect()
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.chunks.iter().flat_map(|c| c.split_whitespace()).collect()
    }

    pub fn full_text(&self) -> String {
        self.tokens().join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.iter().all(|c| c.split_whitespace().next().is_none())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Both partners spoke, so the interaction partner must be the romantic partner.
    BothSpokeImpliesPartner,
    /// The male partner spoke, so his transcript and annotation must show it.
    MaleEvidence,
    /// The female partner spoke, so her transcript and annotation must show it.
    FemaleEvidence,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::BothSpokeImpliesPartner => "a_both_spoke_partner",
            Rule::MaleEvidence => "b_male_evidence",
            Rule::FemaleEvidence => "c_female_evidence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub session_id: String,
    pub rule: Rule,
    pub detail: String,
}

pub fn consistency_checks(
    code: &ContextCode,
    annotation: &AnnotationTrack,
    transcript_m: &Transcript,
    transcript_f: &Transcript,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let sid = &code.session_id;
    if code.male_spoke && code.female_spoke && code.interaction_partner != ROMANTIC_PARTNER {
        out.push(Violation {
            session_id: sid.clone(),
            rule: Rule::BothSpokeImpliesPartner,
            detail: format!("interaction partner is `{}`", code.interaction_partner),
        });
    }
    for (spoke, rule, transcript, label) in [
        (code.male_spoke, Rule::MaleEvidence, transcript_m, SegmentLabel::M),
        (code.female_spoke, Rule::FemaleEvidence, transcript_f, SegmentLabel::F),
    ] {
        if !spoke {
            continue;
        }
        let mut missing = Vec::new();
        if transcript.is_empty() {
            missing.push("transcript is empty".to_string());
        }
        if !annotation.has_label(label) {
            missing.push(format!("no `{label}` segment in annotation"));
        }
        if !missing.is_empty() {
            out.push(Violation {
                session_id: sid.clone(),
                rule,
                detail: missing.join("; "),
            });
        }
    }
    out
}

/// Percentage of non-empty chunks whose window meets at least one segment of
/// the speaker. `None` when no chunk has text.
pub fn chunk_overlap_pct(transcript: &Transcript, annotation: &AnnotationTrack, speaker: Speaker) -> Option<f64> {
    let label = SegmentLabel::of_speaker(speaker);
    let segs: Vec<&AnnotationSegment> = annotation.segments.iter().filter(|s| s.label == label).collect();
    let mut total = 0usize;
    let mut hit = 0usize;
    for (i, chunk) in transcript.chunks.iter().enumerate() {
        if chunk.split_whitespace().next().is_none() {
            continue;
        }
        total += 1;
        let lo = CHUNK_SECONDS * i as f64;
        let hi = lo + CHUNK_SECONDS;
        if segs.iter().any(|s| s.start_s < hi && s.end_s > lo) {
            hit += 1;
        }
    }
    (total > 0).then(|| 100.0 * hit as f64 / total as f64)
}

/// Percentage of whitespace tokens equal to `XY`. `None` without tokens.
pub fn xy_pct(transcript: &Transcript) -> Option<f64> {
    let tokens = transcript.tokens();
    if tokens.is_empty() {
        return None;
    }
    let xy = tokens.iter().filter(|t| **t == INAUDIBLE).count();
    Some(100.0 * xy as f64 / tokens.len() as f64)
}

/// Items × raters matrix of observer codes.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    rows: Vec<Vec<f64>>,
}

impl RatingsMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid("ratings need at least 2 items"));
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(Error::invalid("ratings need at least 2 raters"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: r.len() });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ratings matrix".into()));
        }
        Ok(RatingsMatrix { rows })
    }

    /// Reads a CSV with a header row; the first column is an item id and the
    /// remaining columns are raters.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(1)
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad rating `{f}`"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }

    pub fn raters(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// ICC(2,1) from the two-way ANOVA mean squares:
/// `(MSR − MSE) / (MSR + (k−1)·MSE + k·(MSC − MSE)/n)`.
/// Returns 0 when items do not vary or the denominator vanishes.
pub fn icc(ratings: &RatingsMatrix) -> f64 {
    let n = ratings.items();
    let k = ratings.raters();
    let (nf, kf) = (n as f64, k as f64);
    let grand = ratings.rows.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = ratings.rows.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| ratings.rows.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let ssr = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ssc = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let sst: f64 = ratings.rows.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let sse = (sst - ssr - ssc).max(0.0);
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    let scale = sst.max(f64::MIN_POSITIVE);
    if ssr <= 1e-12 * scale {
        return 0.0;
    }
    let denom = msr + (kf - 1.0) * mse + kf * (msc - mse) / nf;
    if denom.abs() <= f64::EPSILON * msr.abs() {
        return 0.0;
    }
    (msr - mse) / denom
}

/// One row of `qa_report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRow {
    pub session_id: String,
    pub check: String,
    pub value: String,
}

pub fn write_qa_report<W: Write>(writer: W, rows: &[QaRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-session QA rows: malformed annotation lines, rule violations, and the
/// overlap and inaudible-word percentages for each partner.
pub fn session_qa(
    code: Option<&ContextCode>,
    session_id: &str,
    annotation: &ParsedAnnotation,
    transcript_m: &Transcript,
    transcript_f: &Transcript,
) -> Vec<QaRow> {
    let row = |check: String, value: String| QaRow {
        session_id: session_id.to_string(),
        check,
        value,
    };
    let mut out = Vec::new();
    for bad in &annotation.malformed {
        out.push(row(
            "violation:annotation_line".into(),
            format!("line {}: {}", bad.line, bad.reason),
        ));
    }
    if let Some(code) = code {
        for v in consistency_checks(code, &annotation.track, transcript_m, transcript_f) {
            out.push(row(format!("violation:{}", v.rule.as_str()), v.detail));
        }
    }
    let fmt = |x: Option<f64>| x.map_or_else(|| "N/A".to_string(), |v| format!("{v:.4}"));
    for (sp, t) in [(Speaker::M, transcript_m), (Speaker::F, transcript_f)] {
        out.push(row(
            format!("overlap_pct_{}", sp.as_str()),
            fmt(chunk_overlap_pct(t, &annotation.track, sp)),
        ));
        out.push(row(format!("xy_pct_{}", sp.as_str()), fmt(xy_pct(t))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SESSION_SECONDS;

    fn code(m: bool, f: bool, partner: &str) -> ContextCode {
        ContextCode {
            session_id: "s".into(),
            speech_present: m || f,
            male_spoke: m,
            female_spoke: f,
            conversation: m && f,
            partner_conversation: m && f && partner == ROMANTIC_PARTNER,
            interaction_partner: partner.into(),
            location: "home".into(),
            activity: "eating".into(),
            conversation_type: "small talk".into(),
        }
    }

    #[test]
    fn parse_examples() {
        let p = AnnotationTrack::parse("0.0\t12.5\tm\n", SESSION_SECONDS);
        assert_eq!(
            p.track.segments,
            vec![AnnotationSegment { start_s: 0.0, end_s: 12.5, label: SegmentLabel::M }]
        );
        let p = AnnotationTrack::parse("0\t1\tx\n5\t3\tf\n1\t2\tu-tv/radio\n0\t301\tn\n", SESSION_SECONDS);
        assert_eq!(p.track.segments.len(), 1);
        assert_eq!(p.malformed.iter().map(|m| m.line).collect::<Vec<_>>(), vec![1, 2, 4]);
        assert!(AnnotationTrack::parse("", SESSION_SECONDS).track.segments.is_empty());
    }

    #[test]
    fn serialize_round_trip() {
        let text = "0\t12.5\tm\n12.5\t30.25\tf\n40\t300\tu-tv/radio\n";
        let t = AnnotationTrack::parse(text, SESSION_SECONDS).track;
        assert_eq!(t.serialize(), text);
        assert_eq!(AnnotationTrack::parse(&t.serialize(), SESSION_SECONDS).track, t);
    }

    #[test]
    fn consistency_rules() {
        let ann = AnnotationTrack::parse("0\t10\tm\n10\t20\tf\n", SESSION_SECONDS).track;
        let tm = Transcript::parse(Speaker::M, "hallo");
        let tf = Transcript::parse(Speaker::F, "ja");
        assert!(consistency_checks(&code(true, true, ROMANTIC_PARTNER), &ann, &tm, &tf).is_empty());
        let v = consistency_checks(&code(true, true, "friend"), &ann, &tm, &tf);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::BothSpokeImpliesPartner);
        let only_f = AnnotationTrack::parse("10\t20\tf\n", SESSION_SECONDS).track;
        let v = consistency_checks(&code(true, false, "alone"), &only_f, &tm, &tf);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::MaleEvidence);
        let empty = Transcript::parse(Speaker::F, "");
        let v = consistency_checks(&code(false, true, "alone"), &ann, &tm, &empty);
        assert_eq!(v[0].rule, Rule::FemaleEvidence);
    }

    #[test]
    fn overlap_examples() {
        let t = Transcript::parse(Speaker::M, "a // b //  // d");
        let ann = AnnotationTrack::parse("0\t30\tm\n", SESSION_SECONDS).track;
        let pct = chunk_overlap_pct(&t, &ann, Speaker::M).unwrap();
        assert!((pct - 200.0 / 3.0).abs() < 1e-12);
        let none = AnnotationTrack::parse("0\t30\tf\n", SESSION_SECONDS).track;
        assert_eq!(chunk_overlap_pct(&t, &none, Speaker::M), Some(0.0));
        let full = AnnotationTrack::parse("0\t300\tm\n", SESSION_SECONDS).track;
        assert_eq!(chunk_overlap_pct(&t, &full, Speaker::M), Some(100.0));
        // a segment ending exactly at 15 s does not touch chunk 1
        let edge = AnnotationTrack::parse("0\t15\tm\n", SESSION_SECONDS).track;
        let t2 = Transcript::parse(Speaker::M, "// b");
        assert_eq!(chunk_overlap_pct(&t2, &edge, Speaker::M), Some(0.0));
        assert_eq!(chunk_overlap_pct(&Transcript::parse(Speaker::M, " // "), &full, Speaker::M), None);
    }

    #[test]
    fn xy_examples() {
        assert_eq!(xy_pct(&Transcript::parse(Speaker::F, "ich XY gehe XY")), Some(50.0));
        assert_eq!(xy_pct(&Transcript::parse(Speaker::F, "ich gehe")), Some(0.0));
        assert_eq!(xy_pct(&Transcript::parse(Speaker::F, "XY // XY")), Some(100.0));
        assert_eq!(xy_pct(&Transcript::parse(Speaker::F, "")), None);
    }

    #[test]
    fn icc_basics() {
        let perfect = RatingsMatrix::new(vec![vec![1.0, 1.0], vec![3.0, 3.0], vec![2.0, 2.0]]).unwrap();
        assert!((icc(&perfect) - 1.0).abs() < 1e-12);
        let offset = RatingsMatrix::new(vec![vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 4.0]]).unwrap();
        // MSR = 2, MSE = 0, MSC = 1.5 → 2 / (2 + 2·1.5/3) = 2/3
        assert!((icc(&offset) - 2.0 / 3.0).abs() < 1e-12);
        let flat = RatingsMatrix::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(icc(&flat), 0.0);
        assert!(RatingsMatrix::new(vec![vec![1.0, 2.0]]).is_err());
        assert!(RatingsMatrix::new(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn ratings_csv() {
        let m = RatingsMatrix::read_csv("item,r1,r2\na,1,2\nb,3,3\n".as_bytes()).unwrap();
        assert_eq!((m.items(), m.raters()), (2, 2));
    }
}
