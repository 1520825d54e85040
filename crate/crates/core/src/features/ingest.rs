//! Reading and writing per-speaker feature tables.
//!
//! Layout: header `session_id,speaker,dim,v1,...,vN`, then one row per
//! (session, speaker). Externally computed acoustic (88) and embedding (768)
//! vectors use the same layout as the files the extractor writes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureVector, Modality, Speaker};

pub const EGEMAPS_DIM: usize = 88;
pub const EMBEDDING_DIM: usize = 768;

pub type FeatureKey = (String, Speaker);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub modality: Option<Modality>,
    pub dim: usize,
    pub rows: BTreeMap<FeatureKey, FeatureVector>,
}

impl FeatureTable {
    pub fn new(modality: Modality, dim: usize) -> Self {
        FeatureTable {
            modality: Some(modality),
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, session_id: &str, speaker: Speaker, v: FeatureVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        let key = (session_id.to_string(), speaker);
        if self.rows.contains_key(&key) {
            return Err(Error::Duplicate(format!("{session_id}/{}", speaker.as_str())));
        }
        self.rows.insert(key, v);
        Ok(())
    }

    pub fn get(&self, session_id: &str, speaker: Speaker) -> Result<&FeatureVector> {
        self.rows
            .get(&(session_id.to_string(), speaker))
            .ok_or_else(|| Error::Reference(format!("no features for {session_id}/{}", speaker.as_str())))
    }

    /// Fails if any row refers to a session outside `known`.
    pub fn check_references(&self, known: &BTreeSet<String>) -> Result<()> {
        match self.rows.keys().find(|(s, _)| !known.contains(s)) {
            Some((s, sp)) => Err(Error::Reference(format!(
                "feature row {s}/{} names a session that is not in the corpus",
                sp.as_str()
            ))),
            None => Ok(()),
        }
    }

    pub fn read<R: Read>(reader: R, modality: Modality, dim: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let mut table = FeatureTable::new(modality, dim);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let ctx = |msg: String| Error::invalid(format!("feature table line {line}: {msg}"));
            if rec.len() < 3 {
                return Err(ctx("expected session_id, speaker, dim".into()));
            }
            let session = rec[0].to_string();
            let speaker: Speaker = rec[1].parse().map_err(|_| ctx(format!("bad speaker `{}`", &rec[1])))?;
            let declared: usize = rec[2].trim().parse().map_err(|_| ctx(format!("bad dim `{}`", &rec[2])))?;
            let n = rec.len() - 3;
            if declared != dim || n != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: if declared != dim { declared } else { n },
                }
                .in_stage("ingest", format!("{session}/{}", speaker.as_str())));
            }
            let mut values = Vec::with_capacity(n);
            for field in rec.iter().skip(3) {
                let v: f64 = field.trim().parse().map_err(|_| ctx(format!("bad value `{field}`")))?;
                values.push(v);
            }
            let v = FeatureVector::new(modality, values)
                .map_err(|e| e.in_stage("ingest", format!("{session}/{}", speaker.as_str())))?;
            table.insert(&session, speaker, v)?;
        }
        Ok(table)
    }

    pub fn read_path(path: &Path, modality: Modality, dim: usize) -> Result<Self> {
        Self::read(std::fs::File::open(path)?, modality, dim)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let mut header = vec!["session_id".to_string(), "speaker".into(), "dim".into()];
        header.extend((1..=self.dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for ((session, speaker), v) in &self.rows {
            let mut row = vec![session.clone(), speaker.as_str().to_string(), v.dim().to_string()];
            row.extend(v.values.iter().map(|x| format!("{x:?}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }
}

/// Reads an external 88-value acoustic table.
pub fn ingest_acoustic(path: &Path) -> Result<FeatureTable> {
    FeatureTable::read_path(path, Modality::Acoustic, EGEMAPS_DIM)
}

/// Reads an external 768-value sentence-embedding table.
pub fn ingest_embeddings(path: &Path) -> Result<FeatureTable> {
    FeatureTable::read_path(path, Modality::Linguistic, EMBEDDING_DIM)
}
