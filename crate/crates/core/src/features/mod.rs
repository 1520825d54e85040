//! Per-modality feature extraction and feature-level fusion.

pub mod acoustic;
pub mod ingest;
pub mod stats;
pub mod text;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureVector, Modality};

pub use acoustic::{gemaps_lite, partner_speech_slices, slice_waveform, AcousticFeatures, GemapsLite, ACOUSTIC_LITE_DIM};
pub use ingest::{ingest_acoustic, ingest_embeddings, FeatureTable, EGEMAPS_DIM, EMBEDDING_DIM};
pub use stats::{magnitude, movement_features, physio_features, stat10};
pub use text::{hashed_text_features, TextFeatures};

pub const PHYSIO_DIM: usize = 10;
pub const MOVEMENT_DIM: usize = 20;

/// Concatenated feature vector with the column range contributed by each modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedVector {
    pub values: Vec<f64>,
    pub spans: Vec<(Modality, Range<usize>)>,
}

impl FusedVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.spans.iter().map(|(m, _)| *m).collect()
    }
}

/// Concatenates vectors in canonical modality order (physio, movement,
/// acoustic, linguistic), regardless of the order they are passed in.
pub fn fuse(vectors: &[&FeatureVector]) -> Result<FusedVector> {
    if vectors.is_empty() {
        return Err(Error::invalid("fusion needs at least one feature vector"));
    }
    let mut sorted: Vec<&FeatureVector> = vectors.to_vec();
    sorted.sort_by_key(|v| v.modality);
    if let Some(w) = sorted.windows(2).find(|w| w[0].modality == w[1].modality) {
        return Err(Error::Duplicate(format!("modality {} given twice", w[0].modality)));
    }
    let mut values = Vec::with_capacity(sorted.iter().map(|v| v.dim()).sum());
    let mut spans = Vec::with_capacity(sorted.len());
    for v in sorted {
        let start = values.len();
        values.extend_from_slice(&v.values);
        spans.push((v.modality, start..values.len()));
    }
    Ok(FusedVector { values, spans })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(m: Modality, n: usize) -> FeatureVector {
        FeatureVector::new(m, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn fusion_dimensions_and_order() {
        let p = fv(Modality::Physio, 10);
        let m = fv(Modality::Movement, 20);
        let a = fv(Modality::Acoustic, 46);
        let l = fv(Modality::Linguistic, 768);
        assert_eq!(fuse(&[&p, &m]).unwrap().dim(), 30);
        let all = fuse(&[&l, &a, &m, &p]).unwrap();
        assert_eq!(all.dim(), 844);
        assert_eq!(
            all.spans,
            vec![
                (Modality::Physio, 0..10),
                (Modality::Movement, 10..30),
                (Modality::Acoustic, 30..76),
                (Modality::Linguistic, 76..844),
            ]
        );
        let single = fuse(&[&a]).unwrap();
        assert_eq!(single.values, a.values);
    }

    #[test]
    fn fusion_errors() {
        let p = fv(Modality::Physio, 10);
        assert!(matches!(fuse(&[&p, &p]), Err(Error::Duplicate(_))));
        assert!(fuse(&[]).is_err());
    }
}
