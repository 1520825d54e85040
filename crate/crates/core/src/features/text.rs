//! Signed feature hashing of transcript text.
//!
//! Tokens are lower-cased alphanumeric runs. The inaudible marker `XY` is
//! dropped. Each token is hashed with 64-bit FNV-1a: the low bits pick the
//! bucket and bit 63 picks the sign. The resulting count vector is scaled to
//! unit L2 norm.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::model::{FeatureVector, Modality};

pub const MIN_HASH_DIM: usize = 8;
pub const INAUDIBLE_TOKEN: &str = "XY";

#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    pub vector: FeatureVector,
    /// No tokens survived tokenisation; the vector is all zeros.
    pub empty: bool,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && *t != INAUDIBLE_TOKEN)
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

/// Bucket index and sign for one token.
pub fn hash_token(token: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a(token);
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    ((h % dim as u64) as usize, sign)
}

pub fn hashed_text_features(text: &str, dim: usize) -> Result<TextFeatures> {
    if dim < MIN_HASH_DIM {
        return Err(Error::OutOfRange {
            what: "hashed text dimension",
            value: dim as f64,
        });
    }
    let mut values = vec![0.0; dim];
    let tokens = tokenize(text);
    for tok in &tokens {
        let (i, s) = hash_token(tok, dim);
        values[i] += s;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(TextFeatures {
        vector: FeatureVector::new(Modality::Linguistic, values)?,
        empty: tokens.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference FNV-1a written out from the published constants.
    fn fnv1a_reference(bytes: &[u8]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    #[test]
    fn hash_matches_reference() {
        for t in ["gut", "schlecht", "", "ich"] {
            assert_eq!(fnv1a(t), fnv1a_reference(t.as_bytes()));
        }
    }

    #[test]
    fn repeated_token_same_vector() {
        let a = hashed_text_features("gut gut", 64).unwrap().vector;
        let b = hashed_text_features("gut", 64).unwrap().vector;
        assert_eq!(a, b);
        let (i, s) = hash_token("gut", 64);
        let h = fnv1a_reference(b"gut");
        assert_eq!(i, (h % 64) as usize);
        assert_eq!(b.values[i], if h >> 63 == 0 { 1.0 } else { -1.0 });
        assert_eq!(s, b.values[i]);
    }

    #[test]
    fn empty_and_inaudible_text() {
        let e = hashed_text_features("", 16).unwrap();
        assert!(e.empty);
        assert!(e.vector.values.iter().all(|v| *v == 0.0));
        assert!(hashed_text_features("XY XY", 16).unwrap().empty);
        assert!(hashed_text_features("x", 4).is_err());
    }

    #[test]
    fn deterministic_and_normalised() {
        let t = "Ich gehe heute XY einkaufen // und dann nach Hause";
        let a = hashed_text_features(t, 768).unwrap().vector;
        let b = hashed_text_features(t, 768).unwrap().vector;
        assert_eq!(a, b);
        let n: f64 = a.values.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(tokenize("Gut, gut! XY"), vec!["gut", "gut"]);
    }
}
