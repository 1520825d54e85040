//! Dyadic smartwatch emotion recognition: protocol simulator, preprocessing,
//! multimodal features, gender-specific classifiers and couple-disjoint
//! cross-validation.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod learn;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod qa;
pub mod sim;

pub use error::{Error, Result};
