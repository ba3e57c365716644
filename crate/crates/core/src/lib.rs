//! Camera sensor-fingerprint toolkit.
//!
//! Extracts photo-response non-uniformity fingerprints from raw rasters,
//! matches them, and binds them to photos through a fuzzy-extractor
//! signature scheme and a statement-checking proof scheme.

pub mod cli;
pub mod compress;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod fuzzy;
pub mod matching;
pub mod model;
pub mod pipeline;
pub mod sim;
mod spectral;
pub mod util;
pub mod zkp;

pub use error::{Error, Result};
