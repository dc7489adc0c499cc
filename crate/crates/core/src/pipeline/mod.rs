//! File formats, the synthetic data generator and the command-line
//! pipeline.
//!
//! Every command is deterministic given its inputs, seed and configuration,
//! and every output file is written atomically.

pub mod cli;
pub mod formats;
pub mod model_file;
pub mod synthetic;

/// Schema tag written into every file this crate produces.
pub const SCHEMA: &str = "lenslike/1";
