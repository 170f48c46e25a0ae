//! File codecs, synthetic fixtures, batch evaluation and checkpoint selection.
//!
//! Everything the command-line front end needs lives here, so the binary is a
//! thin argument parser over these functions.

pub mod codec;
pub mod config;
pub mod eval;
pub mod select;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use codec::{read_mask, read_probmap, write_mask, write_probmap};
pub use config::HarnessConfig;
pub use eval::{evaluate_batch, evaluate_dirs, EvalReport, CSV_HEADER};
pub use select::{read_checkpoint_log, select_checkpoint, CheckpointEntry, DEFAULT_TOP_K};
pub use synth::{synth_mask, SynthSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: dimensions {height}x{width} overflow the supported size")]
    DimensionOverflow {
        path: PathBuf,
        height: u64,
        width: u64,
    },
    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: unsupported maxval {maxval}, only 255 is accepted")]
    UnsupportedMaxval { path: PathBuf, maxval: u64 },
    #[error("{path}: bad magic bytes")]
    BadMagic { path: PathBuf },
    #[error("{path}: value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange {
        path: PathBuf,
        index: usize,
        value: f32,
    },
    #[error("{path}:{line}: {reason}")]
    Config {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] crate::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
