//! Embedding populations, the canonical grid, and persisted statistics.

mod grid;
mod population;
mod stats;
mod synth;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use grid::{
    check_pitch, velocity_rank, GridIndex, SampleKey, GRID_SIZE, PITCH_COUNT, PITCH_MAX,
    PITCH_MIN, VELOCITIES, VELOCITY_COUNT,
};
pub use population::{
    load_population, write_population, EmbeddingSet, InstrumentMeta, InstrumentView, Manifest,
    ManifestInstrument, ManifestSample, MANIFEST_VERSION, NORM_TOLERANCE,
};
pub use stats::{load_stats, save_stats, CosineGrid, GroundStats, MeanGrid, STATS_MAGIC};
pub use synth::{synth_population, Coverage, SynthPreset, SynthSpec};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("pitch {0} outside the 88-key range 21..=108")]
    PitchOutOfRange(i64),
    #[error("velocity {0} is not one of 25, 50, 75, 100, 127")]
    InvalidVelocity(i64),
    #[error("grid index {0} outside 0..440")]
    GridIndexOutOfRange(usize),
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("duplicate instrument id {0:?}")]
    DuplicateInstrument(String),
    #[error("data file holds {actual} bytes, manifest requires {expected}")]
    ByteLength { expected: u64, actual: u64 },
    #[error("record index {index} invalid for {records} records")]
    RecordIndex { index: usize, records: usize },
    #[error("zero-norm embedding at {0}")]
    ZeroNorm(String),
    #[error("non-finite value in embedding at {0}")]
    NonFinite(String),
    #[error("operation requires frames_per_sample = 1, set has {0}")]
    MultiFrame(usize),
    #[error("invalid stats bundle: {0}")]
    Stats(String),
    #[error("checksum mismatch in stats bundle")]
    Checksum,
    #[error("invalid synthesis preset: {0}")]
    Preset(String),
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}
