//! Objective evaluation of prompt-generated sample-based instruments.
//!
//! Populations of embeddings keyed by (instrument, pitch, velocity) go in;
//! Fréchet distance, timbral-consistency scores, average CLAP scores and their
//! text-prompt variants come out. The [`conditioning`] module simulates the
//! three ways training examples pair a conditioning sample with a target.

pub mod conditioning;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod refsynth;
pub mod report;
pub mod selftest;
pub mod store;

use thiserror::Error;

pub use conditioning::PairingError;
pub use linalg::LinalgError;
pub use store::StoreError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Numerical failures (indefinite input, rank deficiency, non-convergence)
    /// as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Linalg(
                LinalgError::NotPsd { .. }
                    | LinalgError::RankDeficient { .. }
                    | LinalgError::NoConvergence { .. }
            )
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
