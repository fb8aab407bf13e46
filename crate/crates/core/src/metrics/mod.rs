//! Objective scores over embedding populations.
//!
//! Per-instrument affinities use the unit-diagonal convention: the Gram `C`
//! of an instrument with `N_k` present cells stands for the affinity `C/N_k`,
//! and that factor is applied inside each score.

mod clap;
mod fad;
mod ground;
mod moments;
mod tc;

pub use clap::{clap_score, clap_score_views, ClapMode};
pub use fad::{fad, FadOptions};
pub use ground::build_ground_stats;
pub use moments::{moments, PopulationMoments};
pub use tc::{tc, TcReference, COVERAGE_WARN_FRACTION};

use crate::store::{EmbeddingSet, InstrumentView};
use crate::{Error, Result};

fn require_normalized(set: &EmbeddingSet, role: &str) -> Result<()> {
    if set.is_normalized() {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "{role} population is not unit-normalized (max norm deviation {:.3e})",
            set.max_norm_deviation()
        )))
    }
}

/// Matches test instruments to reference instruments by id and requires
/// identical present-cell sets.
fn pair_views<'a>(
    reference: &'a [InstrumentView],
    test: &'a [InstrumentView],
) -> Result<Vec<(&'a InstrumentView, &'a InstrumentView)>> {
    test.iter()
        .map(|t| {
            let r = reference
                .iter()
                .find(|r| r.instrument_id == t.instrument_id)
                .ok_or_else(|| {
                    Error::Invalid(format!(
                        "instrument {:?} missing from the reference population",
                        t.instrument_id
                    ))
                })?;
            if r.present != t.present {
                return Err(Error::Invalid(format!(
                    "instrument {:?}: sample sets differ ({} reference vs {} test cells)",
                    t.instrument_id,
                    r.present.len(),
                    t.present.len()
                )));
            }
            Ok((r, t))
        })
        .collect()
}
