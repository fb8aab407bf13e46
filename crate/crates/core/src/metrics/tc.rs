use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{pair_views, require_normalized};
use crate::linalg::{
    cosine_gram, psd_sqrt, psd_sqrt_from, repair_correlation, sym_eigen, trace_sqrt_product,
    trace_sqrt_product_with_sqrt,
};
use crate::report::MetricReport;
use crate::store::{CosineGrid, EmbeddingSet, GridIndex};
use crate::{Error, Result};

/// A coverage warning is raised when more than this fraction of the needed
/// ground-grid entries has no contributing instrument.
pub const COVERAGE_WARN_FRACTION: f64 = 0.01;

/// What test instruments are compared against.
#[derive(Clone, Copy, Debug)]
pub enum TcReference<'a> {
    /// Per-instrument affinities of a paired reference population.
    Paired(&'a EmbeddingSet),
    /// The averaged ground-truth grid.
    Ground(&'a CosineGrid),
}

struct GroundSqrt {
    sqrt: DMatrix<f64>,
    masked: usize,
    clipped: Option<f64>,
}

/// Timbral consistency: `(1/K)·Σ_k Tr((A₁,k·A₂₂,k)^½)`.
///
/// With a paired reference `A₁,k` is the reference instrument's own affinity;
/// with ground statistics it is the ground grid restricted to the test
/// instrument's cells. Each score lies in [0, 1] for unit-norm populations.
pub fn tc(reference: TcReference<'_>, test: &EmbeddingSet) -> Result<MetricReport> {
    require_normalized(test, "test")?;
    let test_views = test.instrument_views()?;
    if test_views.is_empty() {
        return Err(Error::Invalid("test population has no instruments".into()));
    }

    let star = matches!(reference, TcReference::Ground(_));
    let mut report;
    let scores: Vec<f64>;

    match reference {
        TcReference::Paired(reference) => {
            require_normalized(reference, "reference")?;
            let ref_views = reference.instrument_views()?;
            let pairs = pair_views(&ref_views, &test_views)?;
            scores = pairs
                .par_iter()
                .map(|(r, t)| {
                    let c1 = cosine_gram(&r.columns)?;
                    let c2 = cosine_gram(&t.columns)?;
                    Ok(trace_sqrt_product(&c1, &c2)? / t.len() as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            report = MetricReport::new("tc_clap", mean(&scores));
            report.set("reference", "paired");
        }
        TcReference::Ground(ground) => {
            for view in &test_views {
                if let Some(missing) = view.present.iter().find(|&&c| !ground.present(c)) {
                    return Err(Error::Invalid(format!(
                        "instrument {:?}: cell {missing} absent from ground statistics",
                        view.instrument_id
                    )));
                }
            }
            // Instruments sharing a cell set share one square root.
            let mut unique: Vec<&[GridIndex]> = test_views.iter().map(|v| v.present.as_slice()).collect();
            unique.sort();
            unique.dedup();
            let roots: HashMap<&[GridIndex], GroundSqrt> = unique
                .par_iter()
                .map(|cells| Ok((*cells, ground_sqrt(ground, cells)?)))
                .collect::<Result<_>>()?;

            scores = test_views
                .par_iter()
                .map(|t| {
                    let c2 = cosine_gram(&t.columns)?;
                    let root = &roots[t.present.as_slice()];
                    Ok(trace_sqrt_product_with_sqrt(&root.sqrt, &c2)? / t.len() as f64)
                })
                .collect::<Result<Vec<_>>>()?;

            report = MetricReport::new("tc_clap_star", mean(&scores));
            report.set("reference", "ground");
            let needed: usize = test_views.iter().map(|v| v.len() * v.len()).sum();
            let masked: usize = test_views.iter().map(|v| roots[v.present.as_slice()].masked).sum();
            let fraction = masked as f64 / needed as f64;
            report.set("masked_entries", masked);
            report.set("needed_entries", needed);
            if fraction > COVERAGE_WARN_FRACTION {
                report.warn(format!(
                    "{:.2}% of needed ground-grid entries have no contributing instrument and count as 0",
                    100.0 * fraction
                ));
            }
            let repaired: Vec<&str> = test_views
                .iter()
                .filter(|v| roots[v.present.as_slice()].clipped.is_some())
                .map(|v| v.instrument_id.as_str())
                .collect();
            if !repaired.is_empty() {
                report.set("psd_repaired_instruments", &repaired);
                report.warn(format!(
                    "restricted ground grid was indefinite for {} instrument(s); projected to the nearest correlation matrix",
                    repaired.len()
                ));
            }
        }
    }

    let per_instrument: BTreeMap<String, f64> = test_views
        .iter()
        .zip(&scores)
        .map(|(v, &s)| (v.instrument_id.clone(), s))
        .collect();
    report.set("star", star);
    report.set("instruments", scores.len());
    report.set("aggregation", "mean over instruments");
    Ok(report.with_per_instrument(per_instrument))
}

fn ground_sqrt(ground: &CosineGrid, cells: &[GridIndex]) -> Result<GroundSqrt> {
    let restricted = ground.restrict(cells);
    let masked = ground.masked_entries(cells);
    let d = sym_eigen(&restricted)?;
    match repair_correlation(&d) {
        None => Ok(GroundSqrt {
            sqrt: psd_sqrt_from(&d)?,
            masked,
            clipped: None,
        }),
        Some((fixed, clipped)) => Ok(GroundSqrt {
            sqrt: psd_sqrt(&fixed)?,
            masked,
            clipped: Some(clipped),
        }),
    }
}

// Fixed left-to-right order keeps the aggregate reproducible.
fn mean(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}
