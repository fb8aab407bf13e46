use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pair_views;
use crate::report::MetricReport;
use crate::store::{EmbeddingSet, InstrumentView};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClapMode {
    /// Every pair weighs the same: `(1/N)·Σ_k N_k·Tr(A₁₂,k)`.
    PerSample,
    /// Every instrument weighs the same: `(1/K)·Σ_k Tr(A₁₂,k)`.
    PerInstrument,
}

/// Mean cosine between paired reference and test columns of one instrument.
pub(crate) fn paired_mean_cosine(reference: &InstrumentView, test: &InstrumentView) -> f64 {
    clap_score_views(&reference.columns, &test.columns)
}

/// Mean cosine between column `j` of `reference` and column `j` of `test`.
pub fn clap_score_views(reference: &DMatrix<f64>, test: &DMatrix<f64>) -> f64 {
    let total: f64 = reference
        .column_iter()
        .zip(test.column_iter())
        .map(|(a, b)| a.dot(&b) / (a.norm() * b.norm()))
        .sum();
    total / reference.ncols() as f64
}

/// Average CLAP score between paired populations.
pub fn clap_score(reference: &EmbeddingSet, test: &EmbeddingSet, mode: ClapMode) -> Result<MetricReport> {
    if reference.dz() != test.dz() {
        return Err(Error::Invalid(format!(
            "embedding dimension mismatch: {} vs {}",
            reference.dz(),
            test.dz()
        )));
    }
    let ref_views = reference.instrument_views()?;
    let test_views = test.instrument_views()?;
    if ref_views.len() != test_views.len() {
        return Err(Error::Invalid(format!(
            "unpaired populations: {} reference vs {} test instruments",
            ref_views.len(),
            test_views.len()
        )));
    }
    if test_views.is_empty() {
        return Err(Error::Invalid("populations have no instruments".into()));
    }
    let pairs = pair_views(&ref_views, &test_views)?;

    let per_instrument: Vec<(String, usize, f64)> = pairs
        .iter()
        .map(|(r, t)| (t.instrument_id.clone(), t.len(), paired_mean_cosine(r, t)))
        .collect();

    let value = match mode {
        ClapMode::PerSample => {
            let n: usize = per_instrument.iter().map(|(_, nk, _)| nk).sum();
            per_instrument
                .iter()
                .map(|(_, nk, s)| *nk as f64 * s)
                .sum::<f64>()
                / n as f64
        }
        ClapMode::PerInstrument => {
            per_instrument.iter().map(|(_, _, s)| s).sum::<f64>() / per_instrument.len() as f64
        }
    };

    let name = match mode {
        ClapMode::PerSample => "clap_score",
        ClapMode::PerInstrument => "clap_score_star",
    };
    let mut report = MetricReport::new(name, value);
    report.set("mode", mode);
    report.set(
        "aggregation",
        match mode {
            ClapMode::PerSample => "mean over instruments weighted by N_k",
            ClapMode::PerInstrument => "mean over instruments",
        },
    );
    report.set("instruments", per_instrument.len());
    report.set(
        "samples",
        per_instrument.iter().map(|(_, n, _)| n).sum::<usize>(),
    );
    let map: BTreeMap<String, f64> = per_instrument.into_iter().map(|(id, _, s)| (id, s)).collect();
    Ok(report.with_per_instrument(map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{GridIndex, InstrumentMeta};

    fn set(instruments: &[(&str, Vec<Vec<f64>>)]) -> EmbeddingSet {
        EmbeddingSet::from_instruments(
            2,
            1,
            instruments
                .iter()
                .map(|(id, cols)| {
                    (
                        InstrumentMeta::new(*id),
                        cols.iter()
                            .enumerate()
                            .map(|(i, c)| (GridIndex::new(i).unwrap(), c.clone()))
                            .collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_instrument_duality_example() {
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let reference = set(&[("a", vec![e1.clone(), e1.clone()]), ("b", vec![e1.clone()])]);
        let test = set(&[("a", vec![e1.clone(), e1.clone()]), ("b", vec![e2])]);
        let s = clap_score(&reference, &test, ClapMode::PerSample).unwrap();
        let i = clap_score(&reference, &test, ClapMode::PerInstrument).unwrap();
        assert!((s.value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(i.value, 0.5);
    }

    #[test]
    fn identical_and_orthogonal() {
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let a = set(&[("a", vec![e1.clone(), e1.clone()])]);
        let b = set(&[("a", vec![e2.clone(), e2])]);
        for mode in [ClapMode::PerSample, ClapMode::PerInstrument] {
            assert_eq!(clap_score(&a, &a, mode).unwrap().value, 1.0);
            assert_eq!(clap_score(&a, &b, mode).unwrap().value, 0.0);
        }
    }

    #[test]
    fn unpaired_keys_are_rejected() {
        let e1 = vec![1.0, 0.0];
        let a = set(&[("a", vec![e1.clone(), e1.clone()])]);
        let b = set(&[("a", vec![e1.clone()])]);
        let c = set(&[("a", vec![e1.clone(), e1.clone()]), ("b", vec![e1.clone()])]);
        assert!(clap_score(&a, &b, ClapMode::PerSample).is_err());
        assert!(clap_score(&a, &c, ClapMode::PerSample).is_err());
    }
}
