use serde::{Deserialize, Serialize};

use super::moments::moments;
use crate::linalg::trace_sqrt_product;
use crate::report::MetricReport;
use crate::store::EmbeddingSet;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FadOptions {
    /// Use `+Tr((A₁A₂)^½)` instead of the Fréchet `−2·Tr((A₁A₂)^½)`.
    pub paper_literal: bool,
    /// Covariance normalizer is `1/(n − ddof)`.
    pub ddof: usize,
}

/// Fréchet distance between Gaussian fits of two populations, which need not be paired.
pub fn fad(reference: &EmbeddingSet, test: &EmbeddingSet, options: FadOptions) -> Result<MetricReport> {
    if reference.dz() != test.dz() {
        return Err(Error::Invalid(format!(
            "embedding dimension mismatch: {} vs {}",
            reference.dz(),
            test.dz()
        )));
    }
    let m1 = moments(reference, options.ddof)?;
    let m2 = moments(test, options.ddof)?;

    let mean_term = (&m1.mean - &m2.mean).norm_squared();
    let trace_ref = m1.covariance.trace();
    let trace_test = m2.covariance.trace();
    let cross = trace_sqrt_product(&m1.covariance, &m2.covariance)?;
    let cross_coefficient = if options.paper_literal { 1.0 } else { -2.0 };
    let value = mean_term + trace_ref + trace_test + cross_coefficient * cross;

    let mut report = MetricReport::new("fad", value);
    report.set("paper_literal", options.paper_literal);
    report.set("ddof", options.ddof);
    report.set("covariance_normalizer", "1/(n-ddof)");
    report.set("cross_term_coefficient", cross_coefficient);
    report.set("dz", reference.dz());
    report.set("n_effective_reference", m1.n_effective);
    report.set("n_effective_test", m2.n_effective);
    report.set("frames_per_sample_reference", reference.frames_per_sample());
    report.set("frames_per_sample_test", test.frames_per_sample());
    report.set("mean_term", mean_term);
    report.set("trace_reference", trace_ref);
    report.set("trace_test", trace_test);
    report.set("trace_sqrt_product", cross);
    if options.ddof == 0 {
        report.set(
            "ddof_note",
            "population covariance (1/n); common FAD tooling uses ddof=1",
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{GridIndex, InstrumentMeta};

    fn scalar_set(values: &[f64]) -> EmbeddingSet {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (GridIndex::new(i).unwrap(), vec![v]))
            .collect();
        EmbeddingSet::from_instruments(1, 1, vec![(InstrumentMeta::new("a"), samples)]).unwrap()
    }

    #[test]
    fn one_dimensional_closed_forms() {
        let opts = FadOptions::default();
        let a = scalar_set(&[-1.0, 1.0]);
        assert_eq!(fad(&a, &scalar_set(&[1.0, 3.0]), opts).unwrap().value, 4.0);
        assert_eq!(fad(&a, &scalar_set(&[-2.0, 2.0]), opts).unwrap().value, 1.0);
    }

    #[test]
    fn literal_form_on_identical_populations() {
        let a = scalar_set(&[-1.0, 1.0, 2.0]);
        let var = fad(&a, &a, FadOptions::default()).unwrap();
        assert!(var.value.abs() < 1e-12);
        let lit = fad(&a, &a, FadOptions { paper_literal: true, ddof: 0 }).unwrap();
        let trace = lit.config["trace_reference"].as_f64().unwrap();
        assert!((lit.value - 3.0 * trace).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = scalar_set(&[-1.0, 1.0]);
        assert!(fad(&a, &scalar_set(&[1.0]), FadOptions::default()).is_err());
        let wide = EmbeddingSet::from_instruments(
            2,
            1,
            vec![(
                InstrumentMeta::new("a"),
                vec![(GridIndex::new(0).unwrap(), vec![1.0, 0.0]), (GridIndex::new(1).unwrap(), vec![0.0, 1.0])],
            )],
        )
        .unwrap();
        assert!(fad(&a, &wide, FadOptions::default()).is_err());
    }
}
