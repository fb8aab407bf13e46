use nalgebra::{DMatrix, DVector};

use crate::linalg::symmetrize_in_place;
use crate::store::EmbeddingSet;
use crate::{Error, Result};

/// Gaussian fit of a population: every frame of every sample is one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// T·N
    pub n_effective: usize,
}

/// Mean and covariance with normalizer `1/(n − ddof)`.
pub fn moments(set: &EmbeddingSet, ddof: usize) -> Result<PopulationMoments> {
    let data = set.data();
    let n = data.ncols();
    if n < 2 || n <= ddof {
        return Err(Error::Invalid(format!(
            "population too small: {n} vectors with ddof {ddof}"
        )));
    }
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut covariance = &centered * centered.transpose() / (n - ddof) as f64;
    symmetrize_in_place(&mut covariance);
    Ok(PopulationMoments {
        mean,
        covariance,
        n_effective: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{clamp_tolerance, sym_eigen};
    use crate::store::{synth_population, Coverage, GridIndex, InstrumentMeta, SynthPreset, SynthSpec};

    fn scalar_set(values: &[f64]) -> EmbeddingSet {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (GridIndex::new(i).unwrap(), vec![v]))
            .collect();
        EmbeddingSet::from_instruments(1, 1, vec![(InstrumentMeta::new("a"), samples)]).unwrap()
    }

    #[test]
    fn two_points() {
        let m = moments(&scalar_set(&[-1.0, 1.0]), 0).unwrap();
        assert_eq!(m.mean[0], 0.0);
        assert_eq!(m.covariance[(0, 0)], 1.0);
        let m = moments(&scalar_set(&[-1.0, 1.0]), 1).unwrap();
        assert_eq!(m.covariance[(0, 0)], 2.0);
    }

    #[test]
    fn constant_population_has_zero_covariance() {
        let m = moments(&scalar_set(&[0.5, 0.5, 0.5]), 0).unwrap();
        assert_eq!(m.covariance[(0, 0)], 0.0);
    }

    #[test]
    fn too_small() {
        assert!(moments(&scalar_set(&[1.0]), 0).is_err());
        assert!(moments(&scalar_set(&[1.0, 2.0]), 2).is_err());
    }

    #[test]
    fn covariance_is_psd() {
        let spec = SynthSpec {
            preset: SynthPreset::IidGaussianNormalized,
            dz: 24,
            instruments: 2,
            coverage: Coverage::Count { cells: 10 },
        };
        let set = synth_population(&spec, 5).unwrap();
        let m = moments(&set, 0).unwrap();
        let d = sym_eigen(&m.covariance).unwrap();
        assert!(d.min_eigenvalue() >= -clamp_tolerance(&d));
        assert_eq!(m.n_effective, 20);
    }
}
