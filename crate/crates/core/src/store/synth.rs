//! Deterministic synthetic populations for tests and demos.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use super::grid::{GridIndex, GRID_SIZE};
use super::population::{EmbeddingSet, InstrumentMeta};
use super::StoreError;

const FAMILIES: [&str; 11] = [
    "bass", "brass", "flute", "guitar", "keyboard", "mallet", "organ", "reed", "string",
    "synth_lead", "vocal",
];
const SOURCES: [&str; 3] = ["acoustic", "electronic", "synthetic"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SynthPreset {
    /// Independent standard-normal vectors, normalized.
    IidGaussianNormalized,
    /// One random center per instrument plus isotropic noise of the given scale, normalized.
    ClusteredPerInstrument { spread: f64 },
    /// One random vector per instrument, copied to every cell.
    ReplicatedSingleVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Coverage {
    Full,
    /// Each instrument keeps a uniformly random subset of this many cells.
    Count { cells: usize },
    /// Every instrument holds exactly these cells.
    Cells { cells: Vec<GridIndex> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub preset: SynthPreset,
    pub dz: usize,
    pub instruments: usize,
    pub coverage: Coverage,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), StoreError> {
        if self.dz == 0 {
            return Err(StoreError::Preset("dz must be positive".into()));
        }
        if self.instruments == 0 {
            return Err(StoreError::Preset("need at least one instrument".into()));
        }
        if let SynthPreset::ClusteredPerInstrument { spread } = self.preset {
            if !(spread.is_finite() && spread >= 0.0) {
                return Err(StoreError::Preset(format!("spread {spread} must be finite and ≥ 0")));
            }
        }
        match &self.coverage {
            Coverage::Full => {}
            Coverage::Count { cells } if *cells == 0 || *cells > GRID_SIZE => {
                return Err(StoreError::Preset(format!("cell count {cells} outside 1..=440")));
            }
            Coverage::Count { .. } => {}
            Coverage::Cells { cells } if cells.is_empty() => {
                return Err(StoreError::Preset("empty cell list".into()));
            }
            Coverage::Cells { .. } => {}
        }
        Ok(())
    }
}

fn gaussian(rng: &mut SplitMix64, dz: usize) -> Vec<f64> {
    (0..dz).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Generates a unit-norm population. The same spec and seed always give a
/// bit-identical set.
pub fn synth_population(spec: &SynthSpec, seed: u64) -> Result<EmbeddingSet, StoreError> {
    spec.validate()?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut instruments = Vec::with_capacity(spec.instruments);
    for k in 0..spec.instruments {
        let cells: Vec<GridIndex> = match &spec.coverage {
            Coverage::Full => GridIndex::all().collect(),
            Coverage::Count { cells } => {
                let mut picked: Vec<usize> = sample(&mut rng, GRID_SIZE, *cells).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| GridIndex::new(i).unwrap()).collect()
            }
            Coverage::Cells { cells } => cells.clone(),
        };
        let samples = match spec.preset {
            SynthPreset::IidGaussianNormalized => cells
                .iter()
                .map(|&c| (c, normalized(gaussian(&mut rng, spec.dz))))
                .collect(),
            SynthPreset::ClusteredPerInstrument { spread } => {
                let center = normalized(gaussian(&mut rng, spec.dz));
                cells
                    .iter()
                    .map(|&c| {
                        let noise = gaussian(&mut rng, spec.dz);
                        let v = center
                            .iter()
                            .zip(&noise)
                            .map(|(m, n)| m + spread * n / (spec.dz as f64).sqrt())
                            .collect();
                        (c, normalized(v))
                    })
                    .collect()
            }
            SynthPreset::ReplicatedSingleVector => {
                let v = normalized(gaussian(&mut rng, spec.dz));
                cells.iter().map(|&c| (c, v.clone())).collect()
            }
        };
        let meta = InstrumentMeta {
            id: format!("inst{k:03}"),
            family: Some(FAMILIES[k % FAMILIES.len()].to_string()),
            source: Some(SOURCES[k % SOURCES.len()].to_string()),
        };
        instruments.push((meta, samples));
    }
    let mut set = EmbeddingSet::from_instruments(spec.dz, 1, instruments)?;
    set.normalize()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicated_vector_gives_identical_columns() {
        let spec = SynthSpec {
            preset: SynthPreset::ReplicatedSingleVector,
            dz: 8,
            instruments: 1,
            coverage: Coverage::Count { cells: 4 },
        };
        let set = synth_population(&spec, 3).unwrap();
        let view = &set.instrument_views().unwrap()[0];
        assert_eq!(view.len(), 4);
        let gram = view.columns.transpose() * &view.columns;
        assert!(gram.iter().all(|&g| (g - 1.0).abs() < 1e-14));
    }

    #[test]
    fn iid_pairwise_cosines_concentrate_at_zero() {
        let spec = SynthSpec {
            preset: SynthPreset::IidGaussianNormalized,
            dz: 512,
            instruments: 1,
            coverage: Coverage::Full,
        };
        let set = synth_population(&spec, 11).unwrap();
        let z = set.data();
        let gram = z.transpose() * z;
        let n = gram.nrows();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..i {
                sum += gram[(i, j)];
            }
        }
        let mean = sum / (n * (n - 1) / 2) as f64;
        assert!(mean.abs() < 0.01, "mean cosine {mean}");
        assert!(set.max_norm_deviation() < 1e-12);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SynthSpec {
            preset: SynthPreset::ClusteredPerInstrument { spread: 0.5 },
            dz: 16,
            instruments: 3,
            coverage: Coverage::Count { cells: 20 },
        };
        let a = synth_population(&spec, 42).unwrap();
        let b = synth_population(&spec, 42).unwrap();
        assert!(a.data().iter().zip(b.data().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.keys(), b.keys());
        let c = synth_population(&spec, 43).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn invalid_presets() {
        let mut spec = SynthSpec {
            preset: SynthPreset::ClusteredPerInstrument { spread: -1.0 },
            dz: 4,
            instruments: 1,
            coverage: Coverage::Full,
        };
        assert!(synth_population(&spec, 0).is_err());
        spec.preset = SynthPreset::IidGaussianNormalized;
        spec.coverage = Coverage::Count { cells: 441 };
        assert!(synth_population(&spec, 0).is_err());
        spec.coverage = Coverage::Full;
        spec.dz = 0;
        assert!(synth_population(&spec, 0).is_err());
    }
}
