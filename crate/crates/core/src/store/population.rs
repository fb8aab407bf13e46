use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use super::grid::{check_pitch, velocity_rank, GridIndex, SampleKey};
use super::StoreError;

pub const MANIFEST_VERSION: u32 = 1;
/// Allowed deviation of a vector's L2 norm from 1 in a normalized set.
pub const NORM_TOLERANCE: f64 = 1e-6;

const DTYPE_F32LE: &str = "f32le";

/// On-disk manifest. Field names are part of the file format.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub dz: usize,
    pub frames_per_sample: usize,
    pub dtype: String,
    pub data_file: String,
    pub instruments: Vec<ManifestInstrument>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestInstrument {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub samples: Vec<ManifestSample>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestSample {
    pub pitch: i64,
    pub velocity: i64,
    pub index: usize,
}

impl Manifest {
    /// Reads and validates a manifest without touching the data file.
    pub fn read(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.version != MANIFEST_VERSION {
            return Err(StoreError::Version {
                found: self.version,
                expected: MANIFEST_VERSION,
            });
        }
        if self.dtype != DTYPE_F32LE {
            return Err(StoreError::Manifest(format!(
                "dtype {:?} unsupported, expected \"f32le\"",
                self.dtype
            )));
        }
        if self.dz == 0 {
            return Err(StoreError::Manifest("dz must be positive".into()));
        }
        if self.frames_per_sample == 0 {
            return Err(StoreError::Manifest("frames_per_sample must be positive".into()));
        }
        let mut ids = HashSet::new();
        for inst in &self.instruments {
            if inst.id.is_empty() {
                return Err(StoreError::Manifest("empty instrument id".into()));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(StoreError::DuplicateInstrument(inst.id.clone()));
            }
            let mut cells = HashSet::new();
            for s in &inst.samples {
                let cell = manifest_cell(s)?;
                if !cells.insert(cell) {
                    return Err(StoreError::DuplicateKey(format!(
                        "({}, {}, {})",
                        inst.id, s.pitch, s.velocity
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.instruments.iter().map(|i| i.samples.len()).sum()
    }

    /// Bytes per record in the data file.
    pub fn record_stride(&self) -> usize {
        self.frames_per_sample * self.dz * 4
    }
}

fn manifest_cell(s: &ManifestSample) -> Result<GridIndex, StoreError> {
    let pitch = u8::try_from(s.pitch).map_err(|_| StoreError::PitchOutOfRange(s.pitch))?;
    check_pitch(pitch)?;
    let velocity = u8::try_from(s.velocity).map_err(|_| StoreError::InvalidVelocity(s.velocity))?;
    velocity_rank(velocity)?;
    GridIndex::from_pitch_velocity(pitch, velocity)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentMeta {
    pub id: String,
    pub family: Option<String>,
    pub source: Option<String>,
}

impl InstrumentMeta {
    pub fn new(id: impl Into<String>) -> Self {
        InstrumentMeta {
            id: id.into(),
            family: None,
            source: None,
        }
    }
}

/// A population of embeddings keyed by (instrument, pitch, velocity).
///
/// Instruments are held sorted by id and each instrument's keys sorted by grid
/// index, so two sets with the same content compare equal regardless of the
/// order they were described in. Column `s·T + t` of `data` is frame `t` of
/// sample `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    dz: usize,
    frames_per_sample: usize,
    instruments: Vec<InstrumentMeta>,
    spans: Vec<Range<usize>>,
    keys: Vec<SampleKey>,
    data: DMatrix<f64>,
    normalized: bool,
}

impl EmbeddingSet {
    /// Builds a set from per-instrument sample lists. Each sample carries
    /// `frames_per_sample · dz` values, frame-major.
    pub fn from_instruments(
        dz: usize,
        frames_per_sample: usize,
        instruments: Vec<(InstrumentMeta, Vec<(GridIndex, Vec<f64>)>)>,
    ) -> Result<Self, StoreError> {
        if dz == 0 || frames_per_sample == 0 {
            return Err(StoreError::Manifest(
                "dz and frames_per_sample must be positive".into(),
            ));
        }
        let mut instruments = instruments;
        instruments.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        for pair in instruments.windows(2) {
            if pair[0].0.id == pair[1].0.id {
                return Err(StoreError::DuplicateInstrument(pair[0].0.id.clone()));
            }
        }
        let total: usize = instruments.iter().map(|(_, s)| s.len()).sum();
        let record_len = dz * frames_per_sample;
        let mut data = DMatrix::<f64>::zeros(dz, total * frames_per_sample);
        let mut keys = Vec::with_capacity(total);
        let mut metas = Vec::with_capacity(instruments.len());
        let mut spans = Vec::with_capacity(instruments.len());
        for (meta, mut samples) in instruments {
            samples.sort_by_key(|(cell, _)| *cell);
            let start = keys.len();
            for (i, (cell, values)) in samples.iter().enumerate() {
                if i > 0 && samples[i - 1].0 == *cell {
                    return Err(StoreError::DuplicateKey(
                        SampleKey::from_cell(meta.id.clone(), *cell).to_string(),
                    ));
                }
                if values.len() != record_len {
                    return Err(StoreError::Manifest(format!(
                        "sample {} has {} values, expected {record_len}",
                        SampleKey::from_cell(meta.id.clone(), *cell),
                        values.len()
                    )));
                }
                let sample = keys.len();
                for t in 0..frames_per_sample {
                    let col = sample * frames_per_sample + t;
                    data.column_mut(col)
                        .copy_from_slice(&values[t * dz..(t + 1) * dz]);
                }
                keys.push(SampleKey::from_cell(meta.id.clone(), *cell));
            }
            spans.push(start..keys.len());
            metas.push(meta);
        }
        let mut set = EmbeddingSet {
            dz,
            frames_per_sample,
            instruments: metas,
            spans,
            keys,
            data,
            normalized: false,
        };
        set.check_finite()?;
        set.normalized = set.max_norm_deviation() <= NORM_TOLERANCE;
        Ok(set)
    }

    fn check_finite(&self) -> Result<(), StoreError> {
        for (c, col) in self.data.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite(self.keys[c / self.frames_per_sample].to_string()));
            }
        }
        Ok(())
    }

    /// Rescales every vector to unit L2 norm. Zero vectors are an error.
    pub fn normalize(&mut self) -> Result<(), StoreError> {
        for c in 0..self.data.ncols() {
            let norm = self.data.column(c).norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(StoreError::ZeroNorm(
                    self.keys[c / self.frames_per_sample].to_string(),
                ));
            }
            self.data.column_mut(c).unscale_mut(norm);
        }
        self.normalized = true;
        Ok(())
    }

    /// Largest |‖z‖₂ − 1| over all vectors (0 for an empty set).
    pub fn max_norm_deviation(&self) -> f64 {
        self.data
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn dz(&self) -> usize {
        self.dz
    }

    pub fn frames_per_sample(&self) -> usize {
        self.frames_per_sample
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of samples (not vectors).
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[SampleKey] {
        &self.keys
    }

    pub fn instruments(&self) -> &[InstrumentMeta] {
        &self.instruments
    }

    pub fn instrument_keys(&self, instrument: usize) -> &[SampleKey] {
        &self.keys[self.spans[instrument].clone()]
    }

    pub fn instrument_position(&self, id: &str) -> Option<usize> {
        self.instruments
            .binary_search_by(|m| m.id.as_str().cmp(id))
            .ok()
    }

    /// All vectors as columns, `dz × (len · frames_per_sample)`.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn vector(&self, sample: usize, frame: usize) -> DVectorView<'_, f64> {
        self.data.column(sample * self.frames_per_sample + frame)
    }

    /// Returns a copy whose data is replaced by `f(data)`; shape must be preserved.
    pub fn map_data(&self, f: impl FnOnce(&DMatrix<f64>) -> DMatrix<f64>) -> Result<Self, StoreError> {
        let data = f(&self.data);
        if data.shape() != self.data.shape() {
            return Err(StoreError::Manifest(format!(
                "mapped data has shape {:?}, expected {:?}",
                data.shape(),
                self.data.shape()
            )));
        }
        let mut out = self.clone();
        out.data = data;
        out.check_finite()?;
        out.normalized = out.max_norm_deviation() <= NORM_TOLERANCE;
        Ok(out)
    }

    /// Restricts the set to one instrument.
    pub fn single_instrument(&self, id: &str) -> Option<Self> {
        let pos = self.instrument_position(id)?;
        let span = self.spans[pos].clone();
        let t = self.frames_per_sample;
        let data = self
            .data
            .columns(span.start * t, span.len() * t)
            .into_owned();
        Some(EmbeddingSet {
            dz: self.dz,
            frames_per_sample: t,
            instruments: vec![self.instruments[pos].clone()],
            spans: vec![0..span.len()],
            keys: self.keys[span].to_vec(),
            data,
            normalized: self.normalized,
        })
    }

    /// Per-instrument slices. Requires single-frame samples.
    pub fn instrument_views(&self) -> Result<Vec<InstrumentView>, StoreError> {
        if self.frames_per_sample != 1 {
            return Err(StoreError::MultiFrame(self.frames_per_sample));
        }
        Ok(self
            .instruments
            .iter()
            .zip(&self.spans)
            .filter(|(_, span)| !span.is_empty())
            .map(|(meta, span)| InstrumentView {
                instrument_id: meta.id.clone(),
                present: self.keys[span.clone()].iter().map(SampleKey::cell).collect(),
                columns: self.data.columns(span.start, span.len()).into_owned(),
            })
            .collect())
    }

    pub fn to_manifest(&self, data_file: &str) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            dz: self.dz,
            frames_per_sample: self.frames_per_sample,
            dtype: DTYPE_F32LE.to_string(),
            data_file: data_file.to_string(),
            instruments: self
                .instruments
                .iter()
                .zip(&self.spans)
                .map(|(meta, span)| ManifestInstrument {
                    id: meta.id.clone(),
                    family: meta.family.clone(),
                    source: meta.source.clone(),
                    samples: span
                        .clone()
                        .map(|s| ManifestSample {
                            pitch: self.keys[s].pitch as i64,
                            velocity: self.keys[s].velocity as i64,
                            index: s,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Per-instrument slice of a single-frame set.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentView {
    pub instrument_id: String,
    /// Present cells, strictly increasing.
    pub present: Vec<GridIndex>,
    /// `dz × N_k`, one column per present cell.
    pub columns: DMatrix<f64>,
}

impl InstrumentView {
    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }
}

/// Loads a manifest and its data file. With `enforce_norm`, every vector is
/// rescaled to unit norm and zero vectors are rejected.
pub fn load_population(manifest_path: &Path, enforce_norm: bool) -> Result<EmbeddingSet, StoreError> {
    let manifest = Manifest::read(manifest_path)?;
    let data_path = resolve_data_path(manifest_path, &manifest.data_file);
    let bytes = fs::read(&data_path).map_err(|e| StoreError::io(&data_path, e))?;

    let records = manifest.sample_count();
    let stride = manifest.record_stride();
    let expected = (records * stride) as u64;
    if bytes.len() as u64 != expected {
        return Err(StoreError::ByteLength {
            expected,
            actual: bytes.len() as u64,
        });
    }

    let mut used = vec![false; records];
    let mut instruments = Vec::with_capacity(manifest.instruments.len());
    for inst in &manifest.instruments {
        let mut samples = Vec::with_capacity(inst.samples.len());
        for s in &inst.samples {
            if s.index >= records || used[s.index] {
                return Err(StoreError::RecordIndex {
                    index: s.index,
                    records,
                });
            }
            used[s.index] = true;
            let record = &bytes[s.index * stride..(s.index + 1) * stride];
            let values = record
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            samples.push((manifest_cell(s)?, values));
        }
        let meta = InstrumentMeta {
            id: inst.id.clone(),
            family: inst.family.clone(),
            source: inst.source.clone(),
        };
        instruments.push((meta, samples));
    }

    let mut set = EmbeddingSet::from_instruments(manifest.dz, manifest.frames_per_sample, instruments)?;
    if enforce_norm {
        set.normalize()?;
    }
    Ok(set)
}

/// Writes `set` as a manifest plus a sibling f32le data file named `data_file`.
pub fn write_population(set: &EmbeddingSet, manifest_path: &Path, data_file: &str) -> Result<(), StoreError> {
    let manifest = set.to_manifest(data_file);
    let mut bytes = Vec::with_capacity(set.data.len() * 4);
    for v in set.data.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let data_path = resolve_data_path(manifest_path, data_file);
    fs::write(&data_path, bytes).map_err(|e| StoreError::io(&data_path, e))?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| StoreError::Manifest(e.to_string()))?;
    fs::write(manifest_path, text + "\n").map_err(|e| StoreError::io(manifest_path, e))
}

fn resolve_data_path(manifest_path: &Path, data_file: &str) -> PathBuf {
    let p = Path::new(data_file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, manifest: &Manifest, data: &[f32]) -> PathBuf {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(&manifest.data_file), bytes).unwrap();
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string(manifest).unwrap()).unwrap();
        path
    }

    fn two_sample_manifest() -> Manifest {
        Manifest {
            version: 1,
            dz: 4,
            frames_per_sample: 1,
            dtype: "f32le".into(),
            data_file: "data.bin".into(),
            instruments: vec![ManifestInstrument {
                id: "a".into(),
                family: Some("bass".into()),
                source: None,
                samples: vec![
                    ManifestSample { pitch: 62, velocity: 100, index: 0 },
                    ManifestSample { pitch: 60, velocity: 25, index: 1 },
                ],
            }],
        }
    }

    #[test]
    fn loads_two_samples_in_canonical_order() {
        let dir = tempfile::tempdir().unwrap();
        let data = [1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let path = write_fixture(dir.path(), &two_sample_manifest(), &data);
        let set = load_population(&path, false).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.keys()[0].pitch, 60);
        assert_eq!(set.keys()[1].pitch, 62);
        // record 1 (pitch 60) comes first after sorting
        assert_eq!(set.vector(0, 0)[1], 2.0);
        assert!(!set.is_normalized());

        let set = load_population(&path, true).unwrap();
        assert!(set.is_normalized());
        assert!((set.vector(0, 0)[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn short_data_file_is_a_byte_length_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = two_sample_manifest();
        let path = write_fixture(dir.path(), &manifest, &[1.0; 8]);
        let mut bytes = fs::read(dir.path().join("data.bin")).unwrap();
        bytes.pop();
        fs::write(dir.path().join("data.bin"), bytes).unwrap();
        assert!(matches!(
            load_population(&path, false),
            Err(StoreError::ByteLength { expected: 32, actual: 31 })
        ));
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();

        let mut m = two_sample_manifest();
        m.instruments[0].samples[0].pitch = 109;
        let path = write_fixture(dir.path(), &m, &[1.0; 8]);
        assert!(matches!(load_population(&path, false), Err(StoreError::PitchOutOfRange(109))));

        let mut m = two_sample_manifest();
        m.instruments[0].samples[1].pitch = 62;
        m.instruments[0].samples[1].velocity = 100;
        let path = write_fixture(dir.path(), &m, &[1.0; 8]);
        assert!(matches!(load_population(&path, false), Err(StoreError::DuplicateKey(_))));

        let mut m = two_sample_manifest();
        m.instruments[0].samples[1].index = 0;
        let path = write_fixture(dir.path(), &m, &[1.0; 8]);
        assert!(matches!(load_population(&path, false), Err(StoreError::RecordIndex { .. })));

        let mut m = two_sample_manifest();
        m.version = 2;
        let path = write_fixture(dir.path(), &m, &[1.0; 8]);
        assert!(matches!(load_population(&path, false), Err(StoreError::Version { .. })));

        fs::write(dir.path().join("bad.json"), "{\"version\": 1").unwrap();
        assert!(matches!(
            load_population(&dir.path().join("bad.json"), false),
            Err(StoreError::Manifest(_))
        ));
    }

    #[test]
    fn zero_vector_rejected_under_enforce_norm() {
        let dir = tempfile::tempdir().unwrap();
        let data = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let path = write_fixture(dir.path(), &two_sample_manifest(), &data);
        assert!(load_population(&path, false).is_ok());
        assert!(matches!(load_population(&path, true), Err(StoreError::ZeroNorm(_))));
    }

    #[test]
    fn views_partition_the_set() {
        let cells = |n: usize| (0..n).map(|i| (GridIndex::new(i).unwrap(), vec![1.0, 0.0])).collect::<Vec<_>>();
        let set = EmbeddingSet::from_instruments(
            2,
            1,
            vec![(InstrumentMeta::new("b"), cells(440)), (InstrumentMeta::new("a"), cells(3))],
        )
        .unwrap();
        let views = set.instrument_views().unwrap();
        assert_eq!(views.len(), 2);
        assert_eq!(views[0].instrument_id, "a");
        assert_eq!(views[0].len(), 3);
        assert_eq!(views[1].len(), 440);
        assert_eq!(views[1].present, GridIndex::all().collect::<Vec<_>>());

        let empty = EmbeddingSet::from_instruments(2, 1, vec![]).unwrap();
        assert!(empty.instrument_views().unwrap().is_empty());

        let framed = EmbeddingSet::from_instruments(
            2,
            2,
            vec![(InstrumentMeta::new("a"), vec![(GridIndex::new(0).unwrap(), vec![1.0; 4])])],
        )
        .unwrap();
        assert!(matches!(framed.instrument_views(), Err(StoreError::MultiFrame(2))));
    }

    #[test]
    fn write_then_load_preserves_content() {
        let dir = tempfile::tempdir().unwrap();
        let set = EmbeddingSet::from_instruments(
            3,
            2,
            vec![(
                InstrumentMeta { id: "x".into(), family: Some("flute".into()), source: Some("acoustic".into()) },
                vec![
                    (GridIndex::new(7).unwrap(), vec![0.5, 0.25, 1.0, -1.0, 2.0, 0.125]),
                    (GridIndex::new(3).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                ],
            )],
        )
        .unwrap();
        let path = dir.path().join("m.json");
        write_population(&set, &path, "m.bin").unwrap();
        let back = load_population(&path, false).unwrap();
        assert_eq!(back, set);
        assert_eq!(fs::metadata(dir.path().join("m.bin")).unwrap().len(), 2 * 2 * 3 * 4);
    }
}
