//! Ground-truth grid statistics and their on-disk bundle.
//!
//! Bundle layout: the 8-byte magic `INSTREV1`, a little-endian u32 sidecar
//! length, a JSON sidecar describing the blocks, then the raw blocks in the
//! order listed by the sidecar. A SHA-256 over the block bytes guards against
//! corruption.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{GridIndex, GRID_SIZE};
use super::StoreError;

pub const STATS_MAGIC: &[u8; 8] = b"INSTREV1";
const STATS_VERSION: u32 = 1;

/// Averaged per-instrument cosine affinities on the 440-cell grid, unit-diagonal convention.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineGrid {
    /// 440 × 440, symmetric; zero where `count` is zero.
    pub values: DMatrix<f64>,
    /// Number of instruments contributing to each entry, row-major 440 × 440.
    pub count: Vec<u32>,
}

impl CosineGrid {
    pub fn empty() -> Self {
        CosineGrid {
            values: DMatrix::zeros(GRID_SIZE, GRID_SIZE),
            count: vec![0; GRID_SIZE * GRID_SIZE],
        }
    }

    #[inline]
    pub fn count_at(&self, a: GridIndex, b: GridIndex) -> u32 {
        self.count[a.value() * GRID_SIZE + b.value()]
    }

    /// Cells observed in at least one instrument.
    pub fn present(&self, cell: GridIndex) -> bool {
        self.count_at(cell, cell) > 0
    }

    /// Submatrix over `cells × cells`.
    pub fn restrict(&self, cells: &[GridIndex]) -> DMatrix<f64> {
        DMatrix::from_fn(cells.len(), cells.len(), |i, j| {
            self.values[(cells[i].value(), cells[j].value())]
        })
    }

    /// Number of entries in `cells × cells` with zero co-presence.
    pub fn masked_entries(&self, cells: &[GridIndex]) -> usize {
        cells
            .iter()
            .flat_map(|&a| cells.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| self.count_at(a, b) == 0)
            .count()
    }

    fn validate(&self) -> Result<(), StoreError> {
        if self.values.shape() != (GRID_SIZE, GRID_SIZE) || self.count.len() != GRID_SIZE * GRID_SIZE {
            return Err(StoreError::Stats("cosine grid has wrong shape".into()));
        }
        Ok(())
    }
}

/// Per-cell mean embeddings, renormalized to unit length.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanGrid {
    /// `dz × 440`; unavailable columns are zero.
    pub vectors: DMatrix<f64>,
    pub available: Vec<bool>,
    pub count: Vec<u32>,
}

impl MeanGrid {
    pub fn empty(dz: usize) -> Self {
        MeanGrid {
            vectors: DMatrix::zeros(dz, GRID_SIZE),
            available: vec![false; GRID_SIZE],
            count: vec![0; GRID_SIZE],
        }
    }

    pub fn dz(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn available_cells(&self) -> impl Iterator<Item = GridIndex> + '_ {
        GridIndex::all().filter(|c| self.available[c.value()])
    }

    fn validate(&self) -> Result<(), StoreError> {
        if self.vectors.ncols() != GRID_SIZE
            || self.available.len() != GRID_SIZE
            || self.count.len() != GRID_SIZE
        {
            return Err(StoreError::Stats("mean grid has wrong shape".into()));
        }
        Ok(())
    }
}

/// Ground-truth statistics learned from a reference population.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundStats {
    pub cosine: CosineGrid,
    pub means: MeanGrid,
    /// Number of reference instruments the grids were averaged over.
    pub instruments: u32,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    grid: usize,
    dz: usize,
    instruments: u32,
    blocks: Vec<BlockInfo>,
    sha256: String,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct BlockInfo {
    name: String,
    dtype: String,
    len: usize,
}

fn block(name: &str, dtype: &str, len: usize) -> BlockInfo {
    BlockInfo {
        name: name.into(),
        dtype: dtype.into(),
        len,
    }
}

fn expected_blocks(dz: usize) -> Vec<BlockInfo> {
    vec![
        block("cosine.values", "f64le", GRID_SIZE * GRID_SIZE),
        block("cosine.count", "u32le", GRID_SIZE * GRID_SIZE),
        block("mean.vectors", "f64le", dz * GRID_SIZE),
        block("mean.count", "u32le", GRID_SIZE),
        block("mean.available", "u8", GRID_SIZE),
    ]
}

pub fn save_stats(stats: &GroundStats, path: &Path) -> Result<(), StoreError> {
    stats.cosine.validate()?;
    stats.means.validate()?;
    let dz = stats.means.dz();

    let mut payload = Vec::new();
    // DMatrix storage is column-major; the symmetric values block is written as stored.
    for v in stats.cosine.values.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for c in &stats.cosine.count {
        payload.extend_from_slice(&c.to_le_bytes());
    }
    for v in stats.means.vectors.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for c in &stats.means.count {
        payload.extend_from_slice(&c.to_le_bytes());
    }
    payload.extend(stats.means.available.iter().map(|&a| a as u8));

    let sidecar = Sidecar {
        version: STATS_VERSION,
        grid: GRID_SIZE,
        dz,
        instruments: stats.instruments,
        blocks: expected_blocks(dz),
        sha256: hex::encode(Sha256::digest(&payload)),
    };
    let sidecar = serde_json::to_vec(&sidecar).map_err(|e| StoreError::Stats(e.to_string()))?;

    let mut out = Vec::with_capacity(12 + sidecar.len() + payload.len());
    out.extend_from_slice(STATS_MAGIC);
    out.extend_from_slice(&(sidecar.len() as u32).to_le_bytes());
    out.extend_from_slice(&sidecar);
    out.extend_from_slice(&payload);
    fs::write(path, out).map_err(|e| StoreError::io(path, e))
}

pub fn load_stats(path: &Path) -> Result<GroundStats, StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != STATS_MAGIC {
        return Err(StoreError::Stats("missing INSTREV1 magic".into()));
    }
    let side_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let side_end = 12usize
        .checked_add(side_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| StoreError::Stats("truncated sidecar".into()))?;
    let sidecar: Sidecar = serde_json::from_slice(&bytes[12..side_end])
        .map_err(|e| StoreError::Stats(format!("sidecar: {e}")))?;
    if sidecar.version != STATS_VERSION {
        return Err(StoreError::Version {
            found: sidecar.version,
            expected: STATS_VERSION,
        });
    }
    if sidecar.grid != GRID_SIZE || sidecar.blocks != expected_blocks(sidecar.dz) {
        return Err(StoreError::Stats("unexpected block layout".into()));
    }
    let payload = &bytes[side_end..];
    let expected_len = GRID_SIZE * GRID_SIZE * 12 + sidecar.dz * GRID_SIZE * 8 + GRID_SIZE * 5;
    if payload.len() != expected_len {
        return Err(StoreError::ByteLength {
            expected: expected_len as u64,
            actual: payload.len() as u64,
        });
    }
    if hex::encode(Sha256::digest(payload)) != sidecar.sha256 {
        return Err(StoreError::Checksum);
    }

    let mut reader = Reader { bytes: payload };
    let values = DMatrix::from_vec(GRID_SIZE, GRID_SIZE, reader.f64s(GRID_SIZE * GRID_SIZE));
    let count = reader.u32s(GRID_SIZE * GRID_SIZE);
    let vectors = DMatrix::from_vec(sidecar.dz, GRID_SIZE, reader.f64s(sidecar.dz * GRID_SIZE));
    let mean_count = reader.u32s(GRID_SIZE);
    let available = reader.take(GRID_SIZE).iter().map(|&b| b != 0).collect();

    Ok(GroundStats {
        cosine: CosineGrid { values, count },
        means: MeanGrid {
            vectors,
            available,
            count: mean_count,
        },
        instruments: sidecar.instruments,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        head
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        self.take(n * 8)
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect()
    }

    fn u32s(&mut self, n: usize) -> Vec<u32> {
        self.take(n * 4)
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect()
    }
}
