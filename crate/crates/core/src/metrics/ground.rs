use rayon::prelude::*;

use super::require_normalized;
use crate::linalg::cosine_gram;
use crate::store::{CosineGrid, EmbeddingSet, GroundStats, MeanGrid, GRID_SIZE};
use crate::{Error, Result};

/// Averages per-instrument cosine affinities and per-cell mean embeddings
/// over a reference population.
///
/// Entry (a, b) of the cosine grid averages only the instruments holding both
/// cells; entries no instrument covers stay zero with a zero count. Mean
/// embeddings are renormalized after averaging.
pub fn build_ground_stats(reference: &EmbeddingSet) -> Result<GroundStats> {
    if reference.is_empty() {
        return Err(Error::Invalid("empty reference set".into()));
    }
    require_normalized(reference, "reference")?;
    let views = reference.instrument_views()?;
    let grams = views
        .par_iter()
        .map(|v| cosine_gram(&v.columns))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut sums = vec![0.0f64; GRID_SIZE * GRID_SIZE];
    let mut cosine = CosineGrid::empty();
    let mut means = MeanGrid::empty(reference.dz());
    for (view, gram) in views.iter().zip(&grams) {
        for (i, a) in view.present.iter().enumerate() {
            let row = a.value() * GRID_SIZE;
            for (j, b) in view.present.iter().enumerate() {
                sums[row + b.value()] += gram[(i, j)];
                cosine.count[row + b.value()] += 1;
            }
            let mut col = means.vectors.column_mut(a.value());
            col += view.columns.column(i);
            means.count[a.value()] += 1;
        }
    }

    for a in 0..GRID_SIZE {
        for b in 0..GRID_SIZE {
            let count = cosine.count[a * GRID_SIZE + b];
            if count > 0 {
                cosine.values[(a, b)] = sums[a * GRID_SIZE + b] / count as f64;
            }
        }
    }
    for cell in 0..GRID_SIZE {
        if means.count[cell] == 0 {
            continue;
        }
        let norm = means.vectors.column(cell).norm();
        if norm == 0.0 {
            return Err(Error::Invalid(format!(
                "mean embedding at cell {cell} cancels to zero; cannot renormalize"
            )));
        }
        means.vectors.column_mut(cell).unscale_mut(norm);
        means.available[cell] = true;
    }

    Ok(GroundStats {
        cosine,
        means,
        instruments: views.len() as u32,
    })
}
