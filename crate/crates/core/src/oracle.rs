//! Independent reference computations used to cross-check the kernels.
//!
//! Nothing here shares a code path with the production routines: the
//! trace-of-square-root oracle takes the nonsymmetric product `AB` through
//! nalgebra's Schur decomposition, grid averages are formed densely, and
//! Fréchet distances in one dimension use the closed form.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::store::{EmbeddingSet, GridIndex, MeanGrid, GRID_SIZE};

/// `Tr((AB)^½)` from the eigenvalues of the nonsymmetric product `AB`.
///
/// For PSD operands those eigenvalues are real and nonnegative; rounding noise
/// in imaginary parts and small negative real parts is discarded.
pub fn trace_sqrt_product_nonsymmetric(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let product = a * b;
    product
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.max(0.0).sqrt())
        .sum()
}

/// Closed-form Fréchet distance between two 1-D samples (population variance).
pub fn frechet_1d(x: &[f64], y: &[f64]) -> f64 {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        (mean, var)
    };
    let (m1, v1) = stats(x);
    let (m2, v2) = stats(y);
    (m1 - m2).powi(2) + v1 + v2 - 2.0 * (v1 * v2).sqrt()
}

/// Plain average of per-instrument Gram matrices `ZᵀZ`, assuming every
/// instrument covers the full grid.
pub fn dense_ground_average(set: &EmbeddingSet) -> Option<DMatrix<f64>> {
    let k = set.instruments().len();
    if k == 0 {
        return None;
    }
    let mut sum = DMatrix::zeros(GRID_SIZE, GRID_SIZE);
    for i in 0..k {
        if set.instrument_keys(i).len() != GRID_SIZE {
            return None;
        }
        let start: usize = (0..i).map(|j| set.instrument_keys(j).len()).sum();
        let z = set.data().columns(start, GRID_SIZE);
        sum += z.transpose() * z;
    }
    Some(sum / k as f64)
}

/// Exhaustive argmax of cosine similarity over available templates; ties go
/// to the lowest cell index.
pub fn brute_force_template_match(prompt: &DVector<f64>, templates: &MeanGrid) -> Option<GridIndex> {
    let mut best: Option<(GridIndex, f64)> = None;
    for cell in GridIndex::all() {
        if !templates.available[cell.value()] {
            continue;
        }
        let t = templates.vectors.column(cell.value());
        let cos = prompt.dot(&t) / (prompt.norm() * t.norm());
        match best {
            Some((_, b)) if cos <= b => {}
            _ => best = Some((cell, cos)),
        }
    }
    best.map(|(c, _)| c)
}

/// Pearson chi-square statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Upper quantile of the chi-square distribution.
pub fn chi_square_quantile(dof: f64, p: f64) -> f64 {
    ChiSquared::new(dof).expect("positive dof").inverse_cdf(p)
}
