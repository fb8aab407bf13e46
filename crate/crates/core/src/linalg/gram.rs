use nalgebra::DMatrix;

use super::eigen::{sym_eigen, SpectralDecomp};
use super::sqrt::psd_sqrt_from;
use super::{symmetrize_in_place, LinalgError, RANK_REL, UNIT_NORM_TOL};

fn check_unit_columns(z: &DMatrix<f64>) -> Result<(), LinalgError> {
    for (column, c) in z.column_iter().enumerate() {
        let norm = c.norm();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
            return Err(LinalgError::NotNormalized { column, norm });
        }
    }
    Ok(())
}

/// Cosine Gram of unit-norm columns, with an exact unit diagonal.
///
/// No mean is subtracted. Dividing by the column count gives the per-instrument
/// affinity whose trace is 1. Entries are true cosines rather than raw dot
/// products: overwriting the diagonal of `ZᵀZ` with ones when norms are only
/// 1 ± 1e-7 (as after an f32 round trip) would push zero eigenvalues negative.
pub fn cosine_gram(z: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_unit_columns(z)?;
    let mut c = z.tr_mul(z);
    let inv: Vec<f64> = (0..c.nrows()).map(|i| 1.0 / c[(i, i)].sqrt()).collect();
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            c[(i, j)] *= inv[i] * inv[j];
        }
    }
    symmetrize_in_place(&mut c);
    for i in 0..c.nrows() {
        c[(i, i)] = 1.0;
    }
    Ok(c)
}

/// Count of eigenvalues above `RANK_REL · λ_max`.
pub fn numerical_rank(d: &SpectralDecomp) -> usize {
    let max = d.max_eigenvalue();
    if max <= 0.0 {
        return 0;
    }
    d.eigenvalues.iter().filter(|&&l| l > RANK_REL * max).count()
}

/// Recolors the columns of `z` so their Gram matrix equals `target`.
///
/// The columns are whitened with the pseudo-inverse square root of `G = ZᵀZ`
/// and colored with `target^½`: `Z' = Z·G^{-½}·C^{½}`. When `G` is rank
/// deficient and the range of `target` is not contained in the range of `G`,
/// the whitened basis is paired with the eigenvectors of `target` instead, which
/// still reproduces `target` exactly.
pub fn color_to_target(z: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_unit_columns(z)?;
    let n = z.ncols();
    if target.nrows() != n || target.ncols() != n {
        return Err(LinalgError::DimensionMismatch {
            left: n,
            right: target.nrows(),
        });
    }

    let mut gram = z.tr_mul(z);
    symmetrize_in_place(&mut gram);
    let dg = sym_eigen(&gram)?;
    let dc = sym_eigen(target)?;
    let sqrt_target = psd_sqrt_from(&dc)?;

    let gram_rank = numerical_rank(&dg);
    let target_rank = numerical_rank(&dc);
    if gram_rank < target_rank {
        return Err(LinalgError::RankDeficient {
            gram_rank,
            target_rank,
        });
    }

    let cutoff = RANK_REL * dg.max_eigenvalue();
    let inv_sqrt = dg.reconstruct_with(|l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 });
    let whitened = z * inv_sqrt;

    if gram_rank == n {
        return Ok(whitened * sqrt_target);
    }
    // Projector onto range(G) = WᵀW.
    let projector = whitened.tr_mul(&whitened);
    let leak = (&sqrt_target - &projector * &sqrt_target).norm();
    if leak <= RANK_REL * sqrt_target.norm().max(1.0) {
        return Ok(whitened * sqrt_target);
    }

    // u_i = Z g_i / √λ_i are orthonormal; pair them with target eigenvectors.
    let mut out = DMatrix::zeros(z.nrows(), n);
    for j in 0..target_rank {
        let lambda_g = dg.eigenvalues[j];
        let u = z * dg.eigenvectors.column(j) / lambda_g.sqrt();
        let mu = dc.eigenvalues[j].max(0.0).sqrt();
        out += u * (dc.eigenvectors.column(j).transpose() * mu);
    }
    Ok(out)
}
