//! Dense symmetric kernels: Gram matrices, eigendecomposition, PSD square
//! roots, `Tr((AB)^½)`, and whitening/coloration.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; embeddings are stored one per column.

mod eigen;
mod gram;
mod sqrt;

use thiserror::Error;

pub use eigen::{sym_eigen, SpectralDecomp};
pub use gram::{color_to_target, cosine_gram, numerical_rank};
pub use sqrt::{
    clamp_tolerance, psd_sqrt, psd_sqrt_from, rounding_floor, repair_correlation, trace_sqrt_product,
    trace_sqrt_product_with_sqrt,
};

/// Jacobi stops once the off-diagonal Frobenius norm is below this fraction of ‖A‖_F.
pub const JACOBI_REL_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const SYMMETRY_REL_TOL: f64 = 1e-9;
/// Negative eigenvalues down to −`CLAMP_REL`·λ_max are rounding noise and
/// clamp to zero; anything lower marks an indefinite matrix.
pub const CLAMP_REL: f64 = 1e-10;
/// Eigenvalues below `RANK_REL`·λ_max do not count toward numerical rank.
pub const RANK_REL: f64 = 1e-8;
/// Columns fed to `cosine_gram` must have norm within this of 1.
pub const UNIT_NORM_TOL: f64 = 1e-6;
pub const MAX_DIM: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("empty matrix")]
    Empty,
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("matrix is {rows}×{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix dimension {0} exceeds the supported maximum of 4096")]
    TooLarge(usize),
    #[error("matrix not symmetric (‖A − Aᵀ‖_F = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("Jacobi did not converge after {sweeps} sweeps (off-diagonal norm {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },
    #[error("matrix not positive semidefinite: eigenvalue {min_eigenvalue:e} below −{tolerance:e}")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("column {column} has norm {norm}, expected unit norm")]
    NotNormalized { column: usize, norm: f64 },
    #[error("rank deficient: Gram rank {gram_rank} < target rank {target_rank}")]
    RankDeficient { gram_rank: usize, target_rank: usize },
}

pub(crate) fn symmetrize_in_place(m: &mut nalgebra::DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
