//! Cyclic Jacobi eigensolver for dense symmetric matrices.
//!
//! Above [`WARM_START_MIN`] rows the sweeps start from the basis found by
//! nalgebra's tridiagonal QR solver instead of the identity. The rotated matrix
//! is then already nearly diagonal, so the sweeps and the convergence test are
//! unchanged but finish after zero to two passes instead of about ten.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{LinalgError, JACOBI_MAX_SWEEPS, JACOBI_REL_TOL, MAX_DIM, SYMMETRY_REL_TOL};

/// Eigen-decomposition `A = V·diag(λ)·Vᵀ` with eigenvalues in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.get(0).copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().last().unwrap_or(0.0)
    }

    /// `V·diag(f(λ))·Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            scaled.column_mut(j).scale_mut(w);
        }
        let mut out = scaled * self.eigenvectors.transpose();
        super::symmetrize_in_place(&mut out);
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|l| l)
    }
}

pub(crate) fn check_square_finite(a: &DMatrix<f64>) -> Result<usize, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(LinalgError::Empty);
    }
    if rows > MAX_DIM {
        return Err(LinalgError::TooLarge(rows));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(rows)
}

/// Matrices with more rows than this are warm-started.
pub const WARM_START_MIN: usize = 32;

/// Decomposes a symmetric matrix. Asymmetry up to 1e-9 relative is averaged
/// away; anything larger is rejected.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SpectralDecomp, LinalgError> {
    let n = check_square_finite(a)?;
    let scale = a.norm();
    let asym = (a - a.transpose()).norm();
    if asym > SYMMETRY_REL_TOL * scale.max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }

    let sym = (a + a.transpose()) * 0.5;
    let warm = if n > WARM_START_MIN { warm_basis(&sym) } else { None };
    jacobi(&sym, warm, scale)
}

/// Orthonormal basis from the QR solver, or `None` if it did not converge.
fn warm_basis(sym: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 10_000).map(|e| e.eigenvectors)
}

/// Cold start when `basis` is `None`; otherwise sweeps `Bᵀ·A·B` and
/// accumulates rotations onto `B`.
pub(crate) fn jacobi(sym: &DMatrix<f64>, basis: Option<DMatrix<f64>>, scale: f64) -> Result<SpectralDecomp, LinalgError> {
    let n = sym.nrows();
    // Row-major working copy; `vt` holds eigenvectors as rows.
    let mut m = vec![0.0; n * n];
    let mut vt = vec![0.0; n * n];
    let warm = basis.is_some();
    match basis {
        None => {
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = sym[(i, j)];
                }
                vt[i * n + i] = 1.0;
            }
        }
        Some(b) => {
            let rotated = b.transpose() * sym * &b;
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = 0.5 * (rotated[(i, j)] + rotated[(j, i)]);
                    vt[i * n + j] = b[(j, i)];
                }
            }
        }
    }

    let tol = JACOBI_REL_TOL * scale;
    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m, n);
        if off <= tol {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off_diagonal: off,
            });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut m, &mut vt, n, p, q, warm || sweeps >= 4);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| m[i * n + i]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| vt[order[c] * n + r]);
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += m[i * n + j] * m[i * n + j];
        }
    }
    (2.0 * sum).sqrt()
}

/// One Jacobi rotation annihilating `m[p][q]`.
#[inline]
fn rotate(m: &mut [f64], vt: &mut [f64], n: usize, p: usize, q: usize, late: bool) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    // After a few sweeps an element negligible against both diagonal entries is dropped.
    let g = 100.0 * apq.abs();
    if late && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
        m[p * n + q] = 0.0;
        m[q * n + p] = 0.0;
        return;
    }

    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta.is_infinite() { 0.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[p * n + k];
        let akq = m[q * n + k];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        m[p * n + k] = new_p;
        m[q * n + k] = new_q;
        m[k * n + p] = new_p;
        m[k * n + q] = new_q;
    }

    let (head, tail) = vt.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (vp, vq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let a = *vp;
        let b = *vq;
        *vp = c * a - s * b;
        *vq = s * a + c * b;
    }
}
