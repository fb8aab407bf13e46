use nalgebra::DMatrix;

use super::eigen::{check_square_finite, sym_eigen, SpectralDecomp};
use super::{LinalgError, CLAMP_REL, SYMMETRY_REL_TOL};

/// ε_clamp = 1e-10 · max|λ|.
pub fn clamp_tolerance(d: &SpectralDecomp) -> f64 {
    CLAMP_REL * d.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
}

fn check_psd(d: &SpectralDecomp, tolerance: f64) -> Result<(), LinalgError> {
    let min = d.min_eigenvalue();
    if min < -tolerance {
        return Err(LinalgError::NotPsd {
            min_eigenvalue: min,
            tolerance,
        });
    }
    Ok(())
}

/// Magnitude below which a computed eigenvalue is indistinguishable from
/// zero: `n · ε_mach · max|λ|`.
pub fn rounding_floor(d: &SpectralDecomp) -> f64 {
    d.dim() as f64 * f64::EPSILON * d.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
}

/// Square root from an existing decomposition. Eigenvalues in [−ε_clamp, 0)
/// and those within the rounding floor are zeroed; anything below −ε_clamp is
/// an error.
pub fn psd_sqrt_from(d: &SpectralDecomp) -> Result<DMatrix<f64>, LinalgError> {
    check_psd(d, clamp_tolerance(d))?;
    let floor = rounding_floor(d);
    Ok(d.reconstruct_with(|l| if l <= floor { 0.0 } else { l.sqrt() }))
}

/// Principal square root of a symmetric PSD matrix.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    psd_sqrt_from(&sym_eigen(a)?)
}

/// `Tr((A B)^½)` for PSD `A`, `B`, computed as `Tr((A^½ B A^½)^½)`.
pub fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let n = check_square_finite(a)?;
    let m = check_square_finite(b)?;
    if n != m {
        return Err(LinalgError::DimensionMismatch { left: n, right: m });
    }
    let sqrt_a = psd_sqrt(a)?;
    trace_sqrt_product_with_sqrt(&sqrt_a, b)
}

/// Same as [`trace_sqrt_product`] with `A^½` supplied by the caller, so one
/// square root can serve many right-hand operands.
///
/// `B` is checked for positive semidefiniteness on the range of `A` only.
pub fn trace_sqrt_product_with_sqrt(sqrt_a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let n = check_square_finite(sqrt_a)?;
    let m = check_square_finite(b)?;
    if n != m {
        return Err(LinalgError::DimensionMismatch { left: n, right: m });
    }
    let asym = (b - b.transpose()).norm();
    if asym > SYMMETRY_REL_TOL * b.norm().max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }

    let inner = sqrt_a * b * sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let d = sym_eigen(&inner)?;

    // Rounding in the product sits near n·ε_mach·‖A‖·‖B‖; when A and B are
    // nearly orthogonal that dominates the relative clamp.
    let noise = (n as f64 * f64::EPSILON * sqrt_a.norm_squared() * b.norm()).max(rounding_floor(&d));
    check_psd(&d, clamp_tolerance(&d).max(noise))?;
    let total: f64 = d
        .eigenvalues
        .iter()
        .filter(|&&l| l > noise)
        .map(|l| l.sqrt())
        .sum();
    Ok(total)
}

/// Projects an indefinite unit-diagonal matrix back to a valid correlation
/// matrix: negative eigenvalues are clipped, then rows and columns rescaled to
/// unit diagonal. Returns `None` when `d` is already PSD within ε_clamp;
/// otherwise the repaired matrix and the clipped eigenvalue mass.
pub fn repair_correlation(d: &SpectralDecomp) -> Option<(DMatrix<f64>, f64)> {
    let eps = clamp_tolerance(d);
    if d.min_eigenvalue() >= -eps {
        return None;
    }
    let clipped: f64 = d.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    let mut m = d.reconstruct_with(|l| l.max(0.0));
    let scale: Vec<f64> = (0..m.nrows())
        .map(|i| {
            let diag = m[(i, i)];
            if diag > 0.0 {
                1.0 / diag.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= scale[i] * scale[j];
        }
    }
    for i in 0..m.nrows() {
        if scale[i] > 0.0 {
            m[(i, i)] = 1.0;
        }
    }
    Some((m, clipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_closed_forms() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((psd_sqrt(&i3).unwrap() - &i3).norm() < 1e-15);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let s = psd_sqrt(&d).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-15 && (s[(1, 1)] - 3.0).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);

        // J (4×4 all ones) = 4·uuᵀ with u = 1/2·(1,1,1,1), so J^½ = 2·uuᵀ = J/2.
        let j = DMatrix::from_element(4, 4, 1.0);
        let s = psd_sqrt(&j).unwrap();
        assert!((s - &j * 0.5).norm() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(psd_sqrt(&a), Err(LinalgError::NotPsd { .. })));
        // Tiny negative rounding is clamped.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let s = psd_sqrt(&a).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
    }

    #[test]
    fn trace_sqrt_product_closed_forms() {
        let n = 5;
        let a = DMatrix::<f64>::identity(n, n) / n as f64;
        assert!((trace_sqrt_product(&a, &a).unwrap() - 1.0).abs() < 1e-14);

        // (J/4)(I/4) = J/16 has the single nonzero eigenvalue 1/4; its root is 1/2.
        let j = DMatrix::from_element(4, 4, 0.25);
        let i = DMatrix::<f64>::identity(4, 4) * 0.25;
        assert!((trace_sqrt_product(&j, &i).unwrap() - 0.5).abs() < 1e-14);
        assert!((trace_sqrt_product(&i, &j).unwrap() - 0.5).abs() < 1e-14);

        assert!(matches!(
            trace_sqrt_product(&j, &DMatrix::identity(3, 3)),
            Err(LinalgError::DimensionMismatch { left: 4, right: 3 })
        ));
    }

    #[test]
    fn orthogonal_ranges_give_zero() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 3.0]));
        assert_eq!(trace_sqrt_product(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn repair_restores_unit_diagonal() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let d = sym_eigen(&c).unwrap();
        let (fixed, clipped) = repair_correlation(&d).expect("indefinite input");
        assert!(clipped > 0.0);
        for i in 0..3 {
            assert!((fixed[(i, i)] - 1.0).abs() < 1e-15);
        }
        assert!(sym_eigen(&fixed).unwrap().min_eigenvalue() >= -1e-12);
        assert!(repair_correlation(&sym_eigen(&DMatrix::identity(3, 3)).unwrap()).is_none());
    }
}
