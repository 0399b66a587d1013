//! Complex linear algebra used by the zero-forcing precoder.

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

/// Ratio `min |R_ii| / max |R_ii|` below which the channel is treated as
/// rank deficient.
pub const SINGULAR_RCOND: f64 = 1e-10;

/// Minimum-norm right inverse `W` of `G^T`, i.e. `G^T W = I` with
/// `W = G* (G^T G*)^-1`.
///
/// `G` is `M x K` with `K <= M`. Computed from a thin QR factorization of
/// `G* = Q R` as `W = Q R^-H`, which avoids squaring the condition number
/// through the Gram matrix.
pub fn right_pseudo_inverse(g: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (m, k) = g.shape();
    if k == 0 {
        return Ok(DMatrix::zeros(m, 0));
    }
    if k > m {
        return Err(Error::Singular(format!("{k} users cannot be zero-forced with {m} APs")));
    }
    if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("non-finite channel estimate".into()));
    }
    let qr = g.map(|z| z.conj()).qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].norm()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min / max < SINGULAR_RCOND {
        return Err(Error::Singular(format!("rank-deficient Gram matrix (rcond {:.3e})", min / max)));
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(qr.q() * r_inv.adjoint())
}

/// Frobenius norm of `G^T W - I`.
pub fn zf_residual(g: &DMatrix<C64>, w: &DMatrix<C64>) -> f64 {
    let k = g.ncols();
    (g.transpose() * w - DMatrix::<C64>::identity(k, k)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream_rng};

    #[test]
    fn identity_channel() {
        let g = DMatrix::<C64>::identity(3, 3);
        let w = right_pseudo_inverse(&g).unwrap();
        assert!((w - DMatrix::<C64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn scaled_identity() {
        let g = DMatrix::<C64>::identity(2, 2) * C64::new(2.0, 0.0);
        let w = right_pseudo_inverse(&g).unwrap();
        assert!((w - DMatrix::<C64>::identity(2, 2) * C64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn random_tall_instance() {
        let mut rng = stream_rng(3, &[]);
        let g = DMatrix::from_fn(4, 2, |_, _| complex_normal(&mut rng, 1.0));
        let w = right_pseudo_inverse(&g).unwrap();
        assert!(zf_residual(&g, &w) < 1e-10);
        // Minimum norm: W lies in the column space of G*.
        let gc = g.map(|z| z.conj());
        let proj = &gc * (gc.adjoint() * &gc).try_inverse().unwrap() * gc.adjoint();
        assert!((&proj * &w - &w).norm() < 1e-10);
    }

    #[test]
    fn single_column_matches_vector_formula() {
        let mut rng = stream_rng(4, &[]);
        let g = DMatrix::from_fn(5, 1, |_, _| complex_normal(&mut rng, 2.0));
        let w = right_pseudo_inverse(&g).unwrap();
        let col: Vec<(f64, f64)> = g.iter().map(|z| (z.re, z.im)).collect();
        let expected = cellfree_oracles::precoding::vector_pseudo_inverse(&col);
        for (a, b) in w.iter().zip(expected) {
            assert!((a.re - b.0).abs() < 1e-12 && (a.im - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let col = DMatrix::from_fn(3, 1, |i, _| C64::new(i as f64 + 1.0, 0.5));
        let g = DMatrix::from_fn(3, 2, |i, _| col[(i, 0)]);
        assert!(matches!(right_pseudo_inverse(&g), Err(Error::Singular(_))));
        let wide = DMatrix::<C64>::zeros(2, 3);
        assert!(matches!(right_pseudo_inverse(&wide), Err(Error::Singular(_))));
    }

    #[test]
    fn empty_user_set() {
        let w = right_pseudo_inverse(&DMatrix::<C64>::zeros(4, 0)).unwrap();
        assert_eq!(w.shape(), (4, 0));
    }
}
