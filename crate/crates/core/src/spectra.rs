//! Principal coordinate system of the data: covariance eigendecomposition,
//! rotation, ZCA whitening and principal-component projections.
//!
//! The covariance is the unnormalized `X Xᵀ`, so eigenvalues scale with `n`.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::SymmetricEigen;

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::linalg::{asymmetry, max_abs, symmetrize};
use crate::{Matrix, Vector};

/// Largest tolerated `|S − Sᵀ|`, relative to `max(1, max |S|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Default regularizer for [`zca_whiten`].
pub const DEFAULT_WHITEN_EPS: f64 = 1e-12;

/// `X Xᵀ` for a `q × n` data matrix.
pub fn covariance(x: &Matrix) -> Result<Matrix> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::Empty("covariance needs a non-empty data matrix"));
    }
    Ok(x * x.transpose())
}

/// Orthonormal eigenvectors (columns of `u`) and non-increasing eigenvalues
/// `d` of a symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    u: Matrix,
    d: Vec<f64>,
}

impl SpectralBasis {
    /// Basis of the data covariance `X Xᵀ`.
    pub fn of_data(x: &Matrix) -> Result<Self> {
        eigendecompose(&covariance(x)?)
    }

    /// Identity basis with the given (already sorted) values.
    pub fn identity(d: Vec<f64>) -> Self {
        let q = d.len();
        Self {
            u: Matrix::identity(q, q),
            d,
        }
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// The first `p` eigenvectors, `q × p`.
    pub fn top(&self, p: usize) -> Matrix {
        self.u.columns(0, p).into_owned()
    }

    /// `U diag(d) Uᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = &self.u * Matrix::from_diagonal(&Vector::from_column_slice(&self.d));
        scaled * self.u.transpose()
    }
}

/// Eigendecomposition with a deterministic layout.
///
/// Eigenvalues are sorted non-increasing with a stable order among ties, tiny
/// negative roundoff is clamped to zero, and every eigenvector is flipped so
/// that its largest-magnitude entry is positive.
pub fn eigendecompose(sigma: &Matrix) -> Result<SpectralBasis> {
    ensure_dim("eigendecompose (square)", sigma.nrows(), sigma.ncols())?;
    if sigma.nrows() == 0 {
        return Err(Error::Empty("eigendecompose needs a non-empty matrix"));
    }
    let scale = max_abs(sigma).max(1.0);
    let asym = asymmetry(sigma);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let q = sigma.nrows();
    let eig = SymmetricEigen::new(symmetrize(sigma));

    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    // Roundoff from the solver sits at a few ulps of the largest eigenvalue.
    let clamp_tol = 1e-12 * scale * q as f64;
    let mut u = Matrix::zeros(q, q);
    let mut d = Vec::with_capacity(q);
    for (dst, &src) in order.iter().enumerate() {
        let mut value = eig.eigenvalues[src];
        if value < 0.0 {
            if value < -clamp_tol {
                return Err(Error::NotPositiveSemidefinite(value));
            }
            value = 0.0;
        }
        d.push(value);

        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..q {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        u.set_column(dst, &(col * sign));
    }
    Ok(SpectralBasis { u, d })
}

/// Which side of a matrix carries the `q` dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `A · U`, for matrices with `q` columns such as a compact representation.
    Right,
    /// `Uᵀ · A`, for matrices with `q` rows such as a data matrix.
    Left,
}

/// Expresses `a` in principal coordinates.
pub fn rotate_to_principal(a: &Matrix, basis: &SpectralBasis, side: Side) -> Result<Matrix> {
    match side {
        Side::Right => {
            ensure_dim("rotate_to_principal (columns)", basis.dim(), a.ncols())?;
            Ok(a * basis.u())
        }
        Side::Left => {
            ensure_dim("rotate_to_principal (rows)", basis.dim(), a.nrows())?;
            Ok(basis.u().transpose() * a)
        }
    }
}

/// Inverse of [`rotate_to_principal`].
pub fn rotate_from_principal(a: &Matrix, basis: &SpectralBasis, side: Side) -> Result<Matrix> {
    match side {
        Side::Right => {
            ensure_dim("rotate_from_principal (columns)", basis.dim(), a.ncols())?;
            Ok(a * basis.u().transpose())
        }
        Side::Left => {
            ensure_dim("rotate_from_principal (rows)", basis.dim(), a.nrows())?;
            Ok(basis.u() * a)
        }
    }
}

/// A ZCA whitening transform fitted on one data matrix and applicable to
/// others (e.g. fitted on train, applied to train and test).
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    transform: Matrix,
}

impl Whitener {
    /// Fits `U diag(1/√(d_i + eps)) Uᵀ` on the covariance of `x`.
    pub fn fit(x: &Matrix, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(invalid("whitening eps must be positive"));
        }
        let basis = SpectralBasis::of_data(x)?;
        let inv_sqrt: Vector =
            Vector::from_iterator(basis.dim(), basis.values().iter().map(|&d| 1.0 / libm::sqrt(d + eps)));
        let transform = basis.u() * Matrix::from_diagonal(&inv_sqrt) * basis.u().transpose();
        Ok(Self { transform })
    }

    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        ensure_dim("whitener input rows", self.transform.ncols(), x.nrows())?;
        Ok(&self.transform * x)
    }
}

/// `U diag(1/√(d_i + eps)) Uᵀ X`: the data with (near) identity covariance.
pub fn zca_whiten(x: &Matrix, eps: f64) -> Result<Matrix> {
    Whitener::fit(x, eps)?.apply(x)
}

/// `U_P U_Pᵀ X`: projection onto the span of the first `p` principal components.
pub fn project_to_top_pcs(x: &Matrix, basis: &SpectralBasis, p: usize) -> Result<Matrix> {
    let q = basis.dim();
    if p == 0 || p > q {
        return Err(Error::OutOfRange {
            what: "projection dimension",
            index: p,
            lo: 1,
            hi: q,
        });
    }
    ensure_dim("project_to_top_pcs rows", q, x.nrows())?;
    let up = basis.top(p);
    let coords = up.transpose() * x;
    Ok(up * coords)
}

/// Multiplies the principal coordinates in `range` (0-based, half-open) by
/// `factor`; with `renormalize`, every feature is then shifted and scaled to
/// mean 0 and standard deviation 1 across examples.
pub fn amplify_pcs(
    x: &Matrix,
    basis: &SpectralBasis,
    range: Range<usize>,
    factor: f64,
    renormalize: bool,
) -> Result<Matrix> {
    let q = basis.dim();
    ensure_dim("amplify_pcs rows", q, x.nrows())?;
    if range.is_empty() {
        return Err(Error::Empty("amplification range"));
    }
    if range.end > q {
        return Err(Error::OutOfRange {
            what: "amplification range end",
            index: range.end,
            lo: 1,
            hi: q,
        });
    }
    if !(factor > 0.0) {
        return Err(invalid("amplification factor must be positive"));
    }
    let mut coords = basis.u().transpose() * x;
    for j in range {
        coords.row_mut(j).scale_mut(factor);
    }
    let out = basis.u() * coords;
    Ok(if renormalize {
        normalize_features(&out)
    } else {
        out
    })
}

/// Shifts and scales every row (feature) to mean 0 and standard deviation 1
/// across examples (population std). Constant features are only centred.
pub fn normalize_features(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    let n = x.ncols() as f64;
    if x.ncols() == 0 {
        return out;
    }
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
        let std = libm::sqrt(row.norm_squared() / n);
        if std > 0.0 {
            row /= std;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_orthonormal(q: usize, seed: u64) -> Matrix {
        randn(q, q, seed).qr().q()
    }

    #[test]
    fn covariance_small_cases() {
        let x = Matrix::identity(2, 2);
        assert_eq!(covariance(&x).unwrap(), Matrix::identity(2, 2));
        let x = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            covariance(&x).unwrap(),
            Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(
            covariance(&Matrix::zeros(3, 0)),
            Err(Error::Empty("covariance needs a non-empty data matrix"))
        );
    }

    #[test]
    fn covariance_matches_outer_product_sum() {
        let x = randn(5, 20, 1);
        let mut oracle = Matrix::zeros(5, 5);
        for i in 0..20 {
            for a in 0..5 {
                for b in 0..5 {
                    oracle[(a, b)] += x[(a, i)] * x[(b, i)];
                }
            }
        }
        assert!(max_abs(&(covariance(&x).unwrap() - oracle)) < 1e-12);
    }

    #[test]
    fn eigendecompose_diagonal_inputs() {
        let b = eigendecompose(&Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(b.values(), &[4.0, 1.0]);
        assert_eq!(b.u(), &Matrix::identity(2, 2));

        let b = eigendecompose(&Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0])).unwrap();
        assert_eq!(b.values(), &[4.0, 1.0]);
        assert_eq!(b.u(), &Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn eigendecompose_reconstructs_random_psd() {
        let g = randn(6, 9, 2);
        let sigma = &g * g.transpose();
        let b = eigendecompose(&sigma).unwrap();
        let rel = (b.reconstruct() - &sigma).norm() / sigma.norm();
        assert!(rel < 1e-8, "rel = {rel}");
        let ortho = b.u().transpose() * b.u() - Matrix::identity(6, 6);
        assert!(max_abs(&ortho) < 1e-10);
        assert!(b.values().windows(2).all(|w| w[0] >= w[1]));
        for col in b.u().column_iter() {
            let pivot = col.iter().cloned().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(eigendecompose(&s), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn rotation_identity_and_round_trip() {
        let a = randn(3, 4, 3);
        let id = SpectralBasis::identity(alloc::vec![4.0, 3.0, 2.0, 1.0]);
        assert_eq!(rotate_to_principal(&a, &id, Side::Right).unwrap(), a);

        let x = randn(4, 30, 4);
        let basis = SpectralBasis::of_data(&x).unwrap();
        let rotated = rotate_to_principal(&x, &basis, Side::Left).unwrap();
        let back = rotate_from_principal(&rotated, &basis, Side::Left).unwrap();
        assert!(max_abs(&(back - &x)) < 1e-10);

        // data in principal coordinates has diagonal covariance diag(d)
        let cov = covariance(&rotated).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_column_slice(basis.values()));
        assert!(max_abs(&(cov - expected)) < 1e-8);

        assert!(matches!(
            rotate_to_principal(&randn(3, 5, 5), &basis, Side::Right),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn whitening_fixed_point_and_anisotropic_case() {
        // rows of an orthonormal matrix: X Xᵀ = I already
        let g = random_orthonormal(6, 5).rows(0, 2).into_owned();
        let w = zca_whiten(&g, 1e-14).unwrap();
        assert!(max_abs(&(w - &g)) < 1e-6);

        let x = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]) * &g;
        let w = zca_whiten(&x, 1e-12).unwrap();
        let cov = covariance(&w).unwrap();
        assert!(max_abs(&(cov - Matrix::identity(2, 2))) < 1e-6);
    }

    #[test]
    fn whitening_rank_deficient_stays_finite() {
        let mut x = randn(4, 10, 6);
        let dup = x.row(0).into_owned();
        x.set_row(1, &dup);
        let w = zca_whiten(&x, 1e-6).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
        assert!(zca_whiten(&x, 0.0).is_err());
    }

    #[test]
    fn projection_cases() {
        let x = randn(4, 12, 7);
        let basis = SpectralBasis::of_data(&x).unwrap();
        let full = project_to_top_pcs(&x, &basis, 4).unwrap();
        assert!(max_abs(&(full - &x)) < 1e-10);

        let once = project_to_top_pcs(&x, &basis, 2).unwrap();
        let twice = project_to_top_pcs(&once, &basis, 2).unwrap();
        assert!(max_abs(&(twice - &once)) < 1e-12);
        assert!(once.norm() <= x.norm());

        let diag = SpectralBasis::identity(alloc::vec![4.0, 1.0]);
        let y = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p1 = project_to_top_pcs(&y, &diag, 1).unwrap();
        assert_eq!(p1, Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));

        assert!(project_to_top_pcs(&x, &basis, 0).is_err());
        assert!(project_to_top_pcs(&x, &basis, 5).is_err());
    }

    #[test]
    fn amplification_cases() {
        let x = randn(3, 8, 8);
        let basis = SpectralBasis::of_data(&x).unwrap();
        let same = amplify_pcs(&x, &basis, 0..3, 1.0, false).unwrap();
        assert!(max_abs(&(same - &x)) < 1e-12);

        let diag = SpectralBasis::identity(alloc::vec![3.0, 2.0, 1.0]);
        let amp = amplify_pcs(&x, &diag, 0..1, 10.0, false).unwrap();
        for i in 0..8 {
            assert!((amp[(0, i)] - 10.0 * x[(0, i)]).abs() < 1e-12);
            assert_eq!(amp[(1, i)], x[(1, i)]);
            assert_eq!(amp[(2, i)], x[(2, i)]);
        }

        let renorm = amplify_pcs(&x, &basis, 0..1, 10.0, true).unwrap();
        for row in renorm.row_iter() {
            let mean = row.sum() / 8.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }

        assert!(amplify_pcs(&x, &basis, 1..1, 10.0, false).is_err());
        assert!(amplify_pcs(&x, &basis, 0..4, 10.0, false).is_err());
        assert!(amplify_pcs(&x, &basis, 0..1, 0.0, false).is_err());
    }
}
