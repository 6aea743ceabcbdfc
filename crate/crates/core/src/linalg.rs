//! Dense decompositions: thin SVD and symmetric eigendecomposition.
//!
//! Both are delegated to `nalgebra` (Golub–Kahan bidiagonalization with
//! implicit-shift QR for the SVD, Householder tridiagonalization with
//! implicit QR for the symmetric eigenproblem). Results are deterministic for
//! a given input. Singular values are returned in descending order; equal
//! values keep the order in which the backend produced them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Eigenvalue floor applied before taking inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-14;

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Thin SVD `A = U diag(s) V^T` with `k = min(rows, cols)` columns in `u`, `v`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn svd(a: &DenseMatrix) -> Svd {
    let na = to_na(a);
    let dec = na.svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let raw: Vec<f64> = dec.singular_values.iter().map(|s| s.max(0.0)).collect();

    let mut order: Vec<usize> = (0..raw.len()).collect();
    // stable: equal values keep their backend order
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]));

    let k = raw.len();
    let s = order.iter().map(|&i| raw[i]).collect();
    let u = DenseMatrix::from_fn(a.rows(), k, |i, j| u[(i, order[j])]);
    let v = DenseMatrix::from_fn(a.cols(), k, |i, j| vt[(order[j], i)]);
    Svd { u, s, v }
}

/// Singular values in descending order.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(a)
        .singular_values()
        .iter()
        .map(|s| s.max(0.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending,
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "sym_eigen",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    a.ensure_finite("sym_eigen")?;
    let n = a.rows();
    let na = to_na(&a.symmetric_part());
    let dec = na.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[i].total_cmp(&dec.eigenvalues[j]));
    let values = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| dec.eigenvectors[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "sym_eigenvalues",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    a.ensure_finite("sym_eigenvalues")?;
    let mut v: Vec<f64> = to_na(&a.symmetric_part())
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

impl SymEigen {
    /// `Q f(Λ) Q^T`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let q = &self.vectors;
        let n = q.rows();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = DenseMatrix::from_fn(n, n, |i, j| q[(i, j)] * fl[j]);
        scaled.mul_t(q)
    }
}

/// `M^{-1/2}` for symmetric positive definite `M`, eigenvalues floored at `floor`.
pub fn inverse_sqrt_spd(m: &DenseMatrix, floor: f64) -> Result<DenseMatrix> {
    let eig = sym_eigen(m)?;
    Ok(eig.apply(|l| 1.0 / l.max(floor).sqrt()))
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clipped to zero).
pub fn sqrt_psd(m: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eigen(m)?;
    Ok(eig.apply(|l| l.max(0.0).sqrt()))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn spectral_radius_sym(m: &DenseMatrix) -> Result<f64> {
    let v = sym_eigenvalues(m)?;
    Ok(v.iter().fold(0.0f64, |a, l| a.max(l.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix() -> DenseMatrix {
        DenseMatrix::from_rows(&[
            &[4.0, 1.0, -2.0],
            &[0.5, 3.0, 1.0],
            &[1.0, -1.0, 2.0],
            &[2.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn svd_reconstructs_and_sorts() {
        let a = test_matrix();
        let d = svd(&a);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let us = DenseMatrix::from_fn(4, 3, |i, j| d.u[(i, j)] * d.s[j]);
        let rec = us.mul_t(&d.v);
        assert!((&rec - &a).frobenius_norm() < 1e-12);
        assert!((&d.u.t_mul(&d.u) - &DenseMatrix::identity(3)).frobenius_norm() < 1e-12);
        assert!((&d.v.t_mul(&d.v) - &DenseMatrix::identity(3)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn singular_values_match_eigenvalues_of_gram() {
        let a = test_matrix();
        let s = singular_values(&a);
        let mut l = sym_eigenvalues(&a.t_mul(&a)).unwrap();
        l.reverse();
        for (si, li) in s.iter().zip(&l) {
            assert!((si * si - li).abs() < 1e-11);
        }
    }

    #[test]
    fn eigen_ascending_and_orthonormal() {
        let a = test_matrix();
        let g = a.t_mul(&a);
        let e = sym_eigen(&g).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let rec = e.apply(|l| l);
        assert!((&rec - &g).frobenius_norm() < 1e-11);
    }

    #[test]
    fn inverse_sqrt_identity() {
        let a = test_matrix();
        let g = &a.t_mul(&a) + &DenseMatrix::identity(3);
        let h = inverse_sqrt_spd(&g, EIGEN_FLOOR).unwrap();
        let check = h.mul(&g).mul(&h);
        assert!((&check - &DenseMatrix::identity(3)).frobenius_norm() < 1e-12);
        let s = sqrt_psd(&g).unwrap();
        assert!((&s.mul(&s) - &g).frobenius_norm() < 1e-11);
    }

    #[test]
    fn eigen_rejects_rectangular() {
        assert!(matches!(
            sym_eigen(&test_matrix()),
            Err(Error::NotSquare { .. })
        ));
    }
}
