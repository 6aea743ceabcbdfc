//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod alignment;
pub mod gradcheck;

use nalgebra::{DMatrix, DVector};
use polar_core::matrix::DenseMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-6;

pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Central differences of `f` at `x`, one entry at a time.
pub fn fd_gradient(x: &DenseMatrix, f: impl Fn(&DenseMatrix) -> f64) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let mut p = x.clone();
            p[(i, j)] += FD_STEP;
            let mut q = x.clone();
            q[(i, j)] -= FD_STEP;
            out[(i, j)] = (f(&p) - f(&q)) / (2.0 * FD_STEP);
        }
    }
    out
}

pub fn rel_err(got: &DenseMatrix, want: &DenseMatrix) -> f64 {
    let scale = got.frobenius_norm().max(want.frobenius_norm()).max(1e-12);
    (got - want).frobenius_norm() / scale
}

/// `Z − X sym(XᵀZ)`.
pub fn tangent_projection(x: &DenseMatrix, z: &DenseMatrix) -> DenseMatrix {
    let xz = x.t_mul(z);
    let sym = (&xz + &xz.transpose()).scale(0.5);
    z - &x.mul(&sym)
}

/// Orthonormal basis of the complement of span(U): Gram–Schmidt on the
/// columns of `I − UUᵀ`.
pub fn explicit_complement(u: &DenseMatrix) -> DenseMatrix {
    let (m, ra) = u.shape();
    let un = to_na(u);
    let proj = DMatrix::<f64>::identity(m, m) - &un * un.transpose();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..m {
        let mut v = proj.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    assert_eq!(basis.len(), m - ra);
    let cols: Vec<Vec<f64>> = basis.iter().map(|b| b.as_slice().to_vec()).collect();
    DenseMatrix::from_columns(&cols).unwrap()
}

/// Polar factor `PQᵀ` of `z` from nalgebra's SVD.
pub fn polar_factor(z: &DenseMatrix) -> DenseMatrix {
    let svd = to_na(z).svd(true, true);
    from_na(&(svd.u.unwrap() * svd.v_t.unwrap()))
}

/// Squared singular values in descending order, padded with zeros to `len`.
pub fn squared_singular_values(m: &DenseMatrix, len: usize) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().map(|v| v * v).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.resize(len, 0.0);
    s
}
