//! The Stiefel manifold `St(m, r) = {X : X^T X = I_r}` and its primitives:
//! uniform sampling, polar decomposition, the polar retraction, and the
//! infeasibility penalty `N(X) = ||X^T X - I||_F^2`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, EIGEN_FLOOR};
use crate::matrix::DenseMatrix;

/// Feasibility tolerance for iterates of exact-manifold algorithms.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Relative tolerance of the debug-build tangency check in [`polar_retract`].
const TANGENT_CHECK_TOL: f64 = 1e-8;

/// An `m x r` matrix (`m >= r`) certified to satisfy `||X^T X - I||_F <= tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelMatrix {
    inner: DenseMatrix,
    feasibility_tol: f64,
}

impl StiefelMatrix {
    pub fn certify(inner: DenseMatrix, feasibility_tol: f64) -> Result<Self> {
        if inner.rows() < inner.cols() {
            return Err(Error::shape(
                "StiefelMatrix::certify",
                "rows >= cols",
                format!("{}x{}", inner.rows(), inner.cols()),
            ));
        }
        inner.ensure_finite("StiefelMatrix::certify")?;
        let residual = stiefel_residual(&inner);
        if residual > feasibility_tol {
            return Err(Error::NotFeasible {
                residual,
                tol: feasibility_tol,
            });
        }
        Ok(Self {
            inner,
            feasibility_tol,
        })
    }

    pub fn certify_default(inner: DenseMatrix) -> Result<Self> {
        Self::certify(inner, DEFAULT_FEASIBILITY_TOL)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.inner
    }

    pub fn feasibility_tol(&self) -> f64 {
        self.feasibility_tol
    }

    pub fn rows(&self) -> usize {
        self.inner.rows()
    }

    pub fn cols(&self) -> usize {
        self.inner.cols()
    }

    /// `||X^T X - I||_F` of the stored matrix.
    pub fn residual(&self) -> f64 {
        stiefel_residual(&self.inner)
    }
}

impl AsRef<DenseMatrix> for StiefelMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        &self.inner
    }
}

/// `||X^T X - I||_F`.
pub fn stiefel_residual(x: &DenseMatrix) -> f64 {
    gram_minus_identity(x).frobenius_norm()
}

fn gram_minus_identity(x: &DenseMatrix) -> DenseMatrix {
    let mut g = x.t_mul(x);
    for i in 0..g.rows() {
        g[(i, i)] -= 1.0;
    }
    g
}

/// Infeasibility penalty `N(X) = ||X^T X - I_r||_F^2`.
pub fn distance_to_stiefel(x: &DenseMatrix) -> Result<f64> {
    if x.rows() < x.cols() {
        return Err(Error::shape(
            "distance_to_stiefel",
            "rows >= cols",
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    Ok(gram_minus_identity(x).frobenius_norm_sq())
}

/// `Skew(M) = (M - M^T) / 2`.
pub fn skew_part(m: &DenseMatrix) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            op: "skew_part",
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Ok(DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        0.5 * (m[(i, j)] - m[(j, i)])
    }))
}

/// Orthogonal projection onto the tangent space at `x`: `Z - X sym(X^T Z)`.
pub fn project_tangent(x: &DenseMatrix, z: &DenseMatrix) -> DenseMatrix {
    let sym = x.t_mul(z).symmetric_part();
    z - &x.mul(&sym)
}

/// `||X^T D + D^T X||_F`, zero for tangent `D`.
pub fn tangency_residual(x: &DenseMatrix, d: &DenseMatrix) -> f64 {
    let xd = x.t_mul(d);
    (&xd + &xd.transpose()).frobenius_norm()
}

/// Samples `X = Z (Z^T Z)^{-1/2}` with i.i.d. standard normal `Z`, which is
/// uniformly distributed on `St(m, r)`.
pub fn sample_stiefel_uniform<R: Rng + ?Sized>(
    m: usize,
    r: usize,
    rng: &mut R,
) -> Result<StiefelMatrix> {
    if r == 0 || r > m {
        return Err(Error::shape(
            "sample_stiefel_uniform",
            "m >= r >= 1",
            format!("m = {m}, r = {r}"),
        ));
    }
    let mut last = (0.0, 0.0);
    // one resample if the Gram matrix is numerically singular
    for _ in 0..2 {
        let z = DenseMatrix::from_fn(m, r, |_, _| rng.sample(StandardNormal));
        let eig = linalg::sym_eigen(&z.t_mul(&z))?;
        let lo = eig.values[0];
        let hi = eig.values[r - 1];
        if lo > 1e-12 * hi {
            let mut x = z.mul(&eig.apply(|l| 1.0 / l.sqrt()));
            // An ill-conditioned Z costs accuracy in one pass; a second pass on
            // the nearly orthonormal result is exact in exact arithmetic and
            // restores it.
            if stiefel_residual(&x) > 1e-12 {
                let again = linalg::inverse_sqrt_spd(&x.t_mul(&x), EIGEN_FLOOR)?;
                x = x.mul(&again);
            }
            return StiefelMatrix::certify_default(x);
        }
        last = (lo.max(0.0).sqrt(), hi.sqrt());
    }
    Err(Error::RankDeficient {
        op: "sample_stiefel_uniform",
        sigma_min: last.0,
        sigma_max: last.1,
    })
}

/// Polar decomposition `Z = X Θ` with `X` on the Stiefel manifold and `Θ`
/// symmetric PSD, computed from the thin SVD `Z = P Σ Q^T` as `X = P Q^T`,
/// `Θ = Q Σ Q^T`.
pub fn polar_decompose(z: &DenseMatrix) -> Result<(StiefelMatrix, DenseMatrix)> {
    let (m, r) = z.shape();
    if m < r {
        return Err(Error::shape(
            "polar_decompose",
            "rows >= cols",
            format!("{m}x{r}"),
        ));
    }
    z.ensure_finite("polar_decompose")?;
    let d = linalg::svd(z);
    let smax = d.s[0];
    let smin = d.s[r - 1];
    if !(smin > 1e-12 * smax) {
        return Err(Error::RankDeficient {
            op: "polar_decompose",
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    let x = d.u.mul_t(&d.v);
    let qs = DenseMatrix::from_fn(r, r, |i, j| d.v[(i, j)] * d.s[j]);
    let theta = qs.mul_t(&d.v).symmetric_part();
    Ok((StiefelMatrix::certify_default(x)?, theta))
}

/// Polar retraction `(X - ηD)(I + η² DᵀD)^{-1/2}` of the step `-ηD` at `X`.
///
/// `D` is expected to be tangent at `X`; debug builds assert it.
pub fn polar_retract(x: &StiefelMatrix, d: &DenseMatrix, eta: f64) -> Result<StiefelMatrix> {
    let xm = x.as_matrix();
    if xm.shape() != d.shape() {
        return Err(Error::shape(
            "polar_retract",
            format!("{}x{}", xm.rows(), xm.cols()),
            format!("{}x{}", d.rows(), d.cols()),
        ));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "polar_retract: step size must be finite and >= 0, got {eta}"
        )));
    }
    d.ensure_finite("polar_retract")?;
    if eta == 0.0 || d.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    debug_assert!(
        tangency_residual(xm, d) <= TANGENT_CHECK_TOL * (1.0 + d.frobenius_norm()),
        "polar_retract: direction is not tangent (residual {:e})",
        tangency_residual(xm, d)
    );

    let mut step = xm.clone();
    step.add_scaled(-eta, d);
    // Equals I + η²DᵀD when XᵀX = I and D is tangent; using the step's own
    // Gram matrix keeps rounding drift in X from accumulating.
    let gram = step.t_mul(&step);
    let inv_sqrt = linalg::inverse_sqrt_spd(&gram, EIGEN_FLOOR)?;
    let next = step.mul(&inv_sqrt);
    next.ensure_finite("polar_retract")?;
    StiefelMatrix::certify(next, DEFAULT_FEASIBILITY_TOL)
}
