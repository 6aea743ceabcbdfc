use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// `∇N(X) = 4X(XᵀX − I)` for the penalty `N(X) = ‖XᵀX − I‖²`.
pub fn penalty_gradient(x: &DenseMatrix) -> DenseMatrix {
    let mut gram = x.t_mul(x);
    for i in 0..gram.rows() {
        gram[(i, i)] -= 1.0;
    }
    x.mul(&gram).scale(4.0)
}

/// `Skew(GXᵀ)X` evaluated as `½(G(XᵀX) − X(GᵀX))`, never forming an `m × m`
/// matrix.
pub fn relative_gradient_term(x: &DenseMatrix, g: &DenseMatrix) -> DenseMatrix {
    let xtx = x.t_mul(x);
    let gtx = g.t_mul(x);
    let mut out = g.mul(&xtx);
    out.add_scaled(-1.0, &x.mul(&gtx));
    out.scale(0.5)
}

/// The two parts of the landing field, kept separate for diagnostics.
#[derive(Debug, Clone)]
pub struct LandingComponents {
    /// `Skew(GXᵀ)X`.
    pub relative: DenseMatrix,
    /// `∇N(X)`, not yet multiplied by `λ`.
    pub penalty: DenseMatrix,
}

impl LandingComponents {
    pub fn field(&self, lambda: f64) -> DenseMatrix {
        let mut out = self.relative.clone();
        out.add_scaled(lambda, &self.penalty);
        out
    }

    /// `|⟨ψ(X)X, ∇N(X)⟩| / (‖ψ(X)X‖‖∇N(X)‖)`, zero if either part vanishes.
    pub fn cosine(&self) -> f64 {
        let denom = self.relative.frobenius_norm() * self.penalty.frobenius_norm();
        if denom == 0.0 {
            0.0
        } else {
            self.relative.dot(&self.penalty).abs() / denom
        }
    }
}

fn check(x: &DenseMatrix, g: &DenseMatrix, lambda: f64) -> Result<()> {
    if x.shape() != g.shape() {
        return Err(Error::shape(
            "landing_field",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", g.rows(), g.cols()),
        ));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "landing penalty weight must be positive, got {lambda}"
        )));
    }
    Ok(())
}

pub fn landing_components(x: &DenseMatrix, g: &DenseMatrix) -> Result<LandingComponents> {
    if x.shape() != g.shape() {
        return Err(Error::shape(
            "landing_components",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", g.rows(), g.cols()),
        ));
    }
    Ok(LandingComponents {
        relative: relative_gradient_term(x, g),
        penalty: penalty_gradient(x),
    })
}

/// `Γ(X) = Skew(GXᵀ)X + λ∇N(X)` for the Euclidean gradient `G`.
pub fn landing_field(x: &DenseMatrix, g: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check(x, g, lambda)?;
    Ok(landing_components(x, g)?.field(lambda))
}

/// Writes `X − ηΓ(X)` into `out` without materializing `Γ`.
///
/// Uses `Γ = G(½XᵀX) + X(4λ(XᵀX − I) − ½GᵀX)`, so the update is
/// `X(I − ηB) − ηGA` with two `r × r` Gram products and two `m × r` products.
pub fn landing_update_into(
    x: &DenseMatrix,
    g: &DenseMatrix,
    lambda: f64,
    eta: f64,
    out: &mut DenseMatrix,
) -> Result<()> {
    check(x, g, lambda)?;
    if out.shape() != x.shape() {
        return Err(Error::shape(
            "landing_update_into",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", out.rows(), out.cols()),
        ));
    }
    let r = x.cols();
    let xtx = x.t_mul(x);
    let gtx = g.t_mul(x);
    let a = xtx.scale(0.5);
    let mut b = xtx.scale(4.0 * lambda);
    b.add_scaled(-0.5, &gtx);
    for i in 0..r {
        b[(i, i)] -= 4.0 * lambda;
    }
    let mut keep = b.scale(-eta);
    for i in 0..r {
        keep[(i, i)] += 1.0;
    }
    x.mul_into(&keep, 1.0, 0.0, out);
    g.mul_into(&a, -eta, 1.0, out);
    Ok(())
}

/// Reference form that builds `Skew(GXᵀ)` explicitly (`O(m²r)`).
pub fn landing_field_dense(x: &DenseMatrix, g: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check(x, g, lambda)?;
    let gx = g.mul_t(x);
    let skew = (&gx - &gx.transpose()).scale(0.5);
    let mut out = skew.mul(x);
    out.add_scaled(lambda, &penalty_gradient(x));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stiefel::{distance_to_stiefel, sample_stiefel_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn feasible_point_with_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = sample_stiefel_uniform(9, 4, &mut rng).unwrap();
        let g = landing_field(x.as_matrix(), &DenseMatrix::zeros(9, 4), 1e-3).unwrap();
        assert!(g.max_abs() < 1e-14);
    }

    #[test]
    fn penalty_at_twice_identity() {
        let lambda = 0.3;
        let x = DenseMatrix::identity(3).scale(2.0);
        let g = landing_field(&x, &DenseMatrix::zeros(3, 3), lambda).unwrap();
        let want = DenseMatrix::identity(3).scale(24.0 * lambda);
        assert!((&g - &want).max_abs() < 1e-14);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = sample_stiefel_uniform(7, 3, &mut rng).unwrap().into_inner();
        x.add_scaled(0.1, &gaussian(7, 3, &mut rng));
        let grad = penalty_gradient(&x);
        let h = 1e-6;
        for i in 0..7 {
            for j in 0..3 {
                let mut p = x.clone();
                p[(i, j)] += h;
                let mut q = x.clone();
                q[(i, j)] -= h;
                let fd = (distance_to_stiefel(&p).unwrap() - distance_to_stiefel(&q).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - grad[(i, j)]).abs() <= 1e-5 * grad.max_abs(),
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn compact_and_dense_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let x = gaussian(10, 4, &mut rng);
            let g = gaussian(10, 4, &mut rng);
            let a = landing_field(&x, &g, 5e-3).unwrap();
            let b = landing_field_dense(&x, &g, 5e-3).unwrap();
            assert!((&a - &b).max_abs() < 1e-12 * (1.0 + b.max_abs()));
        }
    }

    #[test]
    fn fused_update_matches_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = gaussian(11, 4, &mut rng);
            let g = gaussian(11, 4, &mut rng);
            let mut want = x.clone();
            want.add_scaled(-0.07, &landing_field(&x, &g, 2e-3).unwrap());
            let mut out = DenseMatrix::zeros(11, 4);
            landing_update_into(&x, &g, 2e-3, 0.07, &mut out).unwrap();
            assert!((&out - &want).max_abs() < 1e-12 * (1.0 + want.max_abs()));
        }
    }

    #[test]
    fn components_are_orthogonal_off_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = gaussian(8, 3, &mut rng);
            let g = gaussian(8, 3, &mut rng);
            let c = landing_components(&x, &g).unwrap();
            assert!(c.cosine() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = DenseMatrix::identity(3);
        assert!(landing_field(&x, &DenseMatrix::zeros(3, 2), 1e-3).is_err());
        assert!(landing_field(&x, &DenseMatrix::zeros(3, 3), 0.0).is_err());
    }
}
