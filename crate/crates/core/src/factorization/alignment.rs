//! Checkable forms of the alignment lemmas for the polar RGD iteration.
//!
//! Every function assumes `Θ` has been refreshed with `γ = 1`. Targets may be
//! scaled (`σ₁ ≠ 1`); a scale `c` on `A` is equivalent to running the
//! normalized problem with step `η c²`, so the predicates use that effective
//! step.

use serde::Serialize;

use crate::diagnostics::alignment_unchecked;
use crate::error::Result;
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::stiefel::StiefelMatrix;

use super::steps::loss_polar;
use super::target::{FactorizationTarget, PolarFactors};

/// Both sides of the two sufficient conditions for non-decreasing alignment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlignmentGrowthCheck {
    pub lhs_x: f64,
    pub rhs_x: f64,
    pub lhs_y: f64,
    pub rhs_y: f64,
    pub holds_x: bool,
    pub holds_y: bool,
    /// `σ₁(I − ΦΦᵀ)`.
    pub beta: f64,
    /// `σ₁(I − ΨΨᵀ)`.
    pub delta: f64,
}

struct SideStats {
    trace: f64,
    /// `Tr((I − ΦΦᵀ)ΦΦᵀ) = Σ s²(1 − s²)`.
    mixed: f64,
    /// `σ₁(I − ΦΦᵀ) = 1 − σ²_{r_A}(Φ)`.
    top_gap: f64,
    sigma_min_sq: f64,
}

fn side_stats(u: &StiefelMatrix, x: &StiefelMatrix) -> SideStats {
    let rep = alignment_unchecked(u.as_matrix(), x.as_matrix());
    let ra = u.cols();
    let sq: Vec<f64> = rep.singular_values.iter().take(ra).map(|s| s * s).collect();
    let mixed = sq.iter().map(|s| s * (1.0 - s)).sum();
    let sigma_min_sq = rep.sigma_min_phi * rep.sigma_min_phi;
    SideStats {
        trace: rep.trace_phi,
        mixed,
        top_gap: (1.0 - sigma_min_sq).max(0.0),
        sigma_min_sq,
    }
}

pub fn alignment_growth_predicate(
    f: &PolarFactors,
    t: &FactorizationTarget,
    eta: f64,
) -> AlignmentGrowthCheck {
    let eta = eta * t.sigma_max() * t.sigma_max();
    let k2 = t.kappa * t.kappa;
    let px = side_stats(&t.u, &f.x);
    let py = side_stats(&t.v, &f.y);
    let beta = px.top_gap;
    let delta = py.top_gap;
    let lhs_x = 2.0 * (1.0 - eta * eta * beta) * py.sigma_min_sq / k2 * px.mixed;
    let rhs_x = eta * beta * px.trace;
    let lhs_y = 2.0 * (1.0 - eta * eta * delta) * px.sigma_min_sq / k2 * py.mixed;
    let rhs_y = eta * delta * py.trace;
    AlignmentGrowthCheck {
        lhs_x,
        rhs_x,
        lhs_y,
        rhs_y,
        holds_x: lhs_x >= rhs_x,
        holds_y: lhs_y >= rhs_y,
        beta,
        delta,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlignmentBound {
    /// `2σ₁²(ρ₁ + ρ₂)` with `ρ₁ = Tr(I − ΦΦᵀ)`, `ρ₂ = Tr(I − ΨΨᵀ)`.
    pub bound: f64,
    /// `½‖XΘYᵀ − A‖²`.
    pub loss: f64,
    /// `‖XΘYᵀ − A‖²`, the quantity the bound controls directly.
    pub residual_sq: f64,
    pub rho_x: f64,
    pub rho_y: f64,
    /// `mn(ε‖A‖_F)²`, the size of a residual that is pure rounding.
    pub roundoff: f64,
}

impl AlignmentBound {
    pub fn holds(&self) -> bool {
        self.residual_sq <= self.bound * (1.0 + 1e-12) + self.roundoff
    }
}

/// `‖(I − XXᵀ)U‖²`, which is `Tr(I − ΦΦᵀ)` for orthonormal `X` but keeps
/// full relative accuracy when the alignment is nearly perfect.
fn off_subspace_mass(u: &DenseMatrix, x: &DenseMatrix) -> f64 {
    let mut rest = u.clone();
    rest.add_scaled(-1.0, &x.mul(&x.t_mul(u)));
    rest.frobenius_norm_sq()
}

pub fn loss_from_alignment_bound(
    f: &PolarFactors,
    t: &FactorizationTarget,
) -> Result<AlignmentBound> {
    let loss = loss_polar(f, t)?;
    let rho_x = off_subspace_mass(t.u.as_matrix(), f.x.as_matrix());
    let rho_y = off_subspace_mass(t.v.as_matrix(), f.y.as_matrix());
    let s1 = t.sigma_max();
    let na = f64::EPSILON * t.a.frobenius_norm();
    Ok(AlignmentBound {
        roundoff: (t.m() * t.n()) as f64 * na * na,
        bound: 2.0 * s1 * s1 * (rho_x + rho_y),
        loss,
        residual_sq: 2.0 * loss,
        rho_x,
        rho_y,
    })
}

/// Smallest eigenvalue of `Ω_tΩ_tᵀ − Ω_{t+1}Ω_{t+1}ᵀ` with `Ω = U_⊥ᵀX`.
///
/// Evaluated as the smallest eigenvalue of `P(X_tX_tᵀ − X_{t+1}X_{t+1}ᵀ)P`,
/// `P = I − UUᵀ`, which has the same spectrum plus `r_A` extra zeros. A
/// negative value therefore signals a genuine violation.
pub fn misalignment_ordering_gap(
    u: &StiefelMatrix,
    x_now: &StiefelMatrix,
    x_next: &StiefelMatrix,
) -> Result<f64> {
    let m = u.rows();
    let um = u.as_matrix();
    let mut p = DenseMatrix::identity(m);
    p.add_scaled(-1.0, &um.mul_t(um));
    let a = x_now.as_matrix();
    let b = x_next.as_matrix();
    let mut diff = a.mul_t(a);
    diff.add_scaled(-1.0, &b.mul_t(b));
    let sandwiched = p.mul(&diff).mul(&p);
    let values = linalg::sym_eigenvalues(&sandwiched)?;
    Ok(values[0])
}

/// `σ_{r_A}(UᵀX)`.
pub fn sigma_min_alignment(u: &StiefelMatrix, x: &StiefelMatrix) -> f64 {
    alignment_unchecked(u.as_matrix(), x.as_matrix()).sigma_min_phi
}

/// `Tr(UᵀX XᵀU)`.
pub fn trace_alignment(u: &StiefelMatrix, x: &StiefelMatrix) -> f64 {
    u.as_matrix().t_mul(x.as_matrix()).frobenius_norm_sq()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::steps::theta_update;
    use crate::factorization::target::{make_target, Spacing};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn embed(basis: &StiefelMatrix, r: usize, offset: usize) -> StiefelMatrix {
        // basis occupies the first coordinates in these tests
        let m = basis.rows();
        let ra = basis.cols();
        let mut cols: Vec<Vec<f64>> = (0..ra).map(|j| basis.as_matrix().column(j)).collect();
        for k in 0..(r - ra) {
            let mut v = vec![0.0; m];
            v[offset + k] = 1.0;
            cols.push(v);
        }
        StiefelMatrix::certify_default(DenseMatrix::from_columns(&cols).unwrap()).unwrap()
    }

    fn axis_target(m: usize, n: usize) -> FactorizationTarget {
        let e = |k: usize| {
            StiefelMatrix::certify_default(DenseMatrix::identity(k).columns(0, 2)).unwrap()
        };
        let u = e(m);
        let v = e(n);
        let sigma = vec![1.0, 0.5];
        let a = DenseMatrix::from_fn(m, n, |i, j| if i == j && i < 2 { sigma[i] } else { 0.0 });
        FactorizationTarget {
            a,
            u,
            v,
            sigma,
            kappa: 2.0,
            transposed: false,
        }
    }

    #[test]
    fn aligned_state_predicate_and_bound() {
        let t = axis_target(8, 6);
        let mut f = PolarFactors {
            x: embed(&t.u, 3, 2),
            theta: DenseMatrix::zeros(3, 3),
            y: embed(&t.v, 3, 2),
        };
        f.theta = theta_update(&f, &t, 1.0);
        let c = alignment_growth_predicate(&f, &t, 0.1);
        assert!(c.beta.abs() < 1e-15 && c.delta.abs() < 1e-15);
        assert!(c.holds_x && c.holds_y);
        assert!(c.lhs_x.abs() < 1e-15 && c.rhs_x.abs() < 1e-15);
        let b = loss_from_alignment_bound(&f, &t).unwrap();
        assert!(b.bound < 1e-14 && b.loss < 1e-28);
    }

    #[test]
    fn orthogonal_state_is_degenerate() {
        let t = axis_target(8, 6);
        let pick = |m: usize| {
            StiefelMatrix::certify_default(DenseMatrix::identity(m).columns(2, 5)).unwrap()
        };
        let mut f = PolarFactors {
            x: pick(8),
            theta: DenseMatrix::zeros(3, 3),
            y: pick(6),
        };
        f.theta = theta_update(&f, &t, 1.0);
        let c = alignment_growth_predicate(&f, &t, 0.1);
        assert_eq!(c.lhs_x, 0.0);
        assert_eq!(c.rhs_x, 0.0);
        assert!(c.holds_x && c.holds_y);
    }

    #[test]
    fn bound_holds_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = make_target(8, 8, 2, 3.0, Spacing::Linear, &mut rng).unwrap();
            let mut f = PolarFactors::random(8, 8, 4, &mut rng).unwrap();
            f.theta = theta_update(&f, &t, 1.0);
            assert!(loss_from_alignment_bound(&f, &t).unwrap().holds());
        }
    }

    #[test]
    fn ordering_gap_matches_explicit_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = make_target(8, 6, 2, 2.0, Spacing::Linear, &mut rng).unwrap();
        let mut f = PolarFactors::random(8, 6, 3, &mut rng).unwrap();
        let before = f.x.clone();
        f = crate::factorization::steps::rgd_step_asym(&f, &t, 0.1, 1.0).unwrap();
        let gap = misalignment_ordering_gap(&t.u, &before, &f.x).unwrap();

        let perp = complement(&t.u);
        let om0 = perp.t_mul(before.as_matrix());
        let om1 = perp.t_mul(f.x.as_matrix());
        let mut d = om0.mul_t(&om0);
        d.add_scaled(-1.0, &om1.mul_t(&om1));
        let lo = crate::linalg::sym_eigenvalues(&d).unwrap()[0].min(0.0);
        assert!((gap.min(0.0) - lo).abs() < 1e-12, "{gap} vs {lo}");
    }

    fn complement(u: &StiefelMatrix) -> DenseMatrix {
        let m = u.rows();
        let mut p = DenseMatrix::identity(m);
        p.add_scaled(-1.0, &u.as_matrix().mul_t(u.as_matrix()));
        let d = crate::linalg::svd(&p);
        d.u.columns(0, m - u.cols())
    }
}
