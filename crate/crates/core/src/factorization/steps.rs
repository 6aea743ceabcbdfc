//! Losses, gradients, and single-iteration updates for the three problems:
//!
//! * polar: `½‖XΘYᵀ − A‖²` over `X ∈ St(m,r)`, `Y ∈ St(n,r)`, `Θ ∈ ℝ^{r×r}`,
//! * Burer–Monteiro: `½‖Z₁Z₂ᵀ − A‖²`,
//! * symmetric: `½‖XΘXᵀ − B‖²` over `X ∈ St(m,r)`.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::stiefel::{polar_retract, project_tangent};

use super::target::{BMFactors, FactorizationTarget, PolarFactors, SymFactors, SymTarget};

/// Burer–Monteiro runs abort once the loss exceeds this.
pub const DIVERGENCE_LOSS: f64 = 1e12;

fn dims(m: &DenseMatrix) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

fn check_polar(f: &PolarFactors, t: &FactorizationTarget) -> Result<()> {
    let r = f.theta.rows();
    let ok = f.theta.is_square()
        && f.x.rows() == t.m()
        && f.y.rows() == t.n()
        && f.x.cols() == r
        && f.y.cols() == r;
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            "polar factors",
            format!("X: {}x r, Θ: r x r, Y: {}x r", t.m(), t.n()),
            format!(
                "X: {}, Θ: {}, Y: {}",
                dims(f.x.as_matrix()),
                dims(&f.theta),
                dims(f.y.as_matrix())
            ),
        ))
    }
}

fn check_bm(f: &BMFactors, t: &FactorizationTarget) -> Result<()> {
    let ok = f.z1.rows() == t.m() && f.z2.rows() == t.n() && f.z1.cols() == f.z2.cols();
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            "BM factors",
            format!("Z1: {}x r, Z2: {}x r", t.m(), t.n()),
            format!("Z1: {}, Z2: {}", dims(&f.z1), dims(&f.z2)),
        ))
    }
}

fn check_sym(f: &SymFactors, t: &SymTarget) -> Result<()> {
    let r = f.theta.rows();
    let ok = f.theta.is_square() && f.x.rows() == t.m() && f.x.cols() == r;
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            "symmetric factors",
            format!("X: {}x r, Θ: r x r", t.m()),
            format!("X: {}, Θ: {}", dims(f.x.as_matrix()), dims(&f.theta)),
        ))
    }
}

pub fn loss_polar(f: &PolarFactors, t: &FactorizationTarget) -> Result<f64> {
    check_polar(f, t)?;
    Ok(0.5 * (&f.product() - &t.a).frobenius_norm_sq())
}

pub fn loss_bm(f: &BMFactors, t: &FactorizationTarget) -> Result<f64> {
    check_bm(f, t)?;
    Ok(0.5 * (&f.product() - &t.a).frobenius_norm_sq())
}

pub fn loss_sym(f: &SymFactors, t: &SymTarget) -> Result<f64> {
    check_sym(f, t)?;
    Ok(0.5 * (&f.product() - &t.b).frobenius_norm_sq())
}

/// `Θ_t = (1 − γ)Θ_{t−1} + γ XᵀAY`; a gradient step of size `γ` on `Θ`.
pub fn theta_update(f: &PolarFactors, t: &FactorizationTarget, gamma: f64) -> DenseMatrix {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    let xay = f.x.as_matrix().t_mul(&t.a).mul(f.y.as_matrix());
    blend(&f.theta, &xay, gamma)
}

fn blend(prev: &DenseMatrix, fresh: &DenseMatrix, gamma: f64) -> DenseMatrix {
    if gamma == 1.0 {
        return fresh.clone();
    }
    let mut out = prev.scale(1.0 - gamma);
    out.add_scaled(gamma, fresh);
    out
}

/// Euclidean gradient `∇_Θ = Xᵀ(XΘYᵀ − A)Y`.
pub fn theta_gradient(f: &PolarFactors, t: &FactorizationTarget) -> Result<DenseMatrix> {
    check_polar(f, t)?;
    let res = &f.product() - &t.a;
    Ok(f.x.as_matrix().t_mul(&res).mul(f.y.as_matrix()))
}

/// Riemannian gradients `E = −(I − XXᵀ)AYΘᵀ`, `F = −(I − YYᵀ)AᵀXΘ`.
///
/// These are the Riemannian gradients only when `Θ = XᵀAY` (the `γ = 1`
/// refresh); for other `Θ` use [`projected_euclidean_grads`].
pub fn riemannian_grads_asym(
    f: &PolarFactors,
    t: &FactorizationTarget,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_polar(f, t)?;
    let x = f.x.as_matrix();
    let y = f.y.as_matrix();
    let ay = t.a.mul(y);
    let atx = t.a.t_mul(x);
    let ay_th = ay.mul_t(&f.theta);
    let atx_th = atx.mul(&f.theta);
    let e = &x.mul(&x.t_mul(&ay_th)) - &ay_th;
    let g = &y.mul(&y.t_mul(&atx_th)) - &atx_th;
    Ok((e, g))
}

/// Tangent-space projections of the Euclidean gradients `(XΘYᵀ − A)YΘᵀ`
/// and `(XΘYᵀ − A)ᵀXΘ`; agrees with [`riemannian_grads_asym`] at `γ = 1`.
pub fn projected_euclidean_grads(
    f: &PolarFactors,
    t: &FactorizationTarget,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_polar(f, t)?;
    let x = f.x.as_matrix();
    let y = f.y.as_matrix();
    let res = &f.product() - &t.a;
    let ex = res.mul(y).mul_t(&f.theta);
    let ey = res.t_mul(x).mul(&f.theta);
    Ok((project_tangent(x, &ex), project_tangent(y, &ey)))
}

fn check_rates(eta: f64, gamma: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eta must be positive, got {eta}"
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(())
}

/// One iteration of RGD on the polar problem, also reporting `‖(E, F)‖_F`.
///
/// The returned factors hold `Θ_t` together with `X_{t+1}`, `Y_{t+1}`.
pub fn rgd_step_asym_with_norm(
    f: &PolarFactors,
    t: &FactorizationTarget,
    eta: f64,
    gamma: f64,
) -> Result<(PolarFactors, f64)> {
    check_rates(eta, gamma)?;
    check_polar(f, t)?;
    let refreshed = PolarFactors {
        x: f.x.clone(),
        theta: theta_update(f, t, gamma),
        y: f.y.clone(),
    };
    let (e, g) = if gamma == 1.0 {
        riemannian_grads_asym(&refreshed, t)?
    } else {
        projected_euclidean_grads(&refreshed, t)?
    };
    let norm = (e.frobenius_norm_sq() + g.frobenius_norm_sq()).sqrt();
    let x = polar_retract(&refreshed.x, &e, eta)?;
    let y = polar_retract(&refreshed.y, &g, eta)?;
    Ok((
        PolarFactors {
            x,
            theta: refreshed.theta,
            y,
        },
        norm,
    ))
}

/// One RGD iteration: refresh `Θ`, then move `X` and `Y` from the same `Θ_t`.
pub fn rgd_step_asym(
    f: &PolarFactors,
    t: &FactorizationTarget,
    eta: f64,
    gamma: f64,
) -> Result<PolarFactors> {
    rgd_step_asym_with_norm(f, t, eta, gamma).map(|(f, _)| f)
}

/// Euclidean gradients `(RZ₂, RᵀZ₁)` with `R = Z₁Z₂ᵀ − A`.
pub fn bm_gradients(f: &BMFactors, t: &FactorizationTarget) -> Result<(DenseMatrix, DenseMatrix)> {
    check_bm(f, t)?;
    let res = &f.product() - &t.a;
    Ok((res.mul(&f.z2), res.t_mul(&f.z1)))
}

/// Simultaneous gradient step on `(Z₁, Z₂)` from one residual.
pub fn gd_step_bm(f: &BMFactors, t: &FactorizationTarget, eta: f64) -> Result<BMFactors> {
    gd_step_bm_with_norm(f, t, eta).map(|(f, _)| f)
}

pub fn gd_step_bm_with_norm(
    f: &BMFactors,
    t: &FactorizationTarget,
    eta: f64,
) -> Result<(BMFactors, f64)> {
    check_rates(eta, 1.0)?;
    check_bm(f, t)?;
    let res = &f.product() - &t.a;
    let loss = 0.5 * res.frobenius_norm_sq();
    if !(loss <= DIVERGENCE_LOSS) {
        return Err(Error::Diverged { iter: 0, loss });
    }
    let g1 = res.mul(&f.z2);
    let g2 = res.t_mul(&f.z1);
    let norm = (g1.frobenius_norm_sq() + g2.frobenius_norm_sq()).sqrt();
    let mut z1 = f.z1.clone();
    z1.add_scaled(-eta, &g1);
    let mut z2 = f.z2.clone();
    z2.add_scaled(-eta, &g2);
    Ok((BMFactors { z1, z2 }, norm))
}

/// `Θ_t = (1 − γ)Θ_{t−1} + γ XᵀBX`.
pub fn theta_update_sym(f: &SymFactors, t: &SymTarget, gamma: f64) -> DenseMatrix {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    let x = f.x.as_matrix();
    let xbx = x.t_mul(&t.b.mul(x)).symmetric_part();
    blend(&f.theta, &xbx, gamma)
}

/// `G = −(I − XXᵀ)BXXᵀBX`, which equals half the tangent projection of
/// `∇_X ½‖XΘXᵀ − B‖²` at `Θ = XᵀBX`.
pub fn riemannian_grad_sym(f: &SymFactors, t: &SymTarget) -> Result<DenseMatrix> {
    check_sym(f, t)?;
    let x = f.x.as_matrix();
    let bx = t.b.mul(x);
    let xbx = x.t_mul(&bx);
    let bx_xbx = bx.mul(&xbx);
    Ok(&x.mul(&x.t_mul(&bx_xbx)) - &bx_xbx)
}

/// Half the tangent projection of the Euclidean gradient at the current `Θ`;
/// reduces to [`riemannian_grad_sym`] at `Θ = XᵀBX`.
pub fn projected_euclidean_grad_sym(f: &SymFactors, t: &SymTarget) -> Result<DenseMatrix> {
    check_sym(f, t)?;
    let x = f.x.as_matrix();
    let res = &f.product() - &t.b;
    let grad = &res.mul(x).mul_t(&f.theta) + &res.t_mul(x).mul(&f.theta);
    Ok(project_tangent(x, &grad).scale(0.5))
}

pub fn rgd_step_sym_with_norm(
    f: &SymFactors,
    t: &SymTarget,
    eta: f64,
    gamma: f64,
) -> Result<(SymFactors, f64)> {
    check_rates(eta, gamma)?;
    check_sym(f, t)?;
    let refreshed = SymFactors {
        x: f.x.clone(),
        theta: theta_update_sym(f, t, gamma),
    };
    let g = if gamma == 1.0 {
        riemannian_grad_sym(&refreshed, t)?
    } else {
        projected_euclidean_grad_sym(&refreshed, t)?
    };
    let norm = g.frobenius_norm();
    let x = polar_retract(&refreshed.x, &g, eta)?;
    Ok((
        SymFactors {
            x,
            theta: refreshed.theta,
        },
        norm,
    ))
}

/// One RGD iteration on the symmetric problem.
pub fn rgd_step_sym(f: &SymFactors, t: &SymTarget, eta: f64, gamma: f64) -> Result<SymFactors> {
    rgd_step_sym_with_norm(f, t, eta, gamma).map(|(f, _)| f)
}

/// Loss of `(X, XᵀAY, Y)`, i.e. the objective after a `γ = 1` refresh.
pub fn refreshed_loss_polar(f: &PolarFactors, t: &FactorizationTarget) -> Result<f64> {
    check_polar(f, t)?;
    let g = PolarFactors {
        x: f.x.clone(),
        theta: theta_update(f, t, 1.0),
        y: f.y.clone(),
    };
    loss_polar(&g, t)
}
