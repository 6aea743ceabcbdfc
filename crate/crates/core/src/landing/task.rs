use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::factorization::{singular_value_profile, Spacing};
use crate::matrix::DenseMatrix;
use crate::stiefel::{sample_stiefel_uniform, StiefelMatrix};

/// One linear layer `W₀ + ΔW` fitted to `labels` on whitened inputs `D`.
///
/// The loss `‖(W₀ + ΔW)D − labels‖²` equals `‖ΔW − Λ'‖² + c` with
/// `Λ' = labels·Dᵀ − W₀` and `c = ‖labels‖² − ‖labels·Dᵀ‖²`.
#[derive(Debug, Clone)]
pub struct WhitenedTask {
    pub w0: DenseMatrix,
    /// `n × N` with orthonormal rows.
    pub d: DenseMatrix,
    /// `m × N`.
    pub labels: DenseMatrix,
    /// `Λ'`.
    pub target: DenseMatrix,
    pub constant: f64,
    /// Planted singular subspaces and values of `Λ'`.
    pub u: StiefelMatrix,
    pub v: StiefelMatrix,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskOptions {
    /// Condition number of the planted update.
    pub kappa: f64,
    /// Largest singular value of the planted update.
    pub scale: f64,
    /// Entry standard deviation of `W₀` is `w0_std / √n`.
    pub w0_std: f64,
    /// Frobenius norm of the label component outside the row space of `D`.
    pub noise: f64,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            kappa: 10.0,
            scale: 1.0,
            w0_std: 1.0,
            noise: 0.1,
        }
    }
}

impl WhitenedTask {
    pub fn m(&self) -> usize {
        self.w0.rows()
    }

    pub fn n(&self) -> usize {
        self.w0.cols()
    }

    pub fn samples(&self) -> usize {
        self.d.cols()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn check(&self, dw: &DenseMatrix) -> Result<()> {
        if dw.shape() != self.w0.shape() {
            return Err(Error::shape(
                "whitened loss",
                format!("{}x{}", self.m(), self.n()),
                format!("{}x{}", dw.rows(), dw.cols()),
            ));
        }
        Ok(())
    }

    /// `‖ΔW − Λ'‖² + c`.
    pub fn loss(&self, dw: &DenseMatrix) -> Result<f64> {
        self.check(dw)?;
        Ok((dw - &self.target).frobenius_norm_sq() + self.constant)
    }

    /// `‖(W₀ + ΔW)D − labels‖²`, through the `N`-column product.
    pub fn loss_full(&self, dw: &DenseMatrix) -> Result<f64> {
        self.check(dw)?;
        let w = &self.w0 + dw;
        Ok((&w.mul(&self.d) - &self.labels).frobenius_norm_sq())
    }

    /// `∂L/∂ΔW = 2(ΔW − Λ')`.
    pub fn grad(&self, dw: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(dw)?;
        Ok((dw - &self.target).scale(2.0))
    }

    /// `∂L/∂ΔW = 2((W₀ + ΔW)D − labels)Dᵀ`.
    pub fn grad_full(&self, dw: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(dw)?;
        let w = &self.w0 + dw;
        let res = &w.mul(&self.d) - &self.labels;
        Ok(res.mul_t(&self.d).scale(2.0))
    }
}

pub fn make_whitened_task<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    samples: usize,
    r_a: usize,
    rng: &mut R,
) -> Result<WhitenedTask> {
    make_whitened_task_with(m, n, samples, r_a, &TaskOptions::default(), rng)
}

/// Builds `D` from a uniform `St(N, n)` sample, a Gaussian `W₀`, and labels
/// `(W₀ + U diag(σ) Vᵀ)D + E` whose noise `E` lies outside the row space of
/// `D`, so `Λ' = U diag(σ) Vᵀ` exactly.
pub fn make_whitened_task_with<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    samples: usize,
    r_a: usize,
    opts: &TaskOptions,
    rng: &mut R,
) -> Result<WhitenedTask> {
    if samples < n {
        return Err(Error::InvalidArgument(format!(
            "whitened task needs N >= n, got N = {samples}, n = {n}"
        )));
    }
    if r_a == 0 || r_a > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "planted rank {r_a} must lie in [1, min(m, n)]"
        )));
    }
    let d = sample_stiefel_uniform(samples, n, rng)?
        .into_inner()
        .transpose();
    let std = opts.w0_std / (n as f64).sqrt();
    let w0 = DenseMatrix::from_fn(m, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    });
    let sigma = singular_value_profile(
        r_a,
        if r_a == 1 { 1.0 } else { opts.kappa },
        Spacing::Linear,
        opts.scale,
    )?;
    let u = sample_stiefel_uniform(m, r_a, rng)?;
    let v = sample_stiefel_uniform(n, r_a, rng)?;
    let us = DenseMatrix::from_fn(m, r_a, |i, j| u.as_matrix()[(i, j)] * sigma[j]);
    let planted = us.mul_t(v.as_matrix());

    let mut labels = (&w0 + &planted).mul(&d);
    if samples > n && opts.noise > 0.0 {
        let raw = DenseMatrix::from_fn(m, samples, |_, _| StandardNormal.sample(rng));
        // remove the component in the row space of D
        let inside = raw.mul_t(&d).mul(&d);
        let e = &raw - &inside;
        let norm = e.frobenius_norm();
        if norm > 0.0 {
            labels.add_scaled(opts.noise / norm, &e);
        }
    }
    let projected = labels.mul_t(&d);
    let target = &projected - &w0;
    let constant = labels.frobenius_norm_sq() - projected.frobenius_norm_sq();
    Ok(WhitenedTask {
        w0,
        d,
        labels,
        target,
        constant,
        u,
        v,
        sigma,
    })
}
