use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::stiefel::{sample_stiefel_uniform, StiefelMatrix};

/// How the `r_A` singular values are placed on `[1/κ, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    /// Evenly spaced.
    #[default]
    Linear,
    /// Evenly spaced in log scale.
    Geometric,
}

impl std::str::FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "even" => Ok(Spacing::Linear),
            "geometric" | "log" => Ok(Spacing::Geometric),
            other => Err(Error::Parse(format!("unknown spacing {other:?}"))),
        }
    }
}

/// Descending singular values with `σ₁ = scale` and `σ_{r_A} = scale/κ`.
pub fn singular_value_profile(
    r_a: usize,
    kappa: f64,
    spacing: Spacing,
    scale: f64,
) -> Result<Vec<f64>> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "condition number must be >= 1, got {kappa}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target scale must be positive, got {scale}"
        )));
    }
    if r_a == 0 {
        return Err(Error::InvalidArgument("target rank must be >= 1".into()));
    }
    if r_a == 1 {
        if kappa != 1.0 {
            return Err(Error::InvalidArgument(
                "a rank-1 target has condition number 1".into(),
            ));
        }
        return Ok(vec![scale]);
    }
    let lo = 1.0 / kappa;
    let last = (r_a - 1) as f64;
    Ok((0..r_a)
        .map(|i| {
            let t = i as f64 / last;
            let s = match spacing {
                Spacing::Linear => 1.0 - t * (1.0 - lo),
                Spacing::Geometric => kappa.powf(-t),
            };
            scale * s
        })
        .collect())
}

/// Low-rank target `A = U diag(σ) Vᵀ`, stored with `m >= n`.
#[derive(Debug, Clone)]
pub struct FactorizationTarget {
    pub a: DenseMatrix,
    pub u: StiefelMatrix,
    pub v: StiefelMatrix,
    pub sigma: Vec<f64>,
    pub kappa: f64,
    /// Set when the requested shape had `m < n` and was transposed.
    pub transposed: bool,
}

impl FactorizationTarget {
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `σ₁(A)`.
    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }
}

fn assemble(u: &DenseMatrix, sigma: &[f64], v: &DenseMatrix) -> DenseMatrix {
    let us = DenseMatrix::from_fn(u.rows(), u.cols(), |i, j| u[(i, j)] * sigma[j]);
    us.mul_t(v)
}

/// Normalized target (`σ₁ = 1`, `σ_{r_A} = 1/κ`).
pub fn make_target<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    r_a: usize,
    kappa: f64,
    spacing: Spacing,
    rng: &mut R,
) -> Result<FactorizationTarget> {
    make_target_scaled(m, n, r_a, kappa, spacing, 1.0, rng)
}

/// Target whose singular values are the normalized profile times `scale`.
/// `scale = κ` puts them on `[1, κ]`.
pub fn make_target_scaled<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    r_a: usize,
    kappa: f64,
    spacing: Spacing,
    scale: f64,
    rng: &mut R,
) -> Result<FactorizationTarget> {
    let (m, n, transposed) = if m >= n { (m, n, false) } else { (n, m, true) };
    if 2 * r_a > n {
        return Err(Error::InvalidArgument(format!(
            "target rank {r_a} exceeds min(m, n)/2 = {}",
            n / 2
        )));
    }
    let sigma = singular_value_profile(r_a, kappa, spacing, scale)?;
    let u = sample_stiefel_uniform(m, r_a, rng)?;
    let v = sample_stiefel_uniform(n, r_a, rng)?;
    let a = assemble(u.as_matrix(), &sigma, v.as_matrix());
    Ok(FactorizationTarget {
        a,
        u,
        v,
        sigma,
        kappa,
        transposed,
    })
}

/// Symmetric PSD target `B = U diag(σ) Uᵀ`.
#[derive(Debug, Clone)]
pub struct SymTarget {
    pub b: DenseMatrix,
    pub u: StiefelMatrix,
    pub sigma: Vec<f64>,
    pub kappa: f64,
}

impl SymTarget {
    pub fn m(&self) -> usize {
        self.b.rows()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }
}

pub fn make_sym_target<R: Rng + ?Sized>(
    m: usize,
    r_b: usize,
    kappa: f64,
    spacing: Spacing,
    scale: f64,
    rng: &mut R,
) -> Result<SymTarget> {
    if 2 * r_b > m {
        return Err(Error::InvalidArgument(format!(
            "target rank {r_b} exceeds m/2 = {}",
            m / 2
        )));
    }
    let sigma = singular_value_profile(r_b, kappa, spacing, scale)?;
    let u = sample_stiefel_uniform(m, r_b, rng)?;
    let b = assemble(u.as_matrix(), &sigma, u.as_matrix()).symmetric_part();
    Ok(SymTarget { b, u, sigma, kappa })
}

/// `X Θ Yᵀ` factors for the polar-parameterized problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarFactors {
    pub x: StiefelMatrix,
    pub theta: DenseMatrix,
    pub y: StiefelMatrix,
}

impl PolarFactors {
    /// `X₀`, `Y₀` uniform on their Stiefel manifolds and `Θ = 0`.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, r: usize, rng: &mut R) -> Result<Self> {
        let x = sample_stiefel_uniform(m, r, rng)?;
        let y = sample_stiefel_uniform(n, r, rng)?;
        Ok(Self {
            x,
            theta: DenseMatrix::zeros(r, r),
            y,
        })
    }

    pub fn rank(&self) -> usize {
        self.theta.rows()
    }

    pub fn product(&self) -> DenseMatrix {
        self.x
            .as_matrix()
            .mul(&self.theta)
            .mul_t(self.y.as_matrix())
    }
}

/// Unconstrained `Z₁ Z₂ᵀ` factors.
#[derive(Debug, Clone, PartialEq)]
pub struct BMFactors {
    pub z1: DenseMatrix,
    pub z2: DenseMatrix,
}

impl BMFactors {
    /// Entries i.i.d. `N(0, 1/max(m, n))`.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, r: usize, rng: &mut R) -> Result<Self> {
        let std = 1.0 / (m.max(n) as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let z1 = DenseMatrix::from_fn(m, r, |_, _| normal.sample(rng));
        let z2 = DenseMatrix::from_fn(n, r, |_, _| normal.sample(rng));
        Ok(Self { z1, z2 })
    }

    pub fn product(&self) -> DenseMatrix {
        self.z1.mul_t(&self.z2)
    }
}

/// `X Θ Xᵀ` factors for the symmetric problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SymFactors {
    pub x: StiefelMatrix,
    pub theta: DenseMatrix,
}

impl SymFactors {
    pub fn random<R: Rng + ?Sized>(m: usize, r: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            x: sample_stiefel_uniform(m, r, rng)?,
            theta: DenseMatrix::zeros(r, r),
        })
    }

    pub fn product(&self) -> DenseMatrix {
        self.x
            .as_matrix()
            .mul(&self.theta)
            .mul_t(self.x.as_matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = make_target(4, 4, 1, 1.0, Spacing::Linear, &mut rng).unwrap();
        assert_eq!(t.sigma, vec![1.0]);
        let s = crate::linalg::singular_values(&t.a);
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1] < 1e-12);
    }

    #[test]
    fn even_spacing_kappa_ten() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = make_target(50, 50, 4, 10.0, Spacing::Linear, &mut rng).unwrap();
        let want = [1.0, 0.7, 0.4, 0.1];
        for (s, w) in t.sigma.iter().zip(want) {
            assert!((s - w).abs() < 1e-15);
        }
        let rec = assemble(t.u.as_matrix(), &t.sigma, t.v.as_matrix());
        assert!((&rec - &t.a).frobenius_norm() <= 1e-12 * t.a.frobenius_norm());
    }

    #[test]
    fn rectangular_kappa_hundred() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = make_target(50, 40, 4, 100.0, Spacing::Linear, &mut rng).unwrap();
        let s = crate::linalg::singular_values(&t.a);
        assert!((s[0] / s[3] - 100.0).abs() < 1e-9);
        assert_eq!(t.a.shape(), (50, 40));
    }

    #[test]
    fn wide_request_is_transposed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = make_target(10, 20, 2, 2.0, Spacing::Linear, &mut rng).unwrap();
        assert!(t.transposed);
        assert_eq!(t.a.shape(), (20, 10));
    }

    #[test]
    fn target_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(make_target(8, 6, 4, 2.0, Spacing::Linear, &mut rng).is_err());
        assert!(make_target(8, 6, 2, 0.5, Spacing::Linear, &mut rng).is_err());
        assert!(make_target(8, 6, 1, 3.0, Spacing::Linear, &mut rng).is_err());
    }

    #[test]
    fn scaled_profile_spans_one_to_kappa() {
        let s = singular_value_profile(4, 10.0, Spacing::Linear, 10.0).unwrap();
        let want = [10.0, 7.0, 4.0, 1.0];
        for (a, b) in s.iter().zip(want) {
            assert!((a - b).abs() < 1e-13);
        }
        let g = singular_value_profile(3, 100.0, Spacing::Geometric, 1.0).unwrap();
        assert!((g[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sym_target_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = make_sym_target(10, 3, 10.0, Spacing::Linear, 1.0, &mut rng).unwrap();
        assert!((&t.b - &t.b.transpose()).max_abs() < 1e-15);
        let e = crate::linalg::sym_eigenvalues(&t.b).unwrap();
        for l in e {
            let near_zero = l.abs() < 1e-12;
            let in_band = (0.1 - 1e-12..=1.0 + 1e-12).contains(&l);
            assert!(near_zero || in_band, "eigenvalue {l}");
        }
    }
}
