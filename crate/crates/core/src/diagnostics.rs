//! Spectral and geometric diagnostics: stable rank, subspace alignment
//! (principal-angle cosines), misalignment, and directional diversity of
//! the rows of an update matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::stiefel::StiefelMatrix;

/// Rows with norm below this are excluded from the diversity diagnostic.
pub const ROW_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub singular_values: Vec<f64>,
    pub frobenius_norm: f64,
    pub spectral_norm: f64,
    pub stable_rank: f64,
}

/// `sr(W) = ||W||_F^2 / ||W||_2^2`.
pub fn stable_rank(w: &DenseMatrix) -> Result<SpectrumSummary> {
    let singular_values = linalg::singular_values(w);
    let spectral_norm = singular_values[0];
    if spectral_norm == 0.0 {
        return Err(Error::ZeroMatrix {
            op: "stable_rank",
            what: "stable rank",
        });
    }
    let frobenius_norm = w.frobenius_norm();
    let stable_rank = (frobenius_norm / spectral_norm).powi(2);
    Ok(SpectrumSummary {
        singular_values,
        frobenius_norm,
        spectral_norm,
        stable_rank,
    })
}

/// Alignment between a reference basis `U` (`m x r_A`) and an iterate `X` (`m x r`).
#[derive(Debug, Clone)]
pub struct AlignmentReport {
    /// `Φ = U^T X`.
    pub phi: DenseMatrix,
    /// Descending singular values of `Φ` (cosines of the principal angles).
    pub singular_values: Vec<f64>,
    /// `Tr(Φ Φ^T)`.
    pub trace_phi: f64,
    /// `σ_{r_A}(Φ)`.
    pub sigma_min_phi: f64,
    /// `Tr(I - Φ Φ^T)`, the squared chordal distance.
    pub misalignment_trace: f64,
}

fn check_alignment_dims(op: &'static str, u: &StiefelMatrix, x: &StiefelMatrix) -> Result<()> {
    let (m, ra) = (u.rows(), u.cols());
    let (mx, r) = (x.rows(), x.cols());
    if m != mx || ra > r || r > m {
        return Err(Error::shape(
            op,
            "U: m x r_A, X: m x r with r_A <= r <= m",
            format!("U: {m}x{ra}, X: {mx}x{r}"),
        ));
    }
    Ok(())
}

pub fn alignment(u: &StiefelMatrix, x: &StiefelMatrix) -> Result<AlignmentReport> {
    check_alignment_dims("alignment", u, x)?;
    Ok(alignment_unchecked(u.as_matrix(), x.as_matrix()))
}

pub(crate) fn alignment_unchecked(u: &DenseMatrix, x: &DenseMatrix) -> AlignmentReport {
    let phi = u.t_mul(x);
    let singular_values = linalg::singular_values(&phi);
    let trace_phi = phi.frobenius_norm_sq();
    let ra = u.cols();
    let sigma_min_phi = singular_values.get(ra - 1).copied().unwrap_or(0.0);
    AlignmentReport {
        misalignment_trace: ra as f64 - trace_phi,
        phi,
        singular_values,
        trace_phi,
        sigma_min_phi,
    }
}

/// `Tr(Ω Ω^T)` for `Ω = U_⊥^T X`, evaluated as `r - Tr(Φ^T Φ)` without
/// forming the orthogonal complement.
pub fn misalignment_trace(u: &StiefelMatrix, x: &StiefelMatrix) -> Result<f64> {
    check_alignment_dims("misalignment_trace", u, x)?;
    let phi = u.as_matrix().t_mul(x.as_matrix());
    Ok(x.cols() as f64 - phi.frobenius_norm_sq())
}

#[derive(Debug, Clone)]
pub struct DirectionDiversity {
    /// Pairwise `||w_i/|w_i| - w_j/|w_j| ||` over the kept rows.
    pub distances: DenseMatrix,
    pub kept_rows: Vec<usize>,
    pub excluded_rows: Vec<usize>,
    /// Mean over distinct pairs; zero when fewer than two rows are kept.
    pub mean_distance: f64,
}

pub fn pairwise_direction_distances(w: &DenseMatrix) -> Result<DirectionDiversity> {
    let n = w.cols();
    let mut kept_rows = Vec::new();
    let mut excluded_rows = Vec::new();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..w.rows() {
        let row = w.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ROW_NORM_FLOOR {
            excluded_rows.push(i);
        } else {
            kept_rows.push(i);
            dirs.push(row.iter().map(|v| v / norm).collect());
        }
    }
    if kept_rows.is_empty() {
        return Err(Error::ZeroMatrix {
            op: "pairwise_direction_distances",
            what: "row directions",
        });
    }
    let k = kept_rows.len();
    let mut distances = DenseMatrix::zeros(k, k);
    let mut total = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let d = (0..n)
                .map(|c| (dirs[i][c] - dirs[j][c]).powi(2))
                .sum::<f64>()
                .sqrt()
                .min(2.0);
            distances[(i, j)] = d;
            distances[(j, i)] = d;
            total += d;
        }
    }
    let pairs = k * (k - 1) / 2;
    let mean_distance = if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    };
    Ok(DirectionDiversity {
        distances,
        kept_rows,
        excluded_rows,
        mean_distance,
    })
}
