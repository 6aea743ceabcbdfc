use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "Adam needs beta1, beta2 in [0, 1) and epsilon > 0, got {self:?}"
            )))
        }
    }
}

/// Moment estimates for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: DenseMatrix,
    pub second: DenseMatrix,
    pub step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            first: DenseMatrix::zeros(rows, cols),
            second: DenseMatrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn like(m: &DenseMatrix) -> Self {
        Self::new(m.rows(), m.cols())
    }
}

/// Advances `state` with `g` and returns the bias-corrected direction
/// `m̂ / (√v̂ + ε)`.
pub fn adam_transform(
    state: &mut AdamState,
    g: &DenseMatrix,
    p: &AdamParams,
) -> Result<DenseMatrix> {
    if state.first.shape() != g.shape() {
        return Err(Error::shape(
            "adam_transform",
            format!("{}x{}", state.first.rows(), state.first.cols()),
            format!("{}x{}", g.rows(), g.cols()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - p.beta1.powi(t);
    let c2 = 1.0 - p.beta2.powi(t);
    let mut out = DenseMatrix::zeros(g.rows(), g.cols());
    let gs = g.as_slice();
    let ms = state.first.as_mut_slice();
    for (mi, gi) in ms.iter_mut().zip(gs) {
        *mi = p.beta1 * *mi + (1.0 - p.beta1) * gi;
    }
    let vs = state.second.as_mut_slice();
    for (vi, gi) in vs.iter_mut().zip(gs) {
        *vi = p.beta2 * *vi + (1.0 - p.beta2) * gi * gi;
    }
    let ms = state.first.as_slice();
    let vs = state.second.as_slice();
    for ((o, mi), vi) in out.as_mut_slice().iter_mut().zip(ms).zip(vs) {
        *o = (mi / c1) / ((vi / c2).sqrt() + p.epsilon);
    }
    Ok(out)
}
