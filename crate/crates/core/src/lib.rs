//! Polar-decomposed low-rank parameterization `ΔW = X Θ Yᵀ` with
//! Stiefel-constrained `X`, `Y`, together with its optimizers and the
//! diagnostics used to compare it against the plain `Z₁ Z₂ᵀ` factorization.
//!
//! * [`stiefel`], [`diagnostics`], [`linalg`], [`matrix`]: manifold
//!   primitives and measures shared by everything else.
//! * [`factorization`]: the matrix-factorization testbed with Riemannian
//!   gradient descent, the Burer–Monteiro baseline and the symmetric variant.
//! * [`landing`]: retraction-free training with the landing field and Adam.
//! * [`bench`]: landing-step versus retraction-step timing.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod factorization;
pub mod landing;
pub mod linalg;
pub mod matrix;
pub mod stiefel;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use stiefel::StiefelMatrix;
