//! Overparameterized matrix factorization: targets, the three problems and
//! their iterations, checkable alignment lemmas, and run traces.

mod alignment;
mod run;
mod steps;
mod target;
mod trace;

pub use alignment::*;
pub use run::*;
pub use steps::*;
pub use target::*;
pub use trace::*;
