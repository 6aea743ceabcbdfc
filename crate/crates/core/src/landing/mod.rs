//! Retraction-free training of a polar adapter on a whitened linear task,
//! with a plain two-factor adapter as the baseline.

mod adam;
mod checkpoint;
mod field;
mod task;
mod train;

pub use adam::*;
pub use checkpoint::*;
pub use field::*;
pub use task::*;
pub use train::*;
