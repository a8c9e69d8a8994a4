//! Numeric substrate: dense matrices, seeded sampling, Adam, running statistics.

mod adam;
mod finite_diff;
mod matrix;
mod rng;
mod stats;

pub use adam::AdamState;
pub use finite_diff::{finite_diff, finite_diff_at};
pub(crate) use matrix::dot;
pub use matrix::Matrix;
pub use rng::{mix64, Rng};
pub use stats::RunningStats;
