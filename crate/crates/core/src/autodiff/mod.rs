//! Matrix-level reverse-mode automatic differentiation.

pub mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{Tape, Var};
