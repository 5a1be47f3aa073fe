// Validation writes `!(x > 0.0)` on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod evalsuite;
pub mod experiment;
pub mod prefdata;
pub mod qescore;
pub mod rng;
pub mod seqmodel;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
