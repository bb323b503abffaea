//! Classifier/rejector learning for human-AI deferral.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datagen;
pub mod defer;
pub mod error;
pub mod eval;
mod fit;
pub mod lp;
pub mod milp;
pub mod rng;
pub mod surrogates;
pub mod train;

pub use error::{Error, Result};
