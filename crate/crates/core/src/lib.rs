#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting comparisons are intentional

pub mod clustering;
pub mod config;
pub mod dataset;
pub mod distributions;
mod error;
pub mod estimation;
pub mod model;
pub mod normal;
mod optim;
pub mod pipeline;
mod quadrature;
pub mod similarity;
pub mod training_sets;
pub mod verification;

pub use error::{Error, Result};
