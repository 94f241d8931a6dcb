// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod freeconv;
pub mod meanfield;
pub mod quadrature;
pub mod rmtsim;
pub mod specmeasure;
pub mod trainlab;

pub use error::{Error, Result};
