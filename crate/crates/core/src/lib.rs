// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amce;
pub mod autodiff;
pub mod btl;
pub mod causal;
pub mod config;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod models;
pub mod rng;
pub mod runner;
pub mod suite;
pub mod worlds;

pub use error::{Error, Result};
