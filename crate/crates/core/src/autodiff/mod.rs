//! Minimal reverse-mode differentiation, dense layers, and Adam.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use graph::{gelu, normal_cdf, sigmoid, softplus, Gradients, Graph, Matrix, Var};
pub use mlp::{Activation, BoundMlp, Linear, Mlp, MlpSpec};
