//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! The engine is deliberately minimal: f64 everywhere, ranks 0 through
//! 2, a single-threaded tape, and exactly the op set the model needs.
//! Determinism is part of the contract; see [`graph::Graph`].

pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use params::{AdamConfig, AdamState, Bound, ParamStore};
pub use tensor::{GraphError, Tensor};
