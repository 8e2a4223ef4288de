//! Causal-effect-guided one-shot structured pruning.
//!
//! The crate contains a small inference engine ([`graph`]), a fixture
//! trainer ([`train`]), residual-aware channel coupling ([`coupling`]), the
//! causal scoring and significance machinery ([`causal`]), the pruning
//! methods ([`pruners`]), datasets and analysis manifolds ([`data`]) and the
//! pruning-curve evaluation harness ([`eval`]).

pub mod causal;
pub mod config;
pub mod coupling;
pub mod data;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod graph;
pub mod pruners;
pub mod rng;
pub mod tensor;
pub mod train;
mod util;

pub use error::{Error, ErrorKind, Result};
pub use graph::{LayerKind, LayerNode, ModelGraph, NeuronId, NodeId};
pub use tensor::Tensor;
pub use util::atomic_write;
