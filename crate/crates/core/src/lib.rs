//! Shapley-value edge attribution and explanation-driven graph
//! sparsification for GNN inference.
//!
//! The pipeline: load a [`GraphBundle`] and [`ModelWeights`], explain
//! every node with an [`explain::NodeExplainer`], fold the local scores
//! into one signed score per edge with [`sparsify::aggregate`], then prune
//! the lowest-scored edges and measure what the model loses with
//! [`eval::run_sweep`].

pub mod bundle;
pub mod engine;
pub mod error;
pub mod eval;
pub mod explain;
pub mod graph;
pub mod io;
pub mod macs;
pub mod model;
pub mod sparsify;
pub mod synth;

pub use bundle::{load_bundle, save_bundle, FORMAT_VERSION};
pub use engine::{EdgeMask, Engine, Normalization, Prediction};
pub use error::{Error, Result};
pub use graph::{extract_computational_graph, ComputationalGraph, EdgeId, GraphBundle, RawGraph, Split};
pub use macs::count_macs;
pub use model::{load_weights, save_weights, ModelKind, ModelWeights};
pub use sparsify::{aggregate, sparsify, Aggregation, GlobalEdgeScores, SparsifiedGraph};
