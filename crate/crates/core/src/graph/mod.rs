//! Graph structure encoder.
//!
//! For each instruction the entities seen so far become nodes. Their
//! embeddings give a relation matrix `R = Z Mᵀ`, log-domain Sinkhorn turns
//! `R` into a relaxed doubly-stochastic adjacency `A`, and a two-layer GCN
//! over the symmetrized, degree-normalized `A` yields node embeddings. Those
//! are classified into the three entity classes (the pretext task) and
//! mean-pooled into one graph vector per step. The pooled vectors, joined
//! with the sentence embeddings, pass through a bidirectional GRU.

mod encoder;
mod export;
mod sinkhorn;

pub use encoder::{
    gcn_forward, is_adjacency_param, normalized_adjacency, pretext_loss, EncodedRecipe, GraphConfig, GraphEncoder,
    NodeSet, StepGraph, StepInput, PREFIX,
};
pub use export::{default_threshold, export_graph, to_dot, ExportedGraph};
pub use sinkhorn::{sinkhorn_normalize, sinkhorn_values, DEFAULT_ITERS};
