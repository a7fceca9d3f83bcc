//! Unsupervised recipe-to-graph-to-recipe learning.
//!
//! An entity identifier tags each instruction with its action, ingredients
//! and locations. A graph structure encoder learns a relaxed adjacency over
//! those entities step by step, and an instruction decoder reconstructs the
//! recipe from the resulting graph sequence. The reconstruction loss is the
//! only signal the graph structure receives.

pub mod corpus;
pub mod decoder;
pub mod entity;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
