use std::fmt::Write;

use numerics::Tensor;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityCatalog, EntityClass, FlowGraph, FlowNode};
use crate::error::{Error, Result};

/// Flow-graph JSON plus the relaxed adjacency and the threshold used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedGraph {
    #[serde(flatten)]
    pub graph: FlowGraph,
    pub adjacency: Vec<Vec<f64>>,
    pub threshold: f64,
}

/// Twice the uniform doubly-stochastic entry.
pub fn default_threshold(n: usize) -> f64 {
    2.0 / n.max(1) as f64
}

/// Edge `(i, j)` for every off-diagonal entry `A[i][j] >= tau`.
pub fn export_graph(adjacency: &Tensor, nodes: &[usize], catalog: &EntityCatalog, tau: f64) -> Result<ExportedGraph> {
    let n = nodes.len();
    if adjacency.shape() != [n, n] {
        return Err(Error::Invalid(format!(
            "adjacency {:?} does not match {n} nodes",
            adjacency.shape()
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("threshold {tau} outside (0, 1]")));
    }
    let mut graph = FlowGraph::default();
    for &g in nodes {
        let (label, class) = catalog.node_label(g)?;
        graph.nodes.push(FlowNode { label, class });
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && adjacency.at(i, j) >= tau {
                graph.edges.push((i, j));
            }
        }
    }
    Ok(ExportedGraph {
        graph,
        adjacency: if n == 0 { Vec::new() } else { adjacency.to_rows() },
        threshold: tau,
    })
}

fn shape(class: EntityClass) -> &'static str {
    match class {
        EntityClass::Action => "box",
        EntityClass::Ingredient => "ellipse",
        EntityClass::Location => "diamond",
    }
}

/// Graphviz digraph with one node shape per entity class.
pub fn to_dot(graph: &FlowGraph, name: &str) -> String {
    let mut out = String::new();
    let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
    writeln!(out, "digraph \"{}\" {{", escape(name)).unwrap();
    for (i, node) in graph.nodes.iter().enumerate() {
        writeln!(out, "  n{i} [label=\"{}\", shape={}];", escape(&node.label), shape(node.class)).unwrap();
    }
    for (s, d) in &graph.edges {
        writeln!(out, "  n{s} -> n{d};").unwrap();
    }
    out.push_str("}\n");
    out
}
