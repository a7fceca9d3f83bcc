//! Discrete reference flow graphs.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::catalog::EntityClass;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowNode {
    pub label: String,
    pub class: EntityClass,
}

impl FlowNode {
    pub fn new(label: impl Into<String>, class: EntityClass) -> Self {
        Self {
            label: label.into(),
            class,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: Vec<FlowNode>,
    /// Directed `(src, dst)` node indices.
    pub edges: Vec<(usize, usize)>,
}

impl FlowGraph {
    pub fn validate(&self) -> Result<()> {
        for &(s, d) in &self.edges {
            if s >= self.nodes.len() || d >= self.nodes.len() {
                return Err(Error::Invalid(format!(
                    "edge ({s}, {d}) out of range for {} nodes",
                    self.nodes.len()
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: FlowGraph = serde_json::from_str(text).map_err(|e| Error::Schema {
            line: e.line(),
            message: e.to_string(),
        })?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Merges nodes with equal `(label, class)` in first-occurrence order,
/// re-points edges, drops the self-loops this creates and deduplicates edges.
pub fn aggregate_duplicates(g: &FlowGraph) -> FlowGraph {
    let mut index: HashMap<&FlowNode, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let remap: Vec<usize> = g
        .nodes
        .iter()
        .map(|n| {
            *index.entry(n).or_insert_with(|| {
                nodes.push(n.clone());
                nodes.len() - 1
            })
        })
        .collect();
    let mut seen = HashSet::new();
    let edges = g
        .edges
        .iter()
        .map(|&(s, d)| (remap[s], remap[d]))
        .filter(|&(s, d)| s != d && seen.insert((s, d)))
        .collect();
    FlowGraph { nodes, edges }
}
