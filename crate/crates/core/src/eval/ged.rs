//! Graph edit distance between labeled flow graphs.
//!
//! A node matches another when both label and class agree. The exact mode
//! is an A* search over assignments of the first graph's nodes, in index
//! order, to unused nodes of the second graph or to deletion. Its lower bound
//! adds a label-multiset bound on the unassigned nodes to an edge-count bound
//! on the edges not yet decided.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{FlowGraph, FlowNode};
use crate::error::{Error, Result};

/// Graphs larger than this use heuristic mode unless configured otherwise.
pub const DEFAULT_EXACT_LIMIT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditCost {
    pub node_insert: f64,
    pub node_delete: f64,
    /// Substitution between nodes that differ in label or class.
    pub node_substitute: f64,
    pub edge_insert: f64,
    pub edge_delete: f64,
}

impl Default for EditCost {
    fn default() -> Self {
        Self {
            node_insert: 1.0,
            node_delete: 1.0,
            node_substitute: 1.0,
            edge_insert: 1.0,
            edge_delete: 1.0,
        }
    }
}

impl EditCost {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.node_insert,
            self.node_delete,
            self.node_substitute,
            self.edge_insert,
            self.edge_delete,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("edit costs must be finite and nonnegative".into()))
        }
    }

    fn substitute(&self, a: &FlowNode, b: &FlowNode) -> f64 {
        if a == b {
            0.0
        } else {
            self.node_substitute
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Directed,
    #[default]
    Undirected,
}

impl EdgeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeMode::Directed => "directed",
            EdgeMode::Undirected => "undirected",
        }
    }

    fn key(self, a: usize, b: usize) -> (usize, usize) {
        match self {
            EdgeMode::Directed => (a, b),
            EdgeMode::Undirected => (a.min(b), a.max(b)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    SubstituteNode { from: usize, to: usize, cost: f64 },
    DeleteNode { node: usize },
    InsertNode { node: usize },
    /// Edge of the first graph.
    DeleteEdge { src: usize, dst: usize },
    /// Edge of the second graph.
    InsertEdge { src: usize, dst: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GedResult {
    pub distance: f64,
    pub exact: bool,
    /// The optimal edit path, in exact mode.
    pub path: Option<Vec<EditOp>>,
}

/// Edge set of `g` under `mode`, with self-loops kept.
fn edge_set(g: &FlowGraph, mode: EdgeMode) -> BTreeSet<(usize, usize)> {
    g.edges.iter().map(|&(a, b)| mode.key(a, b)).collect()
}

/// Cost and edit operations of a complete assignment: `mapping[i]` is the
/// image of node `i` of `g1` in `g2`, or `None` for deletion.
pub fn mapping_cost(
    g1: &FlowGraph,
    g2: &FlowGraph,
    mapping: &[Option<usize>],
    costs: &EditCost,
    mode: EdgeMode,
) -> Result<(f64, Vec<EditOp>)> {
    if mapping.len() != g1.nodes.len() {
        return Err(Error::Invalid(format!(
            "mapping covers {} of {} nodes",
            mapping.len(),
            g1.nodes.len()
        )));
    }
    let mut inverse = vec![None; g2.nodes.len()];
    for (i, m) in mapping.iter().enumerate() {
        if let Some(j) = *m {
            if j >= g2.nodes.len() || inverse[j].is_some() {
                return Err(Error::Invalid(format!("node {j} of the second graph is not a valid unique image")));
            }
            inverse[j] = Some(i);
        }
    }
    let mut cost = 0.0;
    let mut ops = Vec::new();
    for (i, m) in mapping.iter().enumerate() {
        match *m {
            Some(j) => {
                let c = costs.substitute(&g1.nodes[i], &g2.nodes[j]);
                cost += c;
                ops.push(EditOp::SubstituteNode { from: i, to: j, cost: c });
            }
            None => {
                cost += costs.node_delete;
                ops.push(EditOp::DeleteNode { node: i });
            }
        }
    }
    for (j, inv) in inverse.iter().enumerate() {
        if inv.is_none() {
            cost += costs.node_insert;
            ops.push(EditOp::InsertNode { node: j });
        }
    }
    let e1 = edge_set(g1, mode);
    let e2 = edge_set(g2, mode);
    for &(a, b) in &e1 {
        let kept = match (mapping[a], mapping[b]) {
            (Some(x), Some(y)) => e2.contains(&mode.key(x, y)),
            _ => false,
        };
        if !kept {
            cost += costs.edge_delete;
            ops.push(EditOp::DeleteEdge { src: a, dst: b });
        }
    }
    for &(x, y) in &e2 {
        let kept = match (inverse[x], inverse[y]) {
            (Some(a), Some(b)) => e1.contains(&mode.key(a, b)),
            _ => false,
        };
        if !kept {
            cost += costs.edge_insert;
            ops.push(EditOp::InsertEdge { src: x, dst: y });
        }
    }
    Ok((cost, ops))
}

struct Search<'a> {
    g1: &'a FlowGraph,
    g2: &'a FlowGraph,
    costs: &'a EditCost,
    mode: EdgeMode,
    e1: BTreeSet<(usize, usize)>,
    e2: BTreeSet<(usize, usize)>,
}

#[derive(Clone)]
struct State {
    /// Lower bound on the cost of any completion.
    f: f64,
    g: f64,
    mapping: Vec<Option<usize>>,
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for State {}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for State {
    // Reversed so the heap pops the lowest bound, deeper states first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.mapping.len().cmp(&other.mapping.len()))
    }
}

impl Search<'_> {
    fn used(&self, mapping: &[Option<usize>]) -> Vec<bool> {
        let mut used = vec![false; self.g2.nodes.len()];
        for j in mapping.iter().flatten() {
            used[*j] = true;
        }
        used
    }

    /// Cost added by assigning the next node of `g1` to `image`.
    fn extension_cost(&self, mapping: &[Option<usize>], image: Option<usize>) -> f64 {
        let i = mapping.len();
        let c = self.costs;
        let mut cost = match image {
            Some(j) => c.substitute(&self.g1.nodes[i], &self.g2.nodes[j]),
            None => c.node_delete,
        };
        let image_of = |k: usize| if k == i { image } else { mapping[k] };
        let mut pairs = Vec::with_capacity(2 * i + 1);
        for k in 0..=i {
            pairs.push((i, k));
            if self.mode == EdgeMode::Directed && k != i {
                pairs.push((k, i));
            }
        }
        for (a, b) in pairs {
            let in1 = self.e1.contains(&self.mode.key(a, b));
            let in2 = match (image_of(a), image_of(b)) {
                (Some(x), Some(y)) => self.e2.contains(&self.mode.key(x, y)),
                _ => false,
            };
            if in1 && !in2 {
                cost += c.edge_delete;
            } else if in2 && !in1 {
                cost += c.edge_insert;
            }
        }
        cost
    }

    /// Cost of inserting every unused node of `g2` and every edge touching one.
    fn completion_cost(&self, mapping: &[Option<usize>]) -> f64 {
        let used = self.used(mapping);
        let nodes = used.iter().filter(|u| !**u).count() as f64 * self.costs.node_insert;
        let edges = self.e2.iter().filter(|(x, y)| !used[*x] || !used[*y]).count() as f64 * self.costs.edge_insert;
        nodes + edges
    }

    fn lower_bound(&self, mapping: &[Option<usize>]) -> f64 {
        let depth = mapping.len();
        let used = self.used(mapping);
        let c = self.costs;
        let mut left: HashMap<&FlowNode, usize> = HashMap::new();
        for n in &self.g1.nodes[depth..] {
            *left.entry(n).or_default() += 1;
        }
        let mut right: HashMap<&FlowNode, usize> = HashMap::new();
        for (j, n) in self.g2.nodes.iter().enumerate() {
            if !used[j] {
                *right.entry(n).or_default() += 1;
            }
        }
        let n1 = self.g1.nodes.len() - depth;
        let n2 = right.values().sum::<usize>();
        let common: usize = left.iter().map(|(k, v)| (*v).min(*right.get(k).unwrap_or(&0))).sum();
        let node_bound = (0..=n1.min(n2))
            .map(|k| k.saturating_sub(common) as f64 * c.node_substitute + (n1 - k) as f64 * c.node_delete + (n2 - k) as f64 * c.node_insert)
            .fold(f64::INFINITY, f64::min);
        let r1 = self.e1.iter().filter(|(a, b)| *a >= depth || *b >= depth).count();
        let r2 = self.e2.iter().filter(|(x, y)| !used[*x] || !used[*y]).count();
        let edge_bound = if r1 > r2 {
            (r1 - r2) as f64 * c.edge_delete
        } else {
            (r2 - r1) as f64 * c.edge_insert
        };
        node_bound + edge_bound
    }
}

/// Minimal edit cost between `g1` and `g2` by A* search.
pub fn ged_exact(g1: &FlowGraph, g2: &FlowGraph, costs: &EditCost, mode: EdgeMode, limit: usize) -> Result<GedResult> {
    costs.validate()?;
    g1.validate()?;
    g2.validate()?;
    let nodes = g1.nodes.len().max(g2.nodes.len());
    if nodes > limit {
        return Err(Error::ExactLimit { nodes, limit });
    }
    let search = Search {
        g1,
        g2,
        costs,
        mode,
        e1: edge_set(g1, mode),
        e2: edge_set(g2, mode),
    };
    let mut heap = BinaryHeap::new();
    heap.push(State {
        f: if g1.nodes.is_empty() {
            search.completion_cost(&[])
        } else {
            search.lower_bound(&[])
        },
        g: 0.0,
        mapping: Vec::new(),
    });
    while let Some(state) = heap.pop() {
        if state.mapping.len() == g1.nodes.len() {
            let (distance, path) = mapping_cost(g1, g2, &state.mapping, costs, mode)?;
            return Ok(GedResult {
                distance,
                exact: true,
                path: Some(path),
            });
        }
        let used = search.used(&state.mapping);
        let images = (0..g2.nodes.len()).filter(|&j| !used[j]).map(Some).chain([None]);
        for image in images {
            let g = state.g + search.extension_cost(&state.mapping, image);
            let mut mapping = state.mapping.clone();
            mapping.push(image);
            let f = if mapping.len() == g1.nodes.len() {
                g + search.completion_cost(&mapping)
            } else {
                g + search.lower_bound(&mapping)
            };
            heap.push(State { f, g, mapping });
        }
    }
    unreachable!("the deletion branch always leads to a complete assignment")
}

/// Upper bound from a greedy assignment: each node takes the first unused
/// identical node, leftovers pair up in order when substituting is cheaper
/// than deleting and inserting. The returned distance is the exact cost of
/// that assignment.
pub fn ged_heuristic(g1: &FlowGraph, g2: &FlowGraph, costs: &EditCost, mode: EdgeMode) -> Result<GedResult> {
    costs.validate()?;
    g1.validate()?;
    g2.validate()?;
    let mut used = vec![false; g2.nodes.len()];
    let mut mapping: Vec<Option<usize>> = vec![None; g1.nodes.len()];
    for (i, node) in g1.nodes.iter().enumerate() {
        if let Some(j) = (0..g2.nodes.len()).find(|&j| !used[j] && &g2.nodes[j] == node) {
            used[j] = true;
            mapping[i] = Some(j);
        }
    }
    if costs.node_substitute < costs.node_delete + costs.node_insert {
        let mut free = (0..g2.nodes.len()).filter(|&j| !used[j]).collect::<Vec<_>>().into_iter();
        for m in mapping.iter_mut().filter(|m| m.is_none()) {
            match free.next() {
                Some(j) => *m = Some(j),
                None => break,
            }
        }
    }
    let (distance, _) = mapping_cost(g1, g2, &mapping, costs, mode)?;
    Ok(GedResult {
        distance,
        exact: false,
        path: None,
    })
}

/// Exact mode when both graphs fit under `limit`, heuristic otherwise.
pub fn ged(g1: &FlowGraph, g2: &FlowGraph, costs: &EditCost, mode: EdgeMode, limit: usize) -> Result<GedResult> {
    if g1.nodes.len().max(g2.nodes.len()) <= limit {
        ged_exact(g1, g2, costs, mode, limit)
    } else {
        ged_heuristic(g1, g2, costs, mode)
    }
}
