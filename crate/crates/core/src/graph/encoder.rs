use std::collections::BTreeSet;

use numerics::{init, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityCatalog, EntityClass};
use crate::error::{Error, Result};
use crate::graph::sinkhorn::{sinkhorn_normalize, DEFAULT_ITERS};
use crate::nn::{BiGru, Linear};

/// Parameter-name prefix of every graph-encoder parameter.
pub const PREFIX: &str = "gse.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub node_dim: usize,
    pub relation_dim: usize,
    pub gcn_hidden: usize,
    pub gcn_out: usize,
    /// Pooled graph width; equal to the sentence-embedding width.
    pub graph_dim: usize,
    pub gru_layers: usize,
    pub sinkhorn_iters: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            node_dim: 100,
            relation_dim: 100,
            gcn_hidden: 256,
            gcn_out: 768,
            graph_dim: 64,
            gru_layers: 2,
            sinkhorn_iters: DEFAULT_ITERS,
        }
    }
}

/// Entities accumulated so far, kept in ascending global-id order, which is
/// `[actions; ingredients; locations]` with names alphabetical in each class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeSet {
    ids: BTreeSet<usize>,
}

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ids: impl IntoIterator<Item = usize>) {
        self.ids.extend(ids);
    }

    pub fn ids(&self) -> Vec<usize> {
        self.ids.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self, catalog: &EntityCatalog) -> Result<Vec<EntityClass>> {
        self.ids.iter().map(|&g| catalog.resolve(g).map(|(c, _)| c)).collect()
    }
}

/// One instruction as seen by the graph encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInput {
    /// Global ids of the entities identified in this instruction.
    pub entities: Vec<usize>,
    /// Sentence embedding, width `graph_dim`.
    pub sentence: Vec<f64>,
}

/// Per-step intermediate values of one encoded recipe.
pub struct StepGraph {
    pub nodes: Vec<usize>,
    pub relation: Var,
    pub adjacency: Var,
    pub hidden: Var,
    pub class_logits: Var,
    /// `None` for steps without entities, which pool to zero.
    pub pretext: Option<Var>,
    pub pooled: Var,
}

pub struct EncodedRecipe {
    /// Recurrent graph sequence `[T × 2·graph_dim]`.
    pub sequence: Var,
    /// Pooled graph rows `[T × graph_dim]` before concatenation.
    pub pooled: Var,
    pub steps: Vec<StepGraph>,
    /// Node set after the last step.
    pub nodes: NodeSet,
    /// Pretext loss averaged over steps that have nodes; zero if none do.
    pub pretext: Var,
}

impl EncodedRecipe {
    /// Relaxed adjacency and class logits of the last step with nodes.
    pub fn final_graph(&self) -> Option<&StepGraph> {
        self.steps.iter().rev().find(|s| !s.nodes.is_empty())
    }
}

#[derive(Clone, Debug)]
pub struct GraphEncoder {
    pub config: GraphConfig,
    node_classes: Vec<usize>,
    pub node_table: ParamId,
    pub relation_z: Linear,
    pub relation_m: Linear,
    pub gcn_hidden: ParamId,
    pub gcn_out: ParamId,
    pub pretext_head: Linear,
    pub projection: Linear,
    pub gru: BiGru,
}

/// Parameters updated in the adjacency phase of alternating training.
pub fn is_adjacency_param(name: &str) -> bool {
    name.starts_with("gse.relation_z.") || name.starts_with("gse.relation_m.")
}

impl GraphEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, config: GraphConfig, catalog: &EntityCatalog) -> Result<Self> {
        let n = catalog.node_count();
        if n == 0 {
            return Err(Error::Config("graph encoder needs a non-empty catalog".into()));
        }
        let node_classes = (0..n).map(|g| catalog.resolve(g).map(|(c, _)| c.index())).collect::<Result<_>>()?;
        let node_table = store.add("gse.nodes", init::normal(rng, &[n, config.node_dim], 0.3))?;
        let relation_z = Linear::new(store, rng, "gse.relation_z", config.node_dim, config.relation_dim, true)?;
        let relation_m = Linear::new(store, rng, "gse.relation_m", config.node_dim, config.relation_dim, true)?;
        let gcn_hidden = store.add("gse.gcn1.w", init::xavier(rng, config.node_dim, config.gcn_hidden))?;
        let gcn_out = store.add("gse.gcn2.w", init::xavier(rng, config.gcn_hidden, config.gcn_out))?;
        let pretext_head = Linear::new(store, rng, "gse.pretext", config.gcn_out, EntityClass::ALL.len(), true)?;
        let projection = Linear::new(store, rng, "gse.projection", config.gcn_out, config.graph_dim, true)?;
        let gru = BiGru::new(store, rng, "gse.gru", 2 * config.graph_dim, config.graph_dim, config.gru_layers)?;
        Ok(Self {
            config,
            node_classes,
            node_table,
            relation_z,
            relation_m,
            gcn_hidden,
            gcn_out,
            pretext_head,
            projection,
            gru,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_classes.len()
    }

    /// Node feature rows `[n × node_dim]` in canonical order.
    pub fn build_node_features(&self, t: &mut Tape, s: &ParamStore, nodes: &[usize]) -> Result<Var> {
        if let Some(&bad) = nodes.iter().find(|&&g| g >= self.node_count()) {
            return Err(Error::UnknownNode(bad));
        }
        let table = t.param(s, self.node_table);
        Ok(t.gather_rows(table, nodes)?)
    }

    /// `R = Z Mᵀ` with `Z`, `M` two distinct affine maps of `x`.
    pub fn relation_matrix(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let z = self.relation_z.forward(t, s, x)?;
        let m = self.relation_m.forward(t, s, x)?;
        Ok(t.matmul_nt(z, m)?)
    }

    pub fn gcn_forward(&self, t: &mut Tape, s: &ParamStore, x: Var, a: Var) -> Result<Var> {
        let w1 = t.param(s, self.gcn_hidden);
        let w2 = t.param(s, self.gcn_out);
        gcn_forward(t, x, a, w1, w2)
    }

    pub fn pretext_logits(&self, t: &mut Tape, s: &ParamStore, h: Var) -> Result<Var> {
        Ok(self.pretext_head.forward(t, s, h)?)
    }

    pub fn node_class_targets(&self, nodes: &[usize]) -> Vec<usize> {
        nodes.iter().map(|&g| self.node_classes[g]).collect()
    }

    fn encode_step(&self, t: &mut Tape, s: &ParamStore, nodes: &[usize], has_entities: bool) -> Result<StepGraph> {
        let x = self.build_node_features(t, s, nodes)?;
        let relation = self.relation_matrix(t, s, x)?;
        let adjacency = sinkhorn_normalize(t, relation, self.config.sinkhorn_iters)?;
        let hidden = self.gcn_forward(t, s, x, adjacency)?;
        let class_logits = self.pretext_logits(t, s, hidden)?;
        let targets = self.node_class_targets(nodes);
        let (pretext, pooled) = if has_entities {
            let loss = pretext_loss(t, class_logits, &targets)?;
            let projected = self.projection.forward(t, s, hidden)?;
            (Some(loss), t.mean_axis(projected, 0)?)
        } else {
            (None, t.constant(Tensor::zeros(&[1, self.config.graph_dim]))?)
        };
        Ok(StepGraph {
            nodes: nodes.to_vec(),
            relation,
            adjacency,
            hidden,
            class_logits,
            pretext,
            pooled,
        })
    }

    /// Runs the per-step graph pipeline over a recipe, then the recurrent
    /// layer over pooled graphs concatenated with sentence embeddings.
    pub fn encode_recipe(&self, t: &mut Tape, s: &ParamStore, steps: &[StepInput]) -> Result<EncodedRecipe> {
        if steps.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = self.config.graph_dim;
        let mut nodes = NodeSet::new();
        let mut out_steps = Vec::with_capacity(steps.len());
        let mut pooled = Vec::with_capacity(steps.len());
        let mut sentences = Vec::with_capacity(steps.len() * d);
        for step in steps {
            if step.sentence.len() != d {
                return Err(Error::Invalid(format!(
                    "sentence embedding width {} differs from graph width {d}",
                    step.sentence.len()
                )));
            }
            sentences.extend_from_slice(&step.sentence);
            nodes.insert(step.entities.iter().copied());
            let g = if nodes.is_empty() {
                StepGraph::empty(t, d)?
            } else {
                self.encode_step(t, s, &nodes.ids(), !step.entities.is_empty())?
            };
            pooled.push(g.pooled);
            out_steps.push(g);
        }
        let pooled = t.concat(&pooled, 0)?;
        let sentences = t.constant(Tensor::new(vec![steps.len(), d], sentences)?)?;
        let joined = t.concat(&[pooled, sentences], 1)?;
        let sequence = self.gru.forward(t, s, joined)?;
        let losses: Vec<Var> = out_steps.iter().filter_map(|g| g.pretext).collect();
        let pretext = if losses.is_empty() {
            t.constant(Tensor::scalar(0.0))?
        } else {
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = t.add(total, l)?;
            }
            t.scale(total, 1.0 / losses.len() as f64)?
        };
        Ok(EncodedRecipe {
            sequence,
            pooled,
            steps: out_steps,
            nodes,
            pretext,
        })
    }
}

impl StepGraph {
    fn empty(t: &mut Tape, d: usize) -> Result<Self> {
        let zero = t.constant(Tensor::zeros(&[1, d]))?;
        let none = t.constant(Tensor::zeros(&[0, 0]))?;
        Ok(Self {
            nodes: Vec::new(),
            relation: none,
            adjacency: none,
            hidden: none,
            class_logits: none,
            pretext: None,
            pooled: zero,
        })
    }
}

/// Symmetric degree normalization with self-loops of `(A + Aᵀ)/2`.
pub fn normalized_adjacency(t: &mut Tape, a: Var) -> Result<Var> {
    let n = t.shape(a)[0];
    let at = t.transpose(a)?;
    let sum = t.add(a, at)?;
    let sym = t.scale(sum, 0.5)?;
    let eye = t.constant(Tensor::eye(n))?;
    let looped = t.add(sym, eye)?;
    let degree = t.sum_axis(looped, 1)?;
    let inv_sqrt = t.powf(degree, -0.5)?;
    let inv_sqrt_t = t.transpose(inv_sqrt)?;
    let left = t.mul(looped, inv_sqrt)?;
    Ok(t.mul(left, inv_sqrt_t)?)
}

/// Two propagation layers `σ(Ã H W)`: ReLU, then identity. No bias.
pub fn gcn_forward(t: &mut Tape, x: Var, a: Var, w_hidden: Var, w_out: Var) -> Result<Var> {
    let (n, m) = (t.shape(x)[0], t.shape(a));
    if m != [n, n] {
        return Err(Error::Invalid(format!("adjacency {m:?} does not match {n} node rows")));
    }
    let norm = normalized_adjacency(t, a)?;
    let agg = t.matmul(norm, x)?;
    let h = t.matmul(agg, w_hidden)?;
    let h = t.relu(h)?;
    let agg = t.matmul(norm, h)?;
    Ok(t.matmul(agg, w_out)?)
}

/// Mean cross-entropy between per-node 3-way logits and node classes.
pub fn pretext_loss(t: &mut Tape, logits: Var, classes: &[usize]) -> Result<Var> {
    Ok(t.cross_entropy(logits, classes)?)
}
