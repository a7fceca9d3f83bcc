use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize::{words, Vocab, EOS, UNK};
use crate::corpus::{aggregate_duplicates, Corpus, FlowGraph, FlowNode, RecipeRecord, StepRecord};
use crate::decoder::GenerationConfig;
use crate::error::{Error, Result};
use crate::eval::ged::{ged, EdgeMode, EditCost, DEFAULT_EXACT_LIMIT};
use crate::eval::text::{corpus_bleu, corpus_rouge_l};
use crate::graph::{default_threshold, export_graph};
use crate::model::Pipeline;

/// Same nodes as `nodes`, each ordered non-self pair kept with probability
/// one half.
pub fn random_graph_baseline(nodes: &[FlowNode], seed: u64) -> FlowGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if i != j && rng.random_bool(0.5) {
                edges.push((i, j));
            }
        }
    }
    FlowGraph {
        nodes: nodes.to_vec(),
        edges,
    }
}

/// A recipe with its reference flow graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub recipe: RecipeRecord,
    pub graph: FlowGraph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub k: usize,
    pub seed: u64,
    /// Export threshold; twice the uniform entry when unset.
    pub tau: Option<f64>,
    pub edge_mode: EdgeMode,
    pub costs: EditCost,
    pub exact_limit: usize,
    pub max_tokens: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            tau: None,
            edge_mode: EdgeMode::Undirected,
            costs: EditCost::default(),
            exact_limit: DEFAULT_EXACT_LIMIT,
            max_tokens: GenerationConfig::default().max_tokens,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub id: String,
    pub nodes: usize,
    pub ged: f64,
    pub exact: bool,
    pub random_ged: f64,
    pub reconstruction: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ged_mean: f64,
    pub ged_exact_fraction: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    /// Pairs actually scored.
    pub k: usize,
    pub seed: u64,
    pub edge_mode: EdgeMode,
    pub random_ged_mean: f64,
    pub requested_k: usize,
    pub eligible: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub summary: Summary,
    pub pairs: Vec<PairScore>,
}

/// References with at least two steps, with duplicate graph nodes merged.
pub fn eligible_references(references: &[ReferencePair]) -> Vec<ReferencePair> {
    references
        .iter()
        .filter(|r| r.recipe.steps.len() >= 2)
        .map(|r| ReferencePair {
            recipe: r.recipe.clone(),
            graph: aggregate_duplicates(&r.graph),
        })
        .collect()
}

fn text_only(record: &RecipeRecord) -> RecipeRecord {
    RecipeRecord {
        id: record.id.clone(),
        steps: record.steps.iter().map(|s| StepRecord::unannotated(s.text.clone())).collect(),
    }
}

fn generated_words(vocab: &Vocab, stream: &[u32]) -> Vec<String> {
    stream
        .iter()
        .take_while(|&&t| t != EOS)
        .filter(|&&t| !Vocab::is_special(t) || t == UNK)
        .map(|&t| vocab.token(t).to_string())
        .collect()
}

struct Scored {
    pair: PairScore,
    candidate: Vec<String>,
    reference: Vec<String>,
}

fn score_pair(pipeline: &Pipeline, reference: &ReferencePair, config: &ProtocolConfig, seed: u64) -> Result<Scored> {
    let model = pipeline.graph_model()?;
    let (corpus, _) = Corpus::with_lexicon(
        &[text_only(&reference.recipe)],
        pipeline.catalog.clone(),
        pipeline.vocab.clone(),
        pipeline.max_len,
    )?;
    let prepared = pipeline.prepare(&corpus.recipes[0])?;
    let encoding = model.infer(&prepared)?;
    let n = encoding.nodes.len();
    let predicted = if n == 0 {
        FlowGraph::default()
    } else {
        let tau = config.tau.unwrap_or_else(|| default_threshold(n));
        export_graph(&encoding.adjacency, &encoding.nodes, &pipeline.catalog, tau)?.graph
    };
    let result = ged(&predicted, &reference.graph, &config.costs, config.edge_mode, config.exact_limit)?;
    let random = random_graph_baseline(&predicted.nodes, seed);
    let random_result = ged(&random, &reference.graph, &config.costs, config.edge_mode, config.exact_limit)?;
    let generation = GenerationConfig {
        max_tokens: config.max_tokens,
        ..GenerationConfig::default()
    };
    let stream = model.generate(&encoding.sequence, &generation)?;
    let candidate = generated_words(&pipeline.vocab, &stream);
    let reference_words: Vec<String> = reference.recipe.steps.iter().flat_map(|s| words(&s.text)).collect();
    Ok(Scored {
        pair: PairScore {
            id: reference.recipe.id.clone(),
            nodes: n,
            ged: result.distance,
            exact: result.exact,
            random_ged: random_result.distance,
            reconstruction: candidate.join(" "),
        },
        candidate,
        reference: reference_words,
    })
}

/// Samples `k` eligible references with `seed`, scores model and random
/// graphs against them by GED and reconstructions by corpus BLEU and mean
/// ROUGE-L. Pairs are scored in parallel; results do not depend on the
/// thread count.
pub fn evaluate_protocol(pipeline: &Pipeline, references: &[ReferencePair], config: &ProtocolConfig) -> Result<ProtocolReport> {
    config.costs.validate()?;
    if let Some(tau) = config.tau {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("threshold {tau} outside (0, 1]")));
        }
    }
    let eligible = eligible_references(references);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = index::sample(&mut rng, eligible.len(), config.k.min(eligible.len())).into_vec();
    picked.sort_unstable();
    if config.k > 0 {
        pipeline.graph_model()?;
    }
    let scored = picked
        .par_iter()
        .map(|&i| {
            let seed = config.seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            score_pair(pipeline, &eligible[i], config, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let count = scored.len();
    let mean = |f: &dyn Fn(&Scored) -> f64| {
        if count == 0 {
            0.0
        } else {
            scored.iter().map(f).sum::<f64>() / count as f64
        }
    };
    let texts: Vec<(&[String], &[String])> = scored
        .iter()
        .map(|s| (s.candidate.as_slice(), s.reference.as_slice()))
        .collect();
    let summary = Summary {
        ged_mean: mean(&|s| s.pair.ged),
        ged_exact_fraction: mean(&|s| f64::from(u8::from(s.pair.exact))),
        bleu: corpus_bleu(&texts, 4),
        rouge_l: corpus_rouge_l(&texts),
        k: count,
        seed: config.seed,
        edge_mode: config.edge_mode,
        random_ged_mean: mean(&|s| s.pair.random_ged),
        requested_k: config.k,
        eligible: eligible.len(),
    };
    Ok(ProtocolReport {
        summary,
        pairs: scored.into_iter().map(|s| s.pair).collect(),
    })
}
