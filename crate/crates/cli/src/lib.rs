//! The `recigraph` command line: synthetic data, both training stages,
//! text-to-graph export, graph-to-text generation, evaluation and GED.
//!
//! Every run that writes to an output directory leaves a `run.json`
//! manifest there with the effective configuration, its hash, the seed and
//! the tool version.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use recigraph::corpus::{
    generate_synthetic_corpus, read_jsonl, write_jsonl, Corpus, FlowGraph, RecipeRecord, StepRecord,
};
use recigraph::decoder::{split_stream, GenerationConfig};
use recigraph::eval::{evaluate_protocol, ged, EdgeMode, EditCost, ReferencePair};
use recigraph::graph::{default_threshold, export_graph, to_dot, ExportedGraph};
use recigraph::model::Pipeline;
use recigraph::trainer::{config_hash, train_stage1, train_stage2};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input or configuration; exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure inside the pipeline or while writing outputs; exit code 2.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<recigraph::Error> for CliError {
    fn from(e: recigraph::Error) -> Self {
        match e {
            recigraph::Error::Numerics(_) => CliError::Internal(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "recigraph", version, about = "Learn flow graphs from recipe text and decode them back")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON file of flat dotted keys, e.g. {"trainer.stage2.lambda": 0.1}
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run [default: from config, 0]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory, created if absent
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for per-recipe and per-pair work [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic annotated corpus with template reference graphs
    GenData {
        /// Number of recipes [default: from config, 600]
        #[arg(long, value_name = "N")]
        recipes: Option<usize>,
    },
    /// Train the entity identifier on an annotated corpus
    TrainEntity {
        /// Annotated recipe JSONL
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Validation recipe JSONL, scored after every epoch
        #[arg(long, value_name = "PATH")]
        val: Option<PathBuf>,
    },
    /// Train the graph encoder and decoder over a trained entity identifier
    TrainGraph {
        /// Recipe JSONL; gold annotations are ignored
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Model directory written by train-entity
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// Sparsity weight [default: from config, 0.01]
        #[arg(long, value_name = "X")]
        lambda: Option<f64>,
    },
    /// Encode recipes and export one graph JSON (and optionally DOT) each
    Text2graph {
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// Edge threshold in (0, 1] [default: 2/n for n nodes]
        #[arg(long, value_name = "X")]
        tau: Option<f64>,
        /// Also write Graphviz files
        #[arg(long, default_value_t = false)]
        dot: bool,
    },
    /// Reconstruct recipe text from the encoded graph sequence
    Graph2text {
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// Maximum generated tokens per recipe
        #[arg(long, value_name = "N", default_value_t = 128)]
        max_tokens: usize,
    },
    /// Run the sampled GED / BLEU / ROUGE-L protocol against references
    Evaluate {
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// JSON list of {"recipe": ..., "graph": ...} pairs
        #[arg(long, value_name = "PATH")]
        refs: PathBuf,
        /// Sampled pairs [default: from config, 10]
        #[arg(long, value_name = "N")]
        k: Option<usize>,
        /// Edge threshold in (0, 1] [default: 2/n for n nodes]
        #[arg(long, value_name = "X")]
        tau: Option<f64>,
        /// Compare edges with direction
        #[arg(long, default_value_t = false)]
        directed: bool,
    },
    /// Graph edit distance between two flow-graph JSON files
    Ged {
        #[arg(long, value_name = "PATH")]
        a: PathBuf,
        #[arg(long, value_name = "PATH")]
        b: PathBuf,
        /// Compare edges with direction
        #[arg(long, default_value_t = false)]
        directed: bool,
        /// Largest graph searched exactly
        #[arg(long, value_name = "N", default_value_t = recigraph::eval::DEFAULT_EXACT_LIMIT)]
        exact_limit: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::TrainEntity { .. } => "train-entity",
            Command::TrainGraph { .. } => "train-graph",
            Command::Text2graph { .. } => "text2graph",
            Command::Graph2text { .. } => "graph2text",
            Command::Evaluate { .. } => "evaluate",
            Command::Ged { .. } => "ged",
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: String,
    config: std::collections::BTreeMap<String, Value>,
}

fn internal(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| internal(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| internal(path, e))?;
    write_file(path, text + "\n")
}

fn out_dir(global: &GlobalArgs) -> CliResult<&Path> {
    let dir = global
        .out
        .as_deref()
        .ok_or_else(|| CliError::Validation("this command needs --out DIR".into()))?;
    fs::create_dir_all(dir).map_err(|e| internal(dir, e))?;
    Ok(dir)
}

fn write_manifest(dir: &Path, command: &str, config: &RunConfig) -> CliResult<()> {
    let manifest = RunManifest {
        command,
        version: VERSION,
        seed: config.data.seed,
        config_hash: config_hash(config),
        config: config.flat(),
    };
    write_json(&dir.join("run.json"), &manifest)
}

fn load_model(dir: &Path) -> CliResult<Pipeline> {
    if !dir.join("model.json").is_file() {
        return Err(CliError::Validation(format!("{}: no trained model found", dir.display())));
    }
    Ok(Pipeline::load(dir)?)
}

/// The same recipes with every gold annotation dropped.
fn text_only(records: &[RecipeRecord]) -> Vec<RecipeRecord> {
    records
        .iter()
        .map(|r| RecipeRecord {
            id: r.id.clone(),
            steps: r.steps.iter().map(|s| StepRecord::unannotated(s.text.clone())).collect(),
        })
        .collect()
}

fn resolve(pipeline: &Pipeline, records: &[RecipeRecord]) -> CliResult<Corpus> {
    let (corpus, _) = Corpus::with_lexicon(
        &text_only(records),
        pipeline.catalog.clone(),
        pipeline.vocab.clone(),
        pipeline.max_len,
    )?;
    Ok(corpus)
}

/// Safe file stem for a recipe id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn gen_data(global: &GlobalArgs, config: &RunConfig) -> CliResult<()> {
    let dir = out_dir(global)?;
    let (records, manifest) = generate_synthetic_corpus(config.data.seed, config.data.recipes, &config.data.synth)?;
    write_jsonl(&dir.join("recipes.jsonl"), &records)?;
    let refs: Vec<ReferencePair> = records
        .iter()
        .map(|r| ReferencePair {
            recipe: r.clone(),
            graph: manifest.graph(&r.id).cloned().unwrap_or_default(),
        })
        .collect();
    write_json(&dir.join("references.json"), &refs)?;
    write_json(&dir.join("synthetic_manifest.json"), &manifest)?;
    write_manifest(dir, "gen-data", config)
}

fn train_entity(global: &GlobalArgs, config: &RunConfig, input: &Path, val: Option<&Path>) -> CliResult<()> {
    let dir = out_dir(global)?;
    let records = read_jsonl(input)?;
    let (train, _) = Corpus::from_records(&records, config.data.max_len)?;
    let validation = val
        .map(|p| -> CliResult<Corpus> {
            let recs = read_jsonl(p)?;
            let (c, _) = Corpus::with_lexicon(&recs, train.catalog.clone(), train.vocab.clone(), train.max_len)?;
            Ok(c)
        })
        .transpose()?;
    let (entity, report) = train_stage1(&train, validation.as_ref(), &config.trainer.stage1)?;
    let pipeline = Pipeline {
        vocab: train.vocab.clone(),
        catalog: train.catalog.clone(),
        max_len: train.max_len,
        entity,
        graph: None,
    };
    pipeline.save(dir)?;
    write_json(&dir.join("stage1_report.json"), &report)?;
    write_manifest(dir, "train-entity", config)
}

fn train_graph(global: &GlobalArgs, config: &RunConfig, input: &Path, model: &Path) -> CliResult<()> {
    let mut pipeline = load_model(model)?;
    let dir = out_dir(global)?;
    let corpus = resolve(&pipeline, &read_jsonl(input)?)?;
    let (graph, report) = train_stage2(&pipeline.entity, &corpus, None, &config.trainer.stage2)?;
    pipeline.graph = Some(graph);
    pipeline.save(dir)?;
    write_json(&dir.join("stage2_report.json"), &report)?;
    write_manifest(dir, "train-graph", config)
}

fn text2graph(global: &GlobalArgs, config: &RunConfig, input: &Path, model: &Path, dot: bool) -> CliResult<()> {
    let pipeline = load_model(model)?;
    let graph_model = pipeline.graph_model()?;
    let dir = out_dir(global)?;
    let corpus = resolve(&pipeline, &read_jsonl(input)?)?;
    let tau = config.eval.tau;
    let exported = corpus
        .recipes
        .par_iter()
        .map(|recipe| -> CliResult<(String, ExportedGraph)> {
            let enc = graph_model.infer(&pipeline.prepare(recipe)?)?;
            let graph = if enc.nodes.is_empty() {
                ExportedGraph {
                    graph: FlowGraph::default(),
                    adjacency: Vec::new(),
                    threshold: tau.unwrap_or(1.0),
                }
            } else {
                let t = tau.unwrap_or_else(|| default_threshold(enc.nodes.len()));
                export_graph(&enc.adjacency, &enc.nodes, &pipeline.catalog, t)?
            };
            Ok((recipe.id.clone(), graph))
        })
        .collect::<CliResult<Vec<_>>>()?;
    for (id, graph) in &exported {
        let stem = file_stem(id);
        write_json(&dir.join(format!("{stem}.json")), graph)?;
        if dot {
            write_file(&dir.join(format!("{stem}.dot")), to_dot(&graph.graph, id))?;
        }
    }
    write_manifest(dir, "text2graph", config)
}

fn graph2text(global: &GlobalArgs, config: &RunConfig, input: &Path, model: &Path, max_tokens: usize) -> CliResult<()> {
    let pipeline = load_model(model)?;
    let graph_model = pipeline.graph_model()?;
    let dir = out_dir(global)?;
    let corpus = resolve(&pipeline, &read_jsonl(input)?)?;
    let generation = GenerationConfig {
        max_tokens,
        ..GenerationConfig::default()
    };
    let generated = corpus
        .recipes
        .par_iter()
        .map(|recipe| -> CliResult<RecipeRecord> {
            let enc = graph_model.infer(&pipeline.prepare(recipe)?)?;
            let stream = graph_model.generate(&enc.sequence, &generation)?;
            let steps = split_stream(&stream)
                .iter()
                .map(|ids| StepRecord::unannotated(pipeline.vocab.detokenize(ids)))
                .collect();
            Ok(RecipeRecord {
                id: recipe.id.clone(),
                steps,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_jsonl(&dir.join("generated.jsonl"), &generated)?;
    write_manifest(dir, "graph2text", config)
}

fn evaluate(global: &GlobalArgs, config: &RunConfig, model: &Path, refs: &Path) -> CliResult<()> {
    let pipeline = load_model(model)?;
    let dir = out_dir(global)?;
    let text = fs::read_to_string(refs).map_err(|e| CliError::Validation(format!("{}: {e}", refs.display())))?;
    let references: Vec<ReferencePair> =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", refs.display())))?;
    for r in &references {
        r.graph.validate()?;
    }
    let report = evaluate_protocol(&pipeline, &references, &config.eval)?;
    write_json(&dir.join("summary.json"), &report.summary)?;
    write_json(&dir.join("pairs.json"), &report.pairs)?;
    write_manifest(dir, "evaluate", config)
}

fn ged_command(global: &GlobalArgs, config: &RunConfig, a: &Path, b: &Path, mode: EdgeMode, limit: usize) -> CliResult<()> {
    let ga = FlowGraph::load(a)?;
    let gb = FlowGraph::load(b)?;
    let result = ged(&ga, &gb, &EditCost::default(), mode, limit)?;
    println!("{:?}", result.distance);
    if global.out.is_some() {
        let dir = out_dir(global)?;
        write_json(&dir.join("ged.json"), &result)?;
        write_manifest(dir, "ged", config)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut config = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        config.set_seed(seed);
    }
    match &cli.command {
        Command::GenData { recipes: Some(n) } => config.data.recipes = *n,
        Command::TrainGraph { lambda: Some(l), .. } => config.trainer.stage2.lambda = *l,
        Command::Evaluate { k, tau, directed, .. } => {
            if let Some(k) = k {
                config.eval.k = *k;
            }
            if tau.is_some() {
                config.eval.tau = *tau;
            }
            if *directed {
                config.eval.edge_mode = EdgeMode::Directed;
            }
        }
        Command::Text2graph { tau: Some(t), .. } => config.eval.tau = Some(*t),
        _ => {}
    }
    if let Some(tau) = config.eval.tau {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(CliError::Validation(format!("--tau {tau} must lie in (0, 1]")));
        }
    }
    if let Some(workers) = cli.global.workers {
        if workers == 0 {
            return Err(CliError::Validation("--workers must be at least 1".into()));
        }
        // A pool that already exists keeps its size; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let g = &cli.global;
    let name = cli.command.name();
    let result = match &cli.command {
        Command::GenData { .. } => gen_data(g, &config),
        Command::TrainEntity { input, val } => train_entity(g, &config, input, val.as_deref()),
        Command::TrainGraph { input, model, .. } => train_graph(g, &config, input, model),
        Command::Text2graph { input, model, dot, .. } => text2graph(g, &config, input, model, *dot),
        Command::Graph2text {
            input,
            model,
            max_tokens,
        } => graph2text(g, &config, input, model, *max_tokens),
        Command::Evaluate { model, refs, .. } => evaluate(g, &config, model, refs),
        Command::Ged {
            a,
            b,
            directed,
            exact_limit,
        } => {
            let mode = if *directed { EdgeMode::Directed } else { EdgeMode::Undirected };
            ged_command(g, &config, a, b, mode, *exact_limit)
        }
    };
    result.map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{name}: {m}")),
        CliError::Internal(m) => CliError::Internal(format!("{name}: {m}")),
    })
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
