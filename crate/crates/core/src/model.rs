//! The assembled pipeline: a frozen entity identifier feeding the graph
//! encoder and instruction decoder, with on-disk model directories.

use std::fs;
use std::path::Path;

use numerics::{checkpoint, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityCatalog, Recipe, Vocab};
use crate::decoder::{self, frame_stream, DecoderConfig, GenerationConfig, InstructionDecoder};
use crate::entity::{self, EntityConfig, EntityIdentifier, HeadSizes};
use crate::error::{Error, Result};
use crate::graph::{self, EncodedRecipe, GraphConfig, GraphEncoder, StepInput};

/// A recipe reduced to what stage 2 consumes: per-step entities and
/// sentence embeddings from the entity identifier, and the framed stream.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRecipe {
    pub id: String,
    pub steps: Vec<StepInput>,
    pub stream: Vec<u32>,
}

/// Runs the entity identifier over every instruction of `recipe`.
pub fn prepare_recipe(entity: &EntityIdentifier, catalog: &EntityCatalog, recipe: &Recipe) -> Result<PreparedRecipe> {
    if recipe.instructions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut steps = Vec::with_capacity(recipe.instructions.len());
    for ins in &recipe.instructions {
        let p = entity.predict_entities(&ins.tokens)?;
        steps.push(StepInput {
            entities: p.node_ids(catalog),
            sentence: p.embedding,
        });
    }
    let stream = frame_stream(recipe.instructions.iter().map(|i| &i.tokens[1..]));
    Ok(PreparedRecipe {
        id: recipe.id.clone(),
        steps,
        stream,
    })
}

/// Graph encoder and decoder sharing one parameter store.
#[derive(Clone, Debug)]
pub struct GraphModel {
    pub store: ParamStore,
    pub encoder: GraphEncoder,
    pub decoder: InstructionDecoder,
}

/// The loss terms of one batch, each averaged over its recipes.
pub struct LossParts {
    pub pretext: Var,
    pub generation: Var,
    /// Off-diagonal mass of the final relaxed adjacency.
    pub sparsity: Var,
    pub total: Var,
}

/// Inference outputs for one recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub sequence: Tensor,
    pub nodes: Vec<usize>,
    /// Final relaxed adjacency, `0×0` when no entity was identified.
    pub adjacency: Tensor,
}

/// `Σ A[i][j]` over `i ≠ j`. Rows of a doubly-stochastic `A` each sum to
/// one, so this is the part of its L1 norm that training can move.
pub fn off_diagonal_mass(t: &mut Tape, a: Var) -> Result<Var> {
    let n = t.shape(a)[0];
    let mut mask = Tensor::full(&[n, n], 1.0);
    for i in 0..n {
        mask.data_mut()[i * n + i] = 0.0;
    }
    let mask = t.constant(mask)?;
    let off = t.mul(a, mask)?;
    Ok(t.sum(off)?)
}

impl GraphModel {
    pub fn new(graph: GraphConfig, decoder: DecoderConfig, catalog: &EntityCatalog, vocab_size: usize, seed: u64) -> Result<Self> {
        if decoder.width != 2 * graph.graph_dim {
            return Err(Error::Config(format!(
                "decoder width {} must be twice the graph width {}",
                decoder.width, graph.graph_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = GraphEncoder::new(&mut store, &mut rng, graph, catalog)?;
        let decoder = InstructionDecoder::new(&mut store, &mut rng, decoder, vocab_size)?;
        Ok(Self { store, encoder, decoder })
    }

    pub fn encode(&self, t: &mut Tape, recipe: &PreparedRecipe) -> Result<EncodedRecipe> {
        self.encoder.encode_recipe(t, &self.store, &recipe.steps)
    }

    /// Pretext, generation and sparsity terms of one recipe.
    fn recipe_loss(&self, t: &mut Tape, recipe: &PreparedRecipe) -> Result<[Var; 3]> {
        let enc = self.encode(t, recipe)?;
        let generation = self.decoder.decoder_loss(t, &self.store, enc.sequence, &recipe.stream)?;
        let sparsity = match enc.final_graph() {
            Some(g) => off_diagonal_mass(t, g.adjacency)?,
            None => t.constant(Tensor::scalar(0.0))?,
        };
        Ok([enc.pretext, generation, sparsity])
    }

    /// `pretext + generation + lambda · sparsity`, averaged over `batch`.
    pub fn total_loss(&self, t: &mut Tape, batch: &[&PreparedRecipe], lambda: f64) -> Result<LossParts> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut sums: Option<[Var; 3]> = None;
        for recipe in batch {
            let terms = self.recipe_loss(t, recipe)?;
            sums = Some(match sums {
                None => terms,
                Some(acc) => [t.add(acc[0], terms[0])?, t.add(acc[1], terms[1])?, t.add(acc[2], terms[2])?],
            });
        }
        let sums = sums.expect("batch is non-empty");
        let inv = 1.0 / batch.len() as f64;
        let pretext = t.scale(sums[0], inv)?;
        let generation = t.scale(sums[1], inv)?;
        let sparsity = t.scale(sums[2], inv)?;
        let partial = t.add(pretext, generation)?;
        let weighted = t.scale(sparsity, lambda)?;
        let total = t.add(partial, weighted)?;
        Ok(LossParts {
            pretext,
            generation,
            sparsity,
            total,
        })
    }

    /// Encodes without recording gradients.
    pub fn infer(&self, recipe: &PreparedRecipe) -> Result<Encoding> {
        let mut t = Tape::no_grad();
        let enc = self.encode(&mut t, recipe)?;
        let (nodes, adjacency) = match enc.final_graph() {
            Some(g) => (g.nodes.clone(), t.value(g.adjacency).clone()),
            None => (Vec::new(), Tensor::zeros(&[0, 0])),
        };
        Ok(Encoding {
            sequence: t.value(enc.sequence).clone(),
            nodes,
            adjacency,
        })
    }

    /// Teacher-forced generation loss of one recipe.
    pub fn generation_loss(&self, recipe: &PreparedRecipe) -> Result<f64> {
        let mut t = Tape::no_grad();
        let enc = self.encode(&mut t, recipe)?;
        let loss = self.decoder.decoder_loss(&mut t, &self.store, enc.sequence, &recipe.stream)?;
        Ok(t.value(loss).item())
    }

    pub fn generate(&self, sequence: &Tensor, config: &GenerationConfig) -> Result<Vec<u32>> {
        self.decoder.generate(&self.store, sequence, config)
    }
}

const MANIFEST_FILE: &str = "model.json";
const ENTITY_FILE: &str = "entity.fgf1";
const GRAPH_FILE: &str = "graph.fgf1";
const VOCAB_FILE: &str = "vocab.json";
const CATALOG_FILE: &str = "catalog.tsv";

/// Shapes needed to rebuild every network of a model directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub max_len: usize,
    pub entity: EntityConfig,
    pub graph: Option<GraphConfig>,
    pub decoder: Option<DecoderConfig>,
}

/// A trained entity identifier with its lexicon and, after stage 2, the
/// graph model.
pub struct Pipeline {
    pub vocab: Vocab,
    pub catalog: EntityCatalog,
    pub max_len: usize,
    pub entity: EntityIdentifier,
    pub graph: Option<GraphModel>,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Schema {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    }
}

impl Pipeline {
    pub fn graph_model(&self) -> Result<&GraphModel> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::Config("model directory has no graph stage; run stage-2 training first".into()))
    }

    pub fn prepare(&self, recipe: &Recipe) -> Result<PreparedRecipe> {
        prepare_recipe(&self.entity, &self.catalog, recipe)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = ModelManifest {
            max_len: self.max_len,
            entity: self.entity.config.clone(),
            graph: self.graph.as_ref().map(|g| g.encoder.config.clone()),
            decoder: self.graph.as_ref().map(|g| g.decoder.config.clone()),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
        write(&dir.join(MANIFEST_FILE), json + "\n")?;
        let vocab = serde_json::to_string(&self.vocab).map_err(|e| Error::Invalid(e.to_string()))?;
        write(&dir.join(VOCAB_FILE), vocab + "\n")?;
        write(&dir.join(CATALOG_FILE), self.catalog.to_tsv())?;
        checkpoint::save(&dir.join(ENTITY_FILE), &self.entity.store, entity::PREFIX)?;
        let graph_path = dir.join(GRAPH_FILE);
        match &self.graph {
            Some(g) => {
                let entries = g
                    .store
                    .named()
                    .filter(|(n, _)| n.starts_with(graph::PREFIX) || n.starts_with(decoder::PREFIX));
                write(&graph_path, checkpoint::encode(entries))?;
            }
            None if graph_path.exists() => fs::remove_file(&graph_path).map_err(|e| Error::io(&graph_path, e))?,
            None => {}
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let manifest: ModelManifest = serde_json::from_str(&read(&path)?).map_err(|e| json_error(&path, e))?;
        let path = dir.join(VOCAB_FILE);
        let vocab: Vocab = serde_json::from_str(&read(&path)?).map_err(|e| json_error(&path, e))?;
        let catalog = EntityCatalog::from_tsv(&read(&dir.join(CATALOG_FILE))?)?;
        let mut entity = EntityIdentifier::new(manifest.entity.clone(), vocab.len(), HeadSizes::of(&catalog), 0)?;
        entity.store.load_named(checkpoint::load(&dir.join(ENTITY_FILE))?)?;
        let graph = match (manifest.graph, manifest.decoder) {
            (Some(g), Some(d)) => {
                let mut model = GraphModel::new(g, d, &catalog, vocab.len(), 0)?;
                model.store.load_named(checkpoint::load(&dir.join(GRAPH_FILE))?)?;
                Some(model)
            }
            (None, None) => None,
            _ => return Err(Error::Config("model manifest lists only one of graph and decoder".into())),
        };
        Ok(Self {
            vocab,
            catalog,
            max_len: manifest.max_len,
            entity,
            graph,
        })
    }
}
