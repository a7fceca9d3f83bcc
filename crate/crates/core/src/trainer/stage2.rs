use std::time::Instant;

use numerics::{Adam, LrSchedule, ParamId, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::decoder::{self, DecoderConfig};
use crate::entity::EntityIdentifier;
use crate::error::{Error, Result};
use crate::graph::{self, is_adjacency_param, GraphConfig};
use crate::model::{prepare_recipe, GraphModel, PreparedRecipe};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub epochs: usize,
    /// Rate of every graph-encoder parameter.
    pub gse_lr: f64,
    pub decoder_lr: f64,
    /// Multiplier applied to the decoder rate every `decay_interval` epochs.
    pub decay: f64,
    pub decay_interval: usize,
    /// Weight of the adjacency sparsity term.
    pub lambda: f64,
    /// Recipes per optimizer step.
    pub batch_size: usize,
    /// Consecutive steps spent on each side before switching.
    pub alternation_period: usize,
    pub seed: u64,
    /// Stops after this many optimizer steps when set.
    pub max_steps: Option<usize>,
    pub graph: GraphConfig,
    pub decoder: DecoderConfig,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            epochs: 10,
            gse_lr: 1e-3,
            decoder_lr: 1e-4,
            decay: 0.1,
            decay_interval: 5,
            lambda: 0.01,
            batch_size: 8,
            alternation_period: 1,
            seed: 0,
            max_steps: None,
            graph: GraphConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.alternation_period == 0 || self.decay_interval == 0 {
            return Err(Error::Config(
                "stage 2 needs epochs, batch size, alternation period and decay interval >= 1".into(),
            ));
        }
        if !(self.gse_lr > 0.0 && self.decoder_lr > 0.0 && self.decay > 0.0) {
            return Err(Error::Config("stage 2 rates and decay must be > 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Which parameter group a step updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// The two affine maps that produce the relation matrix.
    Adjacency,
    /// Node table, GCN, pretext head, projection, GRU and decoder.
    Network,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub phase: Phase,
    pub pretext: f64,
    pub generation: f64,
    pub sparsity: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Epoch {
    pub epoch: usize,
    pub pretext: f64,
    pub generation: f64,
    pub sparsity: f64,
    pub total: f64,
    /// Mean teacher-forced generation loss on the validation recipes.
    pub validation_generation: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub seed: u64,
    pub config_hash: String,
    pub steps: Vec<StepLosses>,
    pub epochs: Vec<Stage2Epoch>,
    pub seconds: f64,
}

/// Alternating optimizer over a [`GraphModel`]. The adjacency group trains
/// at the graph rate; in the network phase the other graph parameters use
/// the graph rate and the decoder its decayed rate.
pub struct Stage2Trainer {
    pub model: GraphModel,
    pub config: Stage2Config,
    adjacency: Vec<ParamId>,
    network: Vec<ParamId>,
    decoder: Vec<ParamId>,
    adjacency_adam: Adam,
    network_adam: Adam,
    decoder_adam: Adam,
    steps: usize,
}

impl Stage2Trainer {
    pub fn new(model: GraphModel, config: Stage2Config) -> Result<Self> {
        config.validate()?;
        let s = &model.store;
        let adjacency = s.ids().filter(|&i| is_adjacency_param(s.name(i))).collect();
        let network = s
            .ids()
            .filter(|&i| s.name(i).starts_with(graph::PREFIX) && !is_adjacency_param(s.name(i)))
            .collect();
        let decoder = s.ids_with_prefix(decoder::PREFIX).collect();
        Ok(Self {
            adjacency_adam: Adam::new(LrSchedule::constant(config.gse_lr)),
            network_adam: Adam::new(LrSchedule::constant(config.gse_lr)),
            decoder_adam: Adam::new(LrSchedule::step_decay(config.decoder_lr, config.decay, config.decay_interval)),
            model,
            config,
            adjacency,
            network,
            decoder,
            steps: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Phase of the next step.
    pub fn phase(&self) -> Phase {
        if (self.steps / self.config.alternation_period) % 2 == 0 {
            Phase::Adjacency
        } else {
            Phase::Network
        }
    }

    pub fn group(&self, phase: Phase) -> Vec<ParamId> {
        match phase {
            Phase::Adjacency => self.adjacency.clone(),
            Phase::Network => self.network.iter().chain(&self.decoder).copied().collect(),
        }
    }

    /// One optimizer step on `batch` during `epoch`. The parameters outside
    /// the current phase are frozen on the tape and left untouched.
    pub fn step(&mut self, batch: &[&PreparedRecipe], epoch: usize) -> Result<StepLosses> {
        let phase = self.phase();
        let other = match phase {
            Phase::Adjacency => Phase::Network,
            Phase::Network => Phase::Adjacency,
        };
        let mut tape = Tape::new();
        tape.freeze(self.group(other));
        let parts = self.model.total_loss(&mut tape, batch, self.config.lambda)?;
        let losses = StepLosses {
            phase,
            pretext: tape.value(parts.pretext).item(),
            generation: tape.value(parts.generation).item(),
            sparsity: tape.value(parts.sparsity).item(),
            total: tape.value(parts.total).item(),
        };
        let grads = tape.backward(parts.total)?;
        let with_grad = |ids: &[ParamId]| -> Vec<ParamId> { ids.iter().copied().filter(|&i| grads.get(i).is_some()).collect() };
        let store = &mut self.model.store;
        match phase {
            Phase::Adjacency => {
                let ids = with_grad(&self.adjacency);
                if !ids.is_empty() {
                    self.adjacency_adam.step(store, &grads, &ids, epoch)?;
                }
            }
            Phase::Network => {
                let ids = with_grad(&self.network);
                if !ids.is_empty() {
                    self.network_adam.step(store, &grads, &ids, epoch)?;
                }
                let ids = with_grad(&self.decoder);
                if !ids.is_empty() {
                    self.decoder_adam.step(store, &grads, &ids, epoch)?;
                }
            }
        }
        self.steps += 1;
        Ok(losses)
    }
}

/// Prepares every recipe of `corpus` with the frozen entity identifier.
pub fn prepare_corpus(entity: &EntityIdentifier, corpus: &Corpus) -> Result<Vec<PreparedRecipe>> {
    corpus
        .recipes
        .iter()
        .map(|r| prepare_recipe(entity, &corpus.catalog, r))
        .collect()
}

/// Jointly trains the graph encoder and decoder on the entities and
/// sentence embeddings of a frozen stage-1 model.
pub fn train_stage2(
    entity: &EntityIdentifier,
    train: &Corpus,
    validation: Option<&Corpus>,
    config: &Stage2Config,
) -> Result<(GraphModel, Stage2Report)> {
    config.validate()?;
    if train.recipes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let recipes = prepare_corpus(entity, train)?;
    let held_out = validation.map(|v| prepare_corpus(entity, v)).transpose()?;
    let model = GraphModel::new(
        config.graph.clone(),
        config.decoder.clone(),
        &train.catalog,
        train.vocab.len(),
        config.seed,
    )?;
    let (model, report) = train_prepared(model, &recipes, held_out.as_deref(), config)?;
    Ok((model, report))
}

/// [`train_stage2`] over already prepared recipes and an initial model.
pub fn train_prepared(
    model: GraphModel,
    recipes: &[PreparedRecipe],
    validation: Option<&[PreparedRecipe]>,
    config: &Stage2Config,
) -> Result<(GraphModel, Stage2Report)> {
    if recipes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let started = Instant::now();
    let mut trainer = Stage2Trainer::new(model, config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x2b1d);
    let mut order: Vec<usize> = (0..recipes.len()).collect();
    let mut report = Stage2Report {
        seed: config.seed,
        config_hash: config.hash(),
        steps: Vec::new(),
        epochs: Vec::new(),
        seconds: 0.0,
    };
    'epochs: for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| trainer.steps_taken() >= m) {
                break;
            }
            let batch: Vec<_> = chunk.iter().map(|&i| &recipes[i]).collect();
            let l = trainer.step(&batch, epoch)?;
            for (s, v) in sums.iter_mut().zip([l.pretext, l.generation, l.sparsity, l.total]) {
                *s += v;
            }
            report.steps.push(l);
            batches += 1;
        }
        if batches == 0 {
            break 'epochs;
        }
        let n = batches as f64;
        let validation_generation = validation
            .filter(|v| !v.is_empty())
            .map(|v| -> Result<f64> {
                let total: f64 = v.iter().map(|r| trainer.model.generation_loss(r)).sum::<Result<f64>>()?;
                Ok(total / v.len() as f64)
            })
            .transpose()?;
        report.epochs.push(Stage2Epoch {
            epoch,
            pretext: sums[0] / n,
            generation: sums[1] / n,
            sparsity: sums[2] / n,
            total: sums[3] / n,
            validation_generation,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    report.seconds = started.elapsed().as_secs_f64();
    Ok((trainer.model, report))
}
