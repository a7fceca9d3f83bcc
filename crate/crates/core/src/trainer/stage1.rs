use std::time::Instant;

use numerics::{Adam, LrSchedule, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::entity::{EntityConfig, EntityIdentifier, HeadSizes};
use crate::error::{Error, Result};
use crate::eval::SelectionScores;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub epochs: usize,
    pub lr: f64,
    /// Instructions per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub model: EntityConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 2e-5,
            batch_size: 1,
            seed: 0,
            model: EntityConfig::default(),
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("stage 1 needs epochs >= 1, batch size >= 1 and lr > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Epoch {
    pub epoch: usize,
    pub loss: f64,
    pub action_loss: f64,
    pub ingredient_loss: f64,
    pub location_loss: f64,
    pub validation: Option<SelectionScores>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub seed: u64,
    pub steps: usize,
    pub epochs: Vec<Stage1Epoch>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

/// Trains a fresh entity identifier on every annotated instruction of
/// `train`, scoring `validation` after each epoch when given.
pub fn train_stage1(train: &Corpus, validation: Option<&Corpus>, config: &Stage1Config) -> Result<(EntityIdentifier, Stage1Report)> {
    config.validate()?;
    if train.recipes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let instructions: Vec<_> = train.recipes.iter().flat_map(|r| &r.instructions).collect();
    if let Some(bad) = instructions.iter().find(|i| !i.is_annotated()) {
        return Err(Error::MissingGold(format!("instruction `{}`", bad.raw)));
    }
    let model_config = EntityConfig {
        max_len: train.max_len,
        ..config.model.clone()
    };
    let mut model = EntityIdentifier::new(model_config, train.vocab.len(), HeadSizes::of(&train.catalog), config.seed)?;
    let params: Vec<_> = model.store.ids().collect();
    let mut adam = Adam::new(LrSchedule::constant(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5717);
    let mut order: Vec<usize> = (0..instructions.len()).collect();
    let mut report = Stage1Report {
        seed: config.seed,
        steps: 0,
        epochs: Vec::new(),
        step_losses: Vec::new(),
    };
    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| instructions[i]).collect();
            let mut tape = Tape::new();
            let terms = model.multitask_loss(&mut tape, &batch)?;
            let values = [terms.total, terms.action, terms.ingredient, terms.location].map(|v| tape.value(v).item());
            let grads = tape.backward(terms.total)?;
            adam.step(&mut model.store, &grads, &params, epoch)?;
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v;
            }
            report.step_losses.push(values[0]);
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let validation = validation.map(|v| model.evaluate_selection(&v.recipes)).transpose()?;
        report.epochs.push(Stage1Epoch {
            epoch,
            loss: sums[0] / n,
            action_loss: sums[1] / n,
            ingredient_loss: sums[2] / n,
            location_loss: sums[3] / n,
            validation,
            seconds: start.elapsed().as_secs_f64(),
        });
        report.steps += batches;
    }
    Ok((model, report))
}
