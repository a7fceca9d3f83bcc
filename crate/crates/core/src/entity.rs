//! Entity identifier: a compact transformer sentence encoder with an action
//! head (softmax) and ingredient and location heads (sigmoid).

use std::collections::BTreeSet;

use numerics::{init, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize::SPECIAL_COUNT;
use crate::corpus::{EntityCatalog, EntityClass, Instruction, Recipe};
use crate::error::{Error, Result};
use crate::eval::selection::{selection_scores, SelectionPair, SelectionScores};
use crate::nn::{Block, FeedForward, LayerNorm};

/// Parameter-name prefix of every entity-identifier parameter.
pub const PREFIX: &str = "ei.";

/// Sigmoid outputs strictly above this are selected.
pub const THRESHOLD: f64 = 0.5;

const ENCODER_INIT_GAIN: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
}

impl Default for EntityConfig {
    fn default() -> Self {
        Self {
            width: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_len: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSizes {
    pub actions: usize,
    pub ingredients: usize,
    pub locations: usize,
}

impl HeadSizes {
    pub fn of(catalog: &EntityCatalog) -> Self {
        Self {
            actions: catalog.actions.len(),
            ingredients: catalog.ingredients.len(),
            locations: catalog.locations.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityPrediction {
    pub action: usize,
    pub ingredients: BTreeSet<usize>,
    pub locations: BTreeSet<usize>,
    /// Final-layer hidden state at the `[CLS]` position.
    pub embedding: Vec<f64>,
}

impl EntityPrediction {
    /// Global node ids of every predicted entity, ascending.
    pub fn node_ids(&self, catalog: &EntityCatalog) -> Vec<usize> {
        let mut ids = vec![catalog.global_id(EntityClass::Action, self.action)];
        ids.extend(self.ingredients.iter().map(|&i| catalog.global_id(EntityClass::Ingredient, i)));
        ids.extend(self.locations.iter().map(|&l| catalog.global_id(EntityClass::Location, l)));
        ids
    }
}

/// Head outputs for a batch of sentences.
pub struct HeadOutputs {
    pub cls: Var,
    pub action_logits: Var,
    pub ingredient_probs: Var,
    pub location_probs: Var,
}

#[derive(Clone, Debug)]
pub struct EntityIdentifier {
    pub config: EntityConfig,
    pub sizes: HeadSizes,
    pub store: ParamStore,
    tokens: numerics::ParamId,
    positions: numerics::ParamId,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
    action_head: FeedForward,
    ingredient_head: FeedForward,
    location_head: FeedForward,
}

/// Indices of the labels selected by thresholding `probs`.
pub fn select(probs: &[f64]) -> BTreeSet<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > THRESHOLD)
        .map(|(i, _)| i)
        .collect()
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

impl EntityIdentifier {
    pub fn new(config: EntityConfig, vocab_size: usize, sizes: HeadSizes, seed: u64) -> Result<Self> {
        if sizes.actions == 0 || sizes.ingredients == 0 || sizes.locations == 0 {
            return Err(Error::Config("entity identifier needs at least one label per class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.width;
        let tokens = store.add("ei.tokens", init::normal(&mut rng, &[vocab_size, d], 0.5))?;
        // Special tokens start at zero so the [CLS] state is built from context.
        let specials = SPECIAL_COUNT.min(vocab_size);
        store.get_mut(tokens).data_mut()[..specials * d].fill(0.0);
        let positions = store.add("ei.positions", init::normal(&mut rng, &[config.max_len, d], 0.1))?;
        let blocks = (0..config.layers)
            .map(|l| Block::new(&mut store, &mut rng, &format!("ei.block{l}"), d, config.heads, config.ffn, false))
            .collect::<numerics::Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(&mut store, "ei.final_norm", d)?;
        let action_head = FeedForward::new(&mut store, &mut rng, "ei.action", d, d, sizes.actions)?;
        let ingredient_head = FeedForward::new(&mut store, &mut rng, "ei.ingredient", d, d, sizes.ingredients)?;
        let location_head = FeedForward::new(&mut store, &mut rng, "ei.location", d, d, sizes.locations)?;
        // Small transformer weights keep the residual stream close to the
        // token embeddings early in training.
        let block_weights: Vec<_> = store
            .ids()
            .filter(|&i| store.name(i).starts_with("ei.block") && store.name(i).ends_with(".w"))
            .collect();
        for id in block_weights {
            for v in store.get_mut(id).data_mut() {
                *v *= ENCODER_INIT_GAIN;
            }
        }
        Ok(Self {
            config,
            sizes,
            store,
            tokens,
            positions,
            blocks,
            final_norm,
            action_head,
            ingredient_head,
            location_head,
        })
    }

    /// Final hidden states `[len×d]` of one `[CLS]`-prefixed sentence and the
    /// `[CLS]` row `[1×d]`.
    pub fn encode_sentence(&self, t: &mut Tape, tokens: &[u32]) -> Result<(Var, Var)> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::TooLong {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        let s = &self.store;
        let table = t.param(s, self.tokens);
        let ids: Vec<usize> = tokens.iter().map(|&i| i as usize).collect();
        let emb = t.gather_rows(table, &ids)?;
        let pos_table = t.param(s, self.positions);
        let pos = t.slice(pos_table, 0, 0, tokens.len())?;
        let mut x = t.add(emb, pos)?;
        for block in &self.blocks {
            x = block.forward(t, s, x, None, false)?.out;
        }
        let hidden = self.final_norm.forward(t, s, x)?;
        let cls = t.row(hidden, 0)?;
        Ok((hidden, cls))
    }

    pub fn heads(&self, t: &mut Tape, sentences: &[&[u32]]) -> Result<HeadOutputs> {
        if sentences.is_empty() {
            return Err(Error::EmptyInput);
        }
        let cls = sentences
            .iter()
            .map(|s| self.encode_sentence(t, s).map(|(_, c)| c))
            .collect::<Result<Vec<_>>>()?;
        let cls = if cls.len() == 1 { cls[0] } else { t.concat(&cls, 0)? };
        let s = &self.store;
        let action_logits = self.action_head.forward(t, s, cls)?;
        let ing = self.ingredient_head.forward(t, s, cls)?;
        let loc = self.location_head.forward(t, s, cls)?;
        Ok(HeadOutputs {
            cls,
            action_logits,
            ingredient_probs: t.sigmoid(ing)?,
            location_probs: t.sigmoid(loc)?,
        })
    }

    pub fn predict_entities(&self, tokens: &[u32]) -> Result<EntityPrediction> {
        let mut t = Tape::no_grad();
        let out = self.heads(&mut t, &[tokens])?;
        Ok(EntityPrediction {
            action: argmax(t.value(out.action_logits).data()),
            ingredients: select(t.value(out.ingredient_probs).data()),
            locations: select(t.value(out.location_probs).data()),
            embedding: t.value(out.cls).data().to_vec(),
        })
    }

    /// Action cross-entropy plus ingredient and location BCE, unit weights.
    /// BCE is summed over labels and every term is averaged over the batch.
    pub fn multitask_loss(&self, t: &mut Tape, batch: &[&Instruction]) -> Result<LossTerms> {
        let mut actions = Vec::with_capacity(batch.len());
        let mut ing = Tensor::zeros(&[batch.len(), self.sizes.ingredients]);
        let mut loc = Tensor::zeros(&[batch.len(), self.sizes.locations]);
        for (row, ins) in batch.iter().enumerate() {
            let missing = || Error::MissingGold(format!("instruction `{}`", ins.raw));
            actions.push(ins.gold_action.ok_or_else(missing)?);
            for &i in ins.gold_ingredients.as_ref().ok_or_else(missing)? {
                ing.data_mut()[row * self.sizes.ingredients + i] = 1.0;
            }
            for &l in ins.gold_locations.as_ref().ok_or_else(missing)? {
                loc.data_mut()[row * self.sizes.locations + l] = 1.0;
            }
        }
        let sentences: Vec<&[u32]> = batch.iter().map(|i| i.tokens.as_slice()).collect();
        let out = self.heads(t, &sentences)?;
        let action = t.cross_entropy(out.action_logits, &actions)?;
        let ingredient = bce_or_zero(t, out.ingredient_probs, &ing)?;
        let location = bce_or_zero(t, out.location_probs, &loc)?;
        let partial = t.add(action, ingredient)?;
        let total = t.add(partial, location)?;
        Ok(LossTerms {
            total,
            action,
            ingredient,
            location,
        })
    }

    /// Macro-F1 and recall of predictions against gold annotations over every
    /// annotated instruction of `recipes`.
    pub fn evaluate_selection(&self, recipes: &[Recipe]) -> Result<SelectionScores> {
        let mut pairs = Vec::new();
        for ins in recipes.iter().flat_map(|r| &r.instructions) {
            let (Some(a), Some(i), Some(l)) = (ins.gold_action, &ins.gold_ingredients, &ins.gold_locations) else {
                continue;
            };
            let p = self.predict_entities(&ins.tokens)?;
            pairs.push(SelectionPair {
                gold: [BTreeSet::from([a]), i.clone(), l.clone()],
                predicted: [BTreeSet::from([p.action]), p.ingredients, p.locations],
            });
        }
        Ok(selection_scores(&pairs))
    }

    pub fn parameter_count(&self) -> usize {
        self.store.total_elements()
    }
}

fn bce_or_zero(t: &mut Tape, probs: Var, targets: &Tensor) -> Result<Var> {
    if targets.is_empty() {
        return Ok(t.constant(Tensor::scalar(0.0))?);
    }
    let mean = t.binary_cross_entropy(probs, targets)?;
    Ok(t.scale(mean, targets.shape()[1] as f64)?)
}

pub struct LossTerms {
    pub total: Var,
    pub action: Var,
    pub ingredient: Var,
    pub location: Var,
}
