//! Transformer instruction decoder conditioned on the recurrent graph
//! sequence. A recipe is one token stream `BOS s₀ SEP s₁ … EOS`.

use numerics::{init, ParamId, ParamStore, Tape, Tensor, Var};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize::{BOS, EOS, SEP};
use crate::error::{Error, Result};
use crate::nn::{Block, LayerNorm, Linear};

/// Parameter-name prefix of every decoder parameter.
pub const PREFIX: &str = "dec.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Model width; equal to the graph-sequence width.
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            width: 128,
            layers: 2,
            heads: 4,
            ffn: 256,
            max_positions: 160,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_tokens: usize,
    pub mode: DecodeMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_tokens: 128,
            mode: DecodeMode::Greedy,
        }
    }
}

/// Frames instruction word ids as `BOS s₀ SEP s₁ … EOS`.
pub fn frame_stream<'a>(instructions: impl IntoIterator<Item = &'a [u32]>) -> Vec<u32> {
    let mut out = vec![BOS];
    for (i, ins) in instructions.into_iter().enumerate() {
        if i > 0 {
            out.push(SEP);
        }
        out.extend_from_slice(ins);
    }
    out.push(EOS);
    out
}

/// Splits a generated stream at `SEP`, dropping `BOS` and everything from `EOS`.
pub fn split_stream(stream: &[u32]) -> Vec<Vec<u32>> {
    let body = stream.strip_prefix(&[BOS]).unwrap_or(stream);
    let end = body.iter().position(|&t| t == EOS).unwrap_or(body.len());
    body[..end].split(|&t| t == SEP).map(<[u32]>::to_vec).collect()
}

#[derive(Clone, Debug)]
pub struct InstructionDecoder {
    pub config: DecoderConfig,
    pub vocab_size: usize,
    pub tokens: ParamId,
    pub positions: ParamId,
    pub blocks: Vec<Block>,
    pub final_norm: LayerNorm,
    pub output: Linear,
}

pub struct DecoderOutput {
    pub logits: Var,
    /// Head-averaged cross-attention `[len × T]` of each layer.
    pub cross_attention: Vec<Var>,
}

impl InstructionDecoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, config: DecoderConfig, vocab_size: usize) -> Result<Self> {
        let d = config.width;
        let tokens = store.add("dec.tokens", init::normal(rng, &[vocab_size, d], 0.5))?;
        let positions = store.add("dec.positions", init::normal(rng, &[config.max_positions, d], 0.1))?;
        let blocks = (0..config.layers)
            .map(|l| Block::new(store, rng, &format!("dec.block{l}"), d, config.heads, config.ffn, true))
            .collect::<numerics::Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(store, "dec.final_norm", d)?;
        let output = Linear::new(store, rng, "dec.output", d, vocab_size, true)?;
        Ok(Self {
            config,
            vocab_size,
            tokens,
            positions,
            blocks,
            final_norm,
            output,
        })
    }

    /// Next-token logits `[len × V]` for every prefix position of `inputs`.
    pub fn forward(&self, t: &mut Tape, s: &ParamStore, g: Var, inputs: &[u32]) -> Result<DecoderOutput> {
        if inputs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if inputs.len() > self.config.max_positions {
            return Err(Error::TooLong {
                len: inputs.len(),
                max: self.config.max_positions,
            });
        }
        let table = t.param(s, self.tokens);
        let ids: Vec<usize> = inputs.iter().map(|&i| i as usize).collect();
        let emb = t.gather_rows(table, &ids)?;
        let pos_table = t.param(s, self.positions);
        let pos = t.slice(pos_table, 0, 0, inputs.len())?;
        let mut x = t.add(emb, pos)?;
        let mut cross_attention = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let out = block.forward(t, s, x, Some(g), true)?;
            x = out.out;
            let mut avg = out.cross_probs[0];
            for &p in &out.cross_probs[1..] {
                avg = t.add(avg, p)?;
            }
            cross_attention.push(t.scale(avg, 1.0 / out.cross_probs.len() as f64)?);
        }
        let h = self.final_norm.forward(t, s, x)?;
        Ok(DecoderOutput {
            logits: self.output.forward(t, s, h)?,
            cross_attention,
        })
    }

    /// Mean token cross-entropy under teacher forcing on a framed stream.
    pub fn decoder_loss(&self, t: &mut Tape, s: &ParamStore, g: Var, gold: &[u32]) -> Result<Var> {
        if gold.len() < 2 {
            return Err(Error::EmptyInput);
        }
        let out = self.forward(t, s, g, &gold[..gold.len() - 1])?;
        let targets: Vec<usize> = gold[1..].iter().map(|&i| i as usize).collect();
        Ok(t.cross_entropy(out.logits, &targets)?)
    }

    /// Decodes from `BOS` until `EOS` or `max_tokens` emitted tokens. The
    /// returned stream excludes `BOS`.
    pub fn generate(&self, s: &ParamStore, g: &Tensor, config: &GenerationConfig) -> Result<Vec<u32>> {
        if config.max_tokens == 0 {
            return Err(Error::Config("max tokens must be at least 1".into()));
        }
        let mut rng = match config.mode {
            DecodeMode::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            DecodeMode::Greedy => None,
        };
        let mut prefix = vec![BOS];
        let mut out = Vec::new();
        while out.len() < config.max_tokens && prefix.len() <= self.config.max_positions {
            let mut t = Tape::no_grad();
            let gv = t.constant(g.clone())?;
            let logits = self.forward(&mut t, s, gv, &prefix)?.logits;
            let last = t.value(logits).row(prefix.len() - 1).to_vec();
            let next = match (&config.mode, rng.as_mut()) {
                (DecodeMode::Sample { temperature, .. }, Some(rng)) => {
                    let temp = temperature.max(1e-6);
                    let max = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let weights: Vec<f64> = last.iter().map(|v| ((v - max) / temp).exp()).collect();
                    WeightedIndex::new(&weights)
                        .map_err(|e| Error::Invalid(e.to_string()))?
                        .sample(rng) as u32
                }
                _ => crate::entity::argmax(&last) as u32,
            };
            out.push(next);
            if next == EOS {
                break;
            }
            prefix.push(next);
        }
        Ok(out)
    }

    /// Head-averaged last-layer cross-attention of query `position` of the
    /// teacher-forced `prefix` over the `T` rows of `g`.
    pub fn cross_attention_probe(&self, s: &ParamStore, g: &Tensor, prefix: &[u32], position: usize) -> Result<Vec<f64>> {
        if position >= prefix.len() {
            return Err(Error::Invalid(format!("position {position} outside prefix of {}", prefix.len())));
        }
        let mut t = Tape::no_grad();
        let gv = t.constant(g.clone())?;
        let out = self.forward(&mut t, s, gv, prefix)?;
        let last = *out.cross_attention.last().ok_or_else(|| Error::Config("decoder has no layers".into()))?;
        Ok(t.value(last).row(position).to_vec())
    }
}
