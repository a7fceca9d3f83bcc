//! Layers shared by the encoder and decoder stacks. Each layer holds only
//! parameter ids; values live in a [`ParamStore`] and are loaded onto a tape
//! per forward pass.

use numerics::{init, ParamId, ParamStore, Result, Tape, Tensor, Var};
use rand::Rng;

/// Additive attention mask value for disallowed positions.
const MASKED: f64 = -1e9;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), init::xavier(rng, fan_in, fan_out))?;
        let b = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]))?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let w = t.param(s, self.w);
        let y = t.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = t.param(s, b);
                t.add(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[width], 1.0))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[width]))?,
        })
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let g = t.param(s, self.gain);
        let b = t.param(s, self.bias);
        t.layer_norm(x, g, b, Self::EPS)
    }
}

/// Two-layer ReLU feed-forward network.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub hidden: Linear,
    pub out: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        width: usize,
        hidden: usize,
        out: usize,
    ) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, rng, &format!("{name}.hidden"), width, hidden, true)?,
            out: Linear::new(store, rng, &format!("{name}.out"), hidden, out, true)?,
        })
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let h = self.hidden.forward(t, s, x)?;
        let h = t.relu(h)?;
        self.out.forward(t, s, h)
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
    pub width: usize,
}

/// Output of one attention call; `probs` holds one `[q×k]` matrix per head.
pub struct AttentionOutput {
    pub out: Var,
    pub probs: Vec<Var>,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        width: usize,
        heads: usize,
    ) -> Result<Self> {
        assert!(heads > 0 && width % heads == 0, "width {width} not divisible by {heads} heads");
        Ok(Self {
            query: Linear::new(store, rng, &format!("{name}.query"), width, width, true)?,
            key: Linear::new(store, rng, &format!("{name}.key"), width, width, true)?,
            value: Linear::new(store, rng, &format!("{name}.value"), width, width, true)?,
            out: Linear::new(store, rng, &format!("{name}.out"), width, width, true)?,
            heads,
            width,
        })
    }

    /// Scaled dot-product attention of `queries [q×w]` over `memory [k×w]`.
    /// With `causal`, query `i` sees memory positions `0..=i` only.
    pub fn forward(&self, t: &mut Tape, s: &ParamStore, queries: Var, memory: Var, causal: bool) -> Result<AttentionOutput> {
        let q = self.query.forward(t, s, queries)?;
        let k = self.key.forward(t, s, memory)?;
        let v = self.value.forward(t, s, memory)?;
        let (nq, nk) = (t.shape(q)[0], t.shape(k)[0]);
        let dh = self.width / self.heads;
        let mask = if causal {
            let mut m = Tensor::zeros(&[nq, nk]);
            for i in 0..nq {
                for j in (i + 1)..nk {
                    m.data_mut()[i * nk + j] = MASKED;
                }
            }
            Some(t.constant(m)?)
        } else {
            None
        };
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = t.slice(q, 1, h * dh, dh)?;
            let kh = t.slice(k, 1, h * dh, dh)?;
            let vh = t.slice(v, 1, h * dh, dh)?;
            let scores = t.matmul_nt(qh, kh)?;
            let mut scores = t.scale(scores, scale)?;
            if let Some(m) = mask {
                scores = t.add(scores, m)?;
            }
            let p = t.softmax(scores, 1)?;
            outs.push(t.matmul(p, vh)?);
            probs.push(p);
        }
        let joined = if outs.len() == 1 { outs[0] } else { t.concat(&outs, 1)? };
        Ok(AttentionOutput {
            out: self.out.forward(t, s, joined)?,
            probs,
        })
    }
}

/// One direction of one GRU layer.
#[derive(Clone, Debug)]
struct GruCell {
    input: Linear,
    hidden: Linear,
    width: usize,
}

impl GruCell {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, input: usize, width: usize) -> Result<Self> {
        Ok(Self {
            input: Linear::new(store, rng, &format!("{name}.input"), input, 3 * width, true)?,
            hidden: Linear::new(store, rng, &format!("{name}.hidden"), width, 3 * width, true)?,
            width,
        })
    }

    /// Runs over the rows of `x [T×i]` in the given order and returns the
    /// hidden state of every row, indexed like the input.
    fn run(&self, t: &mut Tape, s: &ParamStore, x: Var, reverse: bool) -> Result<Vec<Var>> {
        let steps = t.shape(x)[0];
        let w = self.width;
        let xs = self.input.forward(t, s, x)?;
        let mut h = t.constant(Tensor::zeros(&[1, w]))?;
        let mut out = vec![h; steps];
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for i in order {
            let xi = t.row(xs, i)?;
            let hh = self.hidden.forward(t, s, h)?;
            let xz = t.slice(xi, 1, 0, 2 * w)?;
            let hz = t.slice(hh, 1, 0, 2 * w)?;
            let gates = t.add(xz, hz)?;
            let gates = t.sigmoid(gates)?;
            let z = t.slice(gates, 1, 0, w)?;
            let r = t.slice(gates, 1, w, w)?;
            let xn = t.slice(xi, 1, 2 * w, w)?;
            let hn = t.slice(hh, 1, 2 * w, w)?;
            let rh = t.mul(r, hn)?;
            let n = t.add(xn, rh)?;
            let n = t.tanh(n)?;
            // h' = n + z ⊙ (h - n)
            let diff = t.sub(h, n)?;
            let zd = t.mul(z, diff)?;
            h = t.add(n, zd)?;
            out[i] = h;
        }
        Ok(out)
    }
}

/// Stacked bidirectional GRU; output width is twice the per-direction width.
#[derive(Clone, Debug)]
pub struct BiGru {
    layers: Vec<(GruCell, GruCell)>,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        input: usize,
        width: usize,
        layers: usize,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let i = if l == 0 { input } else { 2 * width };
            out.push((
                GruCell::new(store, rng, &format!("{name}.{l}.fwd"), i, width)?,
                GruCell::new(store, rng, &format!("{name}.{l}.bwd"), i, width)?,
            ));
        }
        Ok(Self { layers: out })
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var> {
        let mut cur = x;
        for (fwd, bwd) in &self.layers {
            let f = fwd.run(t, s, cur, false)?;
            let b = bwd.run(t, s, cur, true)?;
            let rows = f
                .iter()
                .zip(&b)
                .map(|(&fi, &bi)| t.concat(&[fi, bi], 1))
                .collect::<Result<Vec<_>>>()?;
            cur = t.concat(&rows, 0)?;
        }
        Ok(cur)
    }
}

/// Pre-norm transformer block: self-attention, optional cross-attention,
/// feed-forward, each behind a residual connection.
#[derive(Clone, Debug)]
pub struct Block {
    pub self_norm: LayerNorm,
    pub self_attn: Attention,
    pub cross: Option<(LayerNorm, Attention)>,
    pub ffn_norm: LayerNorm,
    pub ffn: FeedForward,
}

pub struct BlockOutput {
    pub out: Var,
    pub cross_probs: Vec<Var>,
}

impl Block {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        width: usize,
        heads: usize,
        ffn: usize,
        cross: bool,
    ) -> Result<Self> {
        let cross = if cross {
            Some((
                LayerNorm::new(store, &format!("{name}.cross_norm"), width)?,
                Attention::new(store, rng, &format!("{name}.cross"), width, heads)?,
            ))
        } else {
            None
        };
        Ok(Self {
            self_norm: LayerNorm::new(store, &format!("{name}.self_norm"), width)?,
            self_attn: Attention::new(store, rng, &format!("{name}.self"), width, heads)?,
            cross,
            ffn_norm: LayerNorm::new(store, &format!("{name}.ffn_norm"), width)?,
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), width, ffn, width)?,
        })
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var, memory: Option<Var>, causal: bool) -> Result<BlockOutput> {
        let h = self.self_norm.forward(t, s, x)?;
        let a = self.self_attn.forward(t, s, h, h, causal)?;
        let mut x = t.add(x, a.out)?;
        let mut cross_probs = Vec::new();
        if let (Some((norm, attn)), Some(mem)) = (&self.cross, memory) {
            let h = norm.forward(t, s, x)?;
            let c = attn.forward(t, s, h, mem, false)?;
            x = t.add(x, c.out)?;
            cross_probs = c.probs;
        }
        let h = self.ffn_norm.forward(t, s, x)?;
        let f = self.ffn.forward(t, s, h)?;
        Ok(BlockOutput {
            out: t.add(x, f)?,
            cross_probs,
        })
    }
}
