use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pack::PackedInput;
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::corpus::PAD;
use crate::error::{contract, shape_err, Result};

pub const TYPE_VOCAB: usize = 3;
const EMBED_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_positions: usize,
}

impl EncoderConfig {
    /// h=64, 2 layers, 4 heads, ff=128, 96 positions.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff: 128,
            max_positions: 96,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(contract(format!(
                "hidden size {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            )));
        }
        if self.vocab_size == 0 || self.max_positions == 0 || self.ff == 0 {
            return Err(contract("vocab, positions and ff sizes must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Affine map `x·W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let std = (1.0 / fan_in as f64).sqrt();
        Self {
            weight: store.add_normal(format!("{name}.weight"), &[fan_in, fan_out], std, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[fan_out]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        let b = tape.param(store, self.bias);
        tape.add(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add_ones(format!("{name}.gamma"), &[width]),
            beta: store.add_zeros(format!("{name}.beta"), &[width]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Clone, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.query"), hidden, hidden, rng),
            key: Linear::new(store, &format!("{name}.key"), hidden, hidden, rng),
            value: Linear::new(store, &format!("{name}.value"), hidden, hidden, rng),
            output: Linear::new(store, &format!("{name}.output"), hidden, hidden, rng),
            heads,
        }
    }

    /// `queries` is `[Sq×h]`, `keys` is `[Sk×h]`; `mask_add` (if any) is an
    /// additive `[Sq×Sk]` score mask.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        queries: Var,
        keys: Var,
        mask_add: Option<Var>,
    ) -> Result<Var> {
        self.forward_with_weights(tape, store, queries, keys, mask_add).map(|(out, _)| out)
    }

    /// As [`Attention::forward`], also returning each head's `[Sq×Sk]`
    /// attention weights.
    pub fn forward_with_weights(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        queries: Var,
        keys: Var,
        mask_add: Option<Var>,
    ) -> Result<(Var, Vec<Var>)> {
        let q = self.query.forward(tape, store, queries)?;
        let k = self.key.forward(tape, store, keys)?;
        let v = self.value.forward(tape, store, keys)?;
        let hidden = tape.shape(q)[1];
        let dh = hidden / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice(q, 1, h * dh, dh)?;
            let kh = tape.slice(k, 1, h * dh, dh)?;
            let vh = tape.slice(v, 1, h * dh, dh)?;
            let scores = tape.matmul_bt(qh, kh)?;
            let mut scores = tape.scale(scores, scale)?;
            if let Some(m) = mask_add {
                scores = tape.add(scores, m)?;
            }
            let probs = tape.softmax(scores, 1)?;
            weights.push(probs);
            outs.push(tape.matmul(probs, vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat(&outs, 1)? };
        Ok((self.output.forward(tape, store, joined)?, weights))
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, ff: usize, rng: &mut R) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), hidden, ff, rng),
            down: Linear::new(store, &format!("{name}.down"), ff, hidden, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(tape, store, x)?;
        let h = tape.gelu(h)?;
        self.down.forward(tape, store, h)
    }
}

/// Pre-norm transformer block: `x + Attn(LN x)`, then `x + FF(LN x)`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attn_norm: LayerNorm,
    pub attn: Attention,
    pub ff_norm: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            attn_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), cfg.hidden),
            attn: Attention::new(store, &format!("{name}.attn"), cfg.hidden, cfg.heads, rng),
            ff_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), cfg.hidden),
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg.hidden, cfg.ff, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mask_add: Option<Var>) -> Result<Var> {
        self.forward_with_weights(tape, store, x, mask_add).map(|(out, _)| out)
    }

    pub fn forward_with_weights(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mask_add: Option<Var>,
    ) -> Result<(Var, Vec<Var>)> {
        let a = self.attn_norm.forward(tape, store, x)?;
        let (a, weights) = self.attn.forward_with_weights(tape, store, a, a, mask_add)?;
        let a = tape.dropout(a)?;
        let x = tape.add(x, a)?;
        let f = self.ff_norm.forward(tape, store, x)?;
        let f = self.ff.forward(tape, store, f)?;
        let f = tape.dropout(f)?;
        Ok((tape.add(x, f)?, weights))
    }
}

/// Token, type and learned absolute position embeddings, a stack of
/// [`EncoderLayer`]s and a final layer norm. The token embedding matrix also
/// serves as the output projection of [`Encoder::lm_logits`].
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub token_embedding: ParamId,
    pub type_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, store: &mut ParamStore, name: &str, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let token_embedding = store.add_normal(format!("{name}.token_embedding"), &[config.vocab_size, config.hidden], EMBED_STD, rng);
        let type_embedding = store.add_normal(format!("{name}.type_embedding"), &[TYPE_VOCAB, config.hidden], EMBED_STD, rng);
        let position_embedding =
            store.add_normal(format!("{name}.position_embedding"), &[config.max_positions, config.hidden], EMBED_STD, rng);
        let layers = (0..config.layers)
            .map(|l| EncoderLayer::new(store, &format!("{name}.layer{l}"), &config, rng))
            .collect();
        let final_norm = LayerNorm::new(store, &format!("{name}.final_norm"), config.hidden);
        Ok(Self {
            config,
            token_embedding,
            type_embedding,
            position_embedding,
            layers,
            final_norm,
        })
    }

    /// Sum of token, type and position embeddings, `[S×h]`.
    pub fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[usize],
        type_ids: &[usize],
        positions: &[usize],
    ) -> Result<Var> {
        let s = tokens.len();
        if s == 0 || s > self.config.max_positions {
            return Err(contract(format!(
                "sequence length {s} outside 1..={}",
                self.config.max_positions
            )));
        }
        if type_ids.len() != s || positions.len() != s {
            return Err(shape_err(
                "embed",
                format!("{s} tokens, {} type ids, {} positions", type_ids.len(), positions.len()),
            ));
        }
        let tok_table = tape.param(store, self.token_embedding);
        let tok = tape.embedding(tok_table, tokens)?;
        let type_table = tape.param(store, self.type_embedding);
        let ty = tape.embedding(type_table, type_ids)?;
        let pos_table = tape.param(store, self.position_embedding);
        let pos = tape.embedding(pos_table, positions)?;
        let x = tape.add(tok, ty)?;
        let x = tape.add(x, pos)?;
        tape.dropout(x)
    }

    /// Contextual representations `[S×h]` under `input.mask`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, input: &PackedInput) -> Result<Var> {
        self.encode_with_weights(tape, store, input).map(|(h, _)| h)
    }

    /// Attention weights of every layer and head, layer-major, from an
    /// inference pass.
    pub fn attention_maps(&self, store: &ParamStore, input: &PackedInput) -> Result<Vec<Tensor>> {
        let mut tape = Tape::inference();
        let (_, maps) = self.encode_with_weights(&mut tape, store, input)?;
        Ok(maps.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    fn encode_with_weights(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &PackedInput,
    ) -> Result<(Var, Vec<Var>)> {
        let s = input.len();
        if input.mask.size() != s {
            return Err(shape_err("encode", format!("mask {} for {s} tokens", input.mask.size())));
        }
        for q in 0..s {
            if input.tokens[q] != PAD && input.mask.row_is_empty(q) {
                return Err(contract(format!("position {q} has no attendable key")));
            }
        }
        let mut x = self.embed(tape, store, &input.tokens, &input.type_ids, &input.positions)?;
        let mask = tape.constant(input.mask.additive());
        let mut maps = Vec::new();
        for layer in &self.layers {
            let (out, w) = layer.forward_with_weights(tape, store, x, Some(mask))?;
            x = out;
            maps.extend(w);
        }
        Ok((self.final_norm.forward(tape, store, x)?, maps))
    }

    /// `hidden · W_embᵀ`, one row of vocabulary logits per hidden row.
    pub fn lm_logits(&self, tape: &mut Tape, store: &ParamStore, hidden: Var) -> Result<Var> {
        let width = tape.shape(hidden).last().copied().unwrap_or(0);
        if width != self.config.hidden {
            return Err(shape_err(
                "lm_logits",
                format!("hidden width {width}, model width {}", self.config.hidden),
            ));
        }
        let w = tape.param(store, self.token_embedding);
        tape.matmul_bt(hidden, w)
    }
}
