use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, ParamStore, Tape, Tensor, Var};
use crate::corpus::{TokenId, EOQ};
use crate::encoder::{
    pack_context, pack_decoder_slot, pack_qgen_input, Attention, Checkpoint, Encoder, EncoderConfig, FeedForward,
    LayerNorm, TYPE_QUESTION,
};
use crate::error::{contract, Result};
use crate::span::Span;
use crate::training::Trainable;

pub const QGEN_KIND: &str = "qgen";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QGenMode {
    /// The encoder alone, reading `[question slot | context]` under the
    /// generation mask.
    EncoderOnly,
    /// Encoder over the context plus a causal decoder with cross-attention.
    #[serde(rename = "seq2seq")]
    Seq2Seq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QGenConfig {
    /// Fixed question slot length; also the longest question generated.
    pub slot_len: usize,
    pub mode: QGenMode,
}

impl Default for QGenConfig {
    fn default() -> Self {
        Self {
            slot_len: 20,
            mode: QGenMode::EncoderOnly,
        }
    }
}

/// Teacher-forcing targets: the question followed by `[EOQ]`, cut to
/// `slot_len` tokens.
pub fn question_targets(question: &[TokenId], slot_len: usize) -> Vec<TokenId> {
    let mut t: Vec<TokenId> = question.iter().copied().take(slot_len).collect();
    if t.len() < slot_len {
        t.push(EOQ);
    }
    t
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_norm: LayerNorm,
    pub self_attn: Attention,
    pub cross_norm: LayerNorm,
    pub cross_attn: Attention,
    pub ff_norm: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            self_norm: LayerNorm::new(store, &format!("{name}.self_norm"), cfg.hidden),
            self_attn: Attention::new(store, &format!("{name}.self_attn"), cfg.hidden, cfg.heads, rng),
            cross_norm: LayerNorm::new(store, &format!("{name}.cross_norm"), cfg.hidden),
            cross_attn: Attention::new(store, &format!("{name}.cross_attn"), cfg.hidden, cfg.heads, rng),
            ff_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), cfg.hidden),
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg.hidden, cfg.ff, rng),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, memory: Var, causal: Var) -> Result<Var> {
        let a = self.self_norm.forward(tape, store, x)?;
        let a = self.self_attn.forward(tape, store, a, a, Some(causal))?;
        let a = tape.dropout(a)?;
        let x = tape.add(x, a)?;
        let c = self.cross_norm.forward(tape, store, x)?;
        let c = self.cross_attn.forward(tape, store, c, memory, None)?;
        let c = tape.dropout(c)?;
        let x = tape.add(x, c)?;
        let f = self.ff_norm.forward(tape, store, x)?;
        let f = self.ff.forward(tape, store, f)?;
        let f = tape.dropout(f)?;
        tape.add(x, f)
    }
}

/// Causal decoder sharing the encoder's embeddings; its output projection is
/// the shared token embedding matrix.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub layers: Vec<DecoderLayer>,
    pub final_norm: LayerNorm,
}

/// Question generator `p(q|a,c)` in either architecture.
#[derive(Clone, Debug)]
pub struct QuestionGenerator {
    pub params: ParamStore,
    pub encoder: Encoder,
    pub decoder: Option<Decoder>,
    pub config: QGenConfig,
}

impl Trainable for QuestionGenerator {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

impl QuestionGenerator {
    pub fn new(encoder: EncoderConfig, config: QGenConfig, seed: u64) -> Result<Self> {
        if config.slot_len < 2 {
            return Err(contract("question slot must hold at least two tokens"));
        }
        let needed = match config.mode {
            QGenMode::EncoderOnly => config.slot_len + 1,
            QGenMode::Seq2Seq => config.slot_len,
        };
        if needed > encoder.max_positions {
            return Err(contract(format!(
                "question slot {} does not fit {} positions",
                config.slot_len, encoder.max_positions
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let enc = Encoder::new(encoder, &mut params, "encoder", &mut rng)?;
        let decoder = match config.mode {
            QGenMode::EncoderOnly => None,
            QGenMode::Seq2Seq => Some(Decoder {
                layers: (0..encoder.layers)
                    .map(|l| DecoderLayer::new(&mut params, &format!("decoder.layer{l}"), &encoder, &mut rng))
                    .collect(),
                final_norm: LayerNorm::new(&mut params, "decoder.final_norm", encoder.hidden),
            }),
        };
        Ok(Self {
            params,
            encoder: enc,
            decoder,
            config,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.encoder.config.vocab_size
    }

    /// Context representations for the decoder, with the answer span (if
    /// any) marked by type ids.
    pub fn memory(&self, tape: &mut Tape, context: &[TokenId], answer: Option<Span>) -> Result<Var> {
        let input = pack_context(context, answer)?;
        self.encoder.encode(tape, &self.params, &input)
    }

    /// Hidden states of the question slot, `[slot_len×h]`, for the slot
    /// holding `[CLS] prefix [PAD]…`. Row `i` predicts question token `i+1`.
    pub fn slot_hidden(&self, tape: &mut Tape, prefix: &[TokenId], answer: Span, context: &[TokenId]) -> Result<Var> {
        let l = self.config.slot_len;
        match &self.decoder {
            None => {
                let input = pack_qgen_input(prefix, context, answer, l)?;
                let h = self.encoder.encode(tape, &self.params, &input)?;
                tape.slice(h, 0, 0, l)
            }
            Some(dec) => {
                if !answer.within(context.len()) || answer.start > answer.end {
                    return Err(contract(format!("answer {answer:?} outside context")));
                }
                let memory = self.memory(tape, context, Some(answer))?;
                self.decode_slot(tape, dec, memory, prefix)
            }
        }
    }

    fn decode_slot(&self, tape: &mut Tape, dec: &Decoder, memory: Var, prefix: &[TokenId]) -> Result<Var> {
        let l = self.config.slot_len;
        let (tokens, mask) = pack_decoder_slot(prefix, l);
        let positions: Vec<usize> = (0..l).collect();
        let mut x = self
            .encoder
            .embed(tape, &self.params, &tokens, &vec![TYPE_QUESTION; l], &positions)?;
        let causal = tape.constant(mask.additive());
        for layer in &dec.layers {
            x = layer.forward(tape, &self.params, x, memory, causal)?;
        }
        dec.final_norm.forward(tape, &self.params, x)
    }

    /// Vocabulary logits for the next question token after `prefix`.
    pub fn next_token_logits(&self, prefix: &[TokenId], answer: Span, context: &[TokenId]) -> Result<Tensor> {
        if prefix.len() >= self.config.slot_len {
            return Err(contract(format!(
                "prefix of {} tokens leaves no room in a slot of {}",
                prefix.len(),
                self.config.slot_len
            )));
        }
        let mut tape = Tape::inference();
        let h = self.slot_hidden(&mut tape, prefix, answer, context)?;
        let row = tape.slice(h, 0, prefix.len(), 1)?;
        let logits = self.encoder.lm_logits(&mut tape, &self.params, row)?;
        let v = tape.value(logits).clone();
        Tensor::new(vec![v.numel()], v.into_data())
    }

    /// Logits for every target position in one pass, `[n×V]` where
    /// `n = targets.len()`: the slot holds the targets themselves and the
    /// generation mask hides each position's future.
    pub fn teacher_forced_logits(
        &self,
        tape: &mut Tape,
        targets: &[TokenId],
        answer: Span,
        context: &[TokenId],
    ) -> Result<Var> {
        if targets.is_empty() || targets.len() > self.config.slot_len {
            return Err(contract(format!("{} targets for slot {}", targets.len(), self.config.slot_len)));
        }
        let prefix = &targets[..targets.len() - 1];
        let h = self.slot_hidden(tape, prefix, answer, context)?;
        let rows = tape.slice(h, 0, 0, targets.len())?;
        self.encoder.lm_logits(tape, &self.params, rows)
    }

    /// Per-position `-log p(q_i | q_<i, a, c)` for the question plus `[EOQ]`.
    pub fn position_losses(&self, tape: &mut Tape, question: &[TokenId], answer: Span, context: &[TokenId]) -> Result<Var> {
        let targets = question_targets(question, self.config.slot_len);
        let logits = self.teacher_forced_logits(tape, &targets, answer, context)?;
        tape.cross_entropy_rows(logits, &targets)
    }

    /// Mean teacher-forced negative log-likelihood of one question.
    pub fn nll(&self, tape: &mut Tape, question: &[TokenId], answer: Span, context: &[TokenId]) -> Result<Var> {
        let per = self.position_losses(tape, question, answer, context)?;
        tape.mean(per)
    }

    /// Mean teacher-forced loss of generating `next` from `sentence` with the
    /// decoder; no answer is marked.
    pub fn next_sentence_nll(&self, tape: &mut Tape, sentence: &[TokenId], next: &[TokenId]) -> Result<Var> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| contract("next-sentence training needs the sequence-to-sequence mode"))?;
        let targets = question_targets(next, self.config.slot_len);
        let memory = self.memory(tape, sentence, None)?;
        let h = self.decode_slot(tape, dec, memory, &targets[..targets.len() - 1])?;
        let rows = tape.slice(h, 0, 0, targets.len())?;
        let logits = self.encoder.lm_logits(tape, &self.params, rows)?;
        let per = tape.cross_entropy_rows(logits, &targets)?;
        tape.mean(per)
    }

    pub fn checkpoint(&self, step: u64, optimizer: Option<&AdamState>) -> Result<Checkpoint> {
        Ok(Checkpoint::capture(
            QGEN_KIND,
            self.encoder.config,
            serde_json::to_value(self.config)?,
            &self.params,
            step,
            optimizer,
        ))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(QGEN_KIND)?;
        let config: QGenConfig = serde_json::from_value(ckpt.settings.clone())?;
        let mut model = Self::new(ckpt.encoder, config, 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }
}
