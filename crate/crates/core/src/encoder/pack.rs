use std::ops::Range;

use super::mask::{build_qgen_mask, AttentionMask};
use crate::corpus::{TokenId, CLS, PAD, SEP};
use crate::error::{contract, Result};
use crate::span::Span;

pub const TYPE_QUESTION: usize = 0;
pub const TYPE_CONTEXT: usize = 1;
pub const TYPE_ANSWER: usize = 2;

/// Token ids, type ids and attention mask for one encoder pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedInput {
    pub tokens: Vec<TokenId>,
    pub type_ids: Vec<usize>,
    /// Position id of each token; `0..S` for every packer here.
    pub positions: Vec<usize>,
    pub mask: AttentionMask,
    /// Positions holding the question (or question slot).
    pub question_slot: Range<usize>,
    /// First context position; context occupies the rest of the sequence.
    pub context_start: usize,
}

impl PackedInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn context_len(&self) -> usize {
        self.tokens.len() - self.context_start
    }
}

/// Fixed-length question slot `[CLS] prefix [PAD]…` of exactly `slot_len`
/// tokens. The prefix is truncated to `slot_len - 1`.
pub fn question_slot(prefix: &[TokenId], slot_len: usize) -> Vec<TokenId> {
    let keep = prefix.len().min(slot_len.saturating_sub(1));
    let mut slot = Vec::with_capacity(slot_len);
    slot.push(CLS);
    slot.extend_from_slice(&prefix[..keep]);
    slot.resize(slot_len, PAD);
    slot
}

fn clear_pad_keys(mask: &mut AttentionMask, tokens: &[TokenId], slot: Range<usize>) {
    for k in slot {
        if tokens[k] == PAD {
            for q in 0..mask.size() {
                mask.set(q, k, false);
            }
        }
    }
}

/// Layout `[CLS q_1 … q_{i-1} PAD … | context]` for the encoder-only
/// question generator. The question slot always has `slot_len` positions so
/// the input never reveals the target question length. The hidden state at
/// slot `i - 1` predicts question token `i`.
pub fn pack_qgen_input(
    prefix: &[TokenId],
    context: &[TokenId],
    answer: Span,
    slot_len: usize,
) -> Result<PackedInput> {
    if slot_len == 0 || context.is_empty() {
        return Err(contract("question slot and context must be non-empty"));
    }
    if !answer.within(context.len()) {
        return Err(contract(format!(
            "answer {answer:?} outside context of length {}",
            context.len()
        )));
    }
    let mut tokens = question_slot(prefix, slot_len);
    tokens.extend_from_slice(context);
    let mut type_ids = vec![TYPE_QUESTION; slot_len];
    type_ids.extend((0..context.len()).map(|i| {
        if i >= answer.start && i <= answer.end {
            TYPE_ANSWER
        } else {
            TYPE_CONTEXT
        }
    }));
    let mut mask = build_qgen_mask(slot_len, context.len());
    clear_pad_keys(&mut mask, &tokens, 0..slot_len);
    Ok(PackedInput {
        positions: (0..tokens.len()).collect(),
        tokens,
        type_ids,
        mask,
        question_slot: 0..slot_len,
        context_start: slot_len,
    })
}

/// `[CLS] question [SEP] context` with full attention, for the QA model.
pub fn pack_question_context(question: &[TokenId], context: &[TokenId]) -> Result<PackedInput> {
    if context.is_empty() {
        return Err(contract("context must be non-empty"));
    }
    let mut tokens = Vec::with_capacity(question.len() + context.len() + 2);
    tokens.push(CLS);
    tokens.extend_from_slice(question);
    tokens.push(SEP);
    let context_start = tokens.len();
    tokens.extend_from_slice(context);
    let mut type_ids = vec![TYPE_QUESTION; context_start];
    type_ids.resize(tokens.len(), TYPE_CONTEXT);
    Ok(PackedInput {
        mask: AttentionMask::full(tokens.len()),
        positions: (0..tokens.len()).collect(),
        tokens,
        type_ids,
        question_slot: 1..1 + question.len(),
        context_start,
    })
}

/// `[CLS] context` with full attention; answer tokens get type 2 when an
/// answer is given.
pub fn pack_context(context: &[TokenId], answer: Option<Span>) -> Result<PackedInput> {
    if context.is_empty() {
        return Err(contract("context must be non-empty"));
    }
    if let Some(a) = answer {
        if !a.within(context.len()) {
            return Err(contract(format!("answer {a:?} outside context")));
        }
    }
    let mut tokens = Vec::with_capacity(context.len() + 1);
    tokens.push(CLS);
    tokens.extend_from_slice(context);
    let mut type_ids = vec![TYPE_QUESTION];
    type_ids.extend((0..context.len()).map(|i| match answer {
        Some(a) if i >= a.start && i <= a.end => TYPE_ANSWER,
        _ => TYPE_CONTEXT,
    }));
    Ok(PackedInput {
        mask: AttentionMask::full(tokens.len()),
        positions: (0..tokens.len()).collect(),
        tokens,
        type_ids,
        question_slot: 0..0,
        context_start: 1,
    })
}

/// Decoder-side slot `[CLS] prefix [PAD]…` with a causal mask whose pad
/// columns are cleared.
pub fn pack_decoder_slot(prefix: &[TokenId], slot_len: usize) -> (Vec<TokenId>, AttentionMask) {
    let tokens = question_slot(prefix, slot_len);
    let mut mask = AttentionMask::causal(slot_len);
    clear_pad_keys(&mut mask, &tokens, 0..slot_len);
    (tokens, mask)
}
