//! Transformer encoder with learned positions, type ids, arbitrary boolean
//! attention masks and a tied output projection.

mod checkpoint;
mod mask;
mod model;
mod pack;

pub use checkpoint::{Checkpoint, NamedArray, CHECKPOINT_FORMAT};
pub use mask::{build_qgen_mask, AttentionMask, MASKED_SCORE};
pub use model::{
    Attention, Encoder, EncoderConfig, EncoderLayer, FeedForward, LayerNorm, Linear, TYPE_VOCAB,
};
pub use pack::{
    pack_context, pack_decoder_slot, pack_qgen_input, pack_question_context, question_slot,
    PackedInput, TYPE_ANSWER, TYPE_CONTEXT, TYPE_QUESTION,
};
