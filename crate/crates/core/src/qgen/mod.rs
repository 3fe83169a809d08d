//! Question generation `p(q|a,c)`: the encoder-only generator that reads a
//! fixed-length question slot under a causal-within-question mask, and the
//! sequence-to-sequence variant with a cross-attending decoder. Both decode
//! greedily, by beam search or by sampling.

mod decode;
mod model;
mod train;

pub use decode::{
    beam_search, greedy_decode, sample_decode, sample_decode_with, DecodeMethod, DecodeResult, NextTokenModel,
};
pub use model::{question_targets, Decoder, DecoderLayer, QGenConfig, QGenMode, QuestionGenerator, QGEN_KIND};
pub use train::{finetune_qgen, pretrain_next_sentence, sentence_pairs};
