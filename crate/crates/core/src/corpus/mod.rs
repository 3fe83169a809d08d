//! Tokenization, windows, SQuAD ingestion and the templated toy world.

mod squad;
pub mod toyworld;
mod vocab;
mod window;

use serde::{Deserialize, Serialize};

pub use squad::{extend_vocab_from_squad, load_squad_json, SquadLoad};
pub use toyworld::{generate_toy_world, Template, ToyConfig, ToyExample, ToyWorld};
pub use vocab::{
    detokenize, split_with_offsets, split_words, tokenize, OffsetToken, TokenId, Vocabulary, CLS,
    EOQ, PAD, RESERVED, SEP, UNK,
};
pub use window::{extract_windows, Window};

use crate::span::Span;

/// One supervised `(context, question, answer)` triple; `answer` is `None`
/// for unanswerable questions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub context: Vec<TokenId>,
    pub question: Vec<TokenId>,
    pub answer: Option<Span>,
}

impl LabeledExample {
    /// # Panics
    /// If `answer` does not lie inside `context`.
    pub fn with_answer(context: Vec<TokenId>, question: Vec<TokenId>, answer: Span) -> Self {
        assert!(answer.within(context.len()), "answer {answer:?} outside context");
        Self {
            context,
            question,
            answer: Some(answer),
        }
    }

    pub fn unanswerable(context: Vec<TokenId>, question: Vec<TokenId>) -> Self {
        Self {
            context,
            question,
            answer: None,
        }
    }

    pub fn answerable(&self) -> bool {
        self.answer.is_some()
    }

    pub fn answer_tokens(&self) -> Option<&[TokenId]> {
        self.answer.map(|s| s.slice(&self.context))
    }
}
