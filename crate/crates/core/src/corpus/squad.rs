use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::error::Category;

use super::vocab::{split_with_offsets, split_words, Vocabulary};
use super::LabeledExample;
use crate::error::{Error, Result};
use crate::span::Span;

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<Qa>,
}

#[derive(Deserialize)]
struct Qa {
    question: String,
    #[serde(default)]
    is_impossible: bool,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Examples read from a SQuAD-v2 file plus the number of answerable
/// questions dropped because their answer did not align with tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct SquadLoad {
    pub examples: Vec<LabeledExample>,
    pub dropped: usize,
}

/// Adds every token of every context and question in the file to `vocab`.
pub fn extend_vocab_from_squad(path: &Path, vocab: &mut Vocabulary) -> Result<()> {
    let file = read(path)?;
    for a in &file.data {
        for p in &a.paragraphs {
            for w in split_words(&p.context) {
                vocab.insert(&w);
            }
            for q in &p.qas {
                for w in split_words(&q.question) {
                    vocab.insert(&w);
                }
            }
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<SquadFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| match e.classify() {
        Category::Data => Error::Schema {
            path: path.to_path_buf(),
            msg: e.to_string(),
        },
        _ => Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        },
    })
}

/// Loads SQuAD-v2 shaped JSON. Character answer offsets become token spans;
/// `is_impossible` questions become unanswerable examples. When several
/// answers are listed the first one is used.
pub fn load_squad_json(path: &Path, vocab: &Vocabulary) -> Result<SquadLoad> {
    let file = read(path)?;
    let mut examples = Vec::new();
    let mut dropped = 0;
    for article in &file.data {
        for para in &article.paragraphs {
            let ctx_tokens = split_with_offsets(&para.context);
            let context: Vec<usize> = ctx_tokens.iter().map(|t| vocab.id(&t.text)).collect();
            for qa in &para.qas {
                let question: Vec<usize> = split_words(&qa.question).iter().map(|w| vocab.id(w)).collect();
                if qa.is_impossible {
                    examples.push(LabeledExample::unanswerable(context.clone(), question));
                    continue;
                }
                let Some(ans) = qa.answers.first() else {
                    dropped += 1;
                    continue;
                };
                let a_start = ans.answer_start;
                let a_end = a_start + ans.text.chars().count();
                let first = ctx_tokens.iter().position(|t| t.end > a_start);
                let last = ctx_tokens.iter().rposition(|t| t.start < a_end);
                let span = match (first, last) {
                    (Some(s), Some(e)) if s <= e => Span { start: s, end: e },
                    _ => {
                        dropped += 1;
                        continue;
                    }
                };
                let span_words: Vec<&str> = ctx_tokens[span.start..=span.end].iter().map(|t| t.text.as_str()).collect();
                if span_words != split_words(&ans.text) {
                    dropped += 1;
                    continue;
                }
                examples.push(LabeledExample::with_answer(context.clone(), question, span));
            }
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} misaligned answers", path.display());
    }
    Ok(SquadLoad { examples, dropped })
}
