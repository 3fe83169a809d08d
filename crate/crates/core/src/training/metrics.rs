use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledExample, Vocabulary};
use crate::error::Result;
use crate::span::{Answer, QaModel};

/// SQuAD answer normalization: lowercase, drop punctuation and the articles
/// `a`, `an`, `the`, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 when the normalized strings agree; NULL matches only NULL.
pub fn exact_match(pred: Option<&str>, gold: Option<&str>) -> f64 {
    match (pred, gold) {
        (None, None) => 1.0,
        (Some(p), Some(g)) => f64::from(u8::from(normalize_answer(p) == normalize_answer(g))),
        _ => 0.0,
    }
}

/// Harmonic mean of token-multiset precision and recall after
/// normalization; NULL scores 1 against NULL and 0 against anything else.
pub fn f1(pred: Option<&str>, gold: Option<&str>) -> f64 {
    let (p, g) = match (pred, gold) {
        (None, None) => return 1.0,
        (Some(p), Some(g)) => (normalize_answer(p), normalize_answer(g)),
        _ => return 0.0,
    };
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return f64::from(u8::from(pt == gt));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub em: f64,
    pub f1: f64,
}

fn answer_text(answer: Answer, context: &[usize], vocab: &Vocabulary) -> Option<String> {
    answer.span().map(|s| {
        s.slice(context)
            .iter()
            .map(|&t| vocab.token(t))
            .collect::<Vec<_>>()
            .join(" ")
    })
}

/// Mean EM and F1 of the model's best answer on `dev`.
pub fn evaluate_qa(model: &QaModel, dev: &[LabeledExample], vocab: &Vocabulary) -> Result<EvalScores> {
    if dev.is_empty() {
        return Ok(EvalScores::default());
    }
    let mut total = EvalScores::default();
    for ex in dev {
        let pred = model.qa_predict(&ex.context, &ex.question)?;
        let p = answer_text(pred, &ex.context, vocab);
        let g = answer_text(ex.answer.map_or(Answer::Null, Answer::Span), &ex.context, vocab);
        total.em += exact_match(p.as_deref(), g.as_deref());
        total.f1 += f1(p.as_deref(), g.as_deref());
    }
    let n = dev.len() as f64;
    Ok(EvalScores {
        em: total.em / n,
        f1: total.f1 / n,
    })
}
