use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::error::{contract, Result};

/// Inclusive token span `[start, end]` within a context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(contract(format!("span start {start} after end {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn within(&self, ctx_len: usize) -> bool {
        self.start <= self.end && self.end < ctx_len
    }

    pub fn slice<'a, T>(&self, ctx: &'a [T]) -> &'a [T] {
        &ctx[self.start..=self.end]
    }
}

/// A candidate answer: a span, or the NULL "no answer" outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Span(Span),
    Null,
}

impl Answer {
    pub fn span(&self) -> Option<Span> {
        match self {
            Answer::Span(s) => Some(*s),
            Answer::Null => None,
        }
    }
}

/// Lexicographic `(start, end)` order with NULL last.
fn answer_order(a: &Answer, b: &Answer) -> Ordering {
    match (a, b) {
        (Answer::Span(x), Answer::Span(y)) => x.cmp(y),
        (Answer::Span(_), Answer::Null) => Ordering::Less,
        (Answer::Null, Answer::Span(_)) => Ordering::Greater,
        (Answer::Null, Answer::Null) => Ordering::Equal,
    }
}

/// Every span with `end < ctx_len` and length at most `max_len`, in
/// lexicographic order.
pub fn enumerate_spans(ctx_len: usize, max_len: usize) -> Vec<Span> {
    let mut out = Vec::new();
    for s in 0..ctx_len {
        for e in s..ctx_len.min(s + max_len) {
            out.push(Span { start: s, end: e });
        }
    }
    out
}

/// Normalized probabilities over candidate answers.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanDistribution {
    answers: Vec<Answer>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl SpanDistribution {
    /// Softmax over `scores`, one per answer.
    pub fn from_scores(answers: Vec<Answer>, scores: &[f64]) -> Result<Self> {
        if answers.len() != scores.len() || answers.is_empty() {
            return Err(contract(format!(
                "{} answers vs {} scores",
                answers.len(),
                scores.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(crate::Error::Numeric("span scores".into()));
        }
        let log_probs = kernels::log_softmax(scores);
        let probs = kernels::softmax(scores);
        Ok(Self {
            answers,
            probs,
            log_probs,
        })
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn prob(&self, a: &Answer) -> f64 {
        self.position(a).map_or(0.0, |i| self.probs[i])
    }

    pub fn log_prob(&self, a: &Answer) -> f64 {
        self.position(a)
            .map_or(f64::NEG_INFINITY, |i| self.log_probs[i])
    }

    pub fn position(&self, a: &Answer) -> Option<usize> {
        self.answers.iter().position(|x| x == a)
    }

    /// Highest-probability answer; ties go to the lexicographically first.
    pub fn argmax(&self) -> Answer {
        self.ranked()[0]
    }

    fn ranked(&self) -> Vec<Answer> {
        let mut idx: Vec<usize> = (0..self.answers.len()).collect();
        idx.sort_by(|&i, &j| {
            self.probs[j]
                .partial_cmp(&self.probs[i])
                .unwrap_or(Ordering::Equal)
                .then_with(|| answer_order(&self.answers[i], &self.answers[j]))
        });
        idx.into_iter().map(|i| self.answers[i]).collect()
    }
}

/// The `k` most probable spans (NULL excluded), ties broken
/// lexicographically. Returns fewer when fewer exist.
pub fn top_k_answers(dist: &SpanDistribution, k: usize) -> Vec<Span> {
    dist.ranked()
        .into_iter()
        .filter_map(|a| a.span())
        .take(k)
        .collect()
}
