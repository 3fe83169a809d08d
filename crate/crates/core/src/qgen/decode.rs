use std::cmp::Ordering;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::QuestionGenerator;
use crate::autodiff::kernels;
use crate::corpus::{TokenId, CLS, EOQ, PAD, SEP};
use crate::error::{contract, Error, Result};
use crate::span::Span;

/// Anything that scores the next question token given a prefix.
pub trait NextTokenModel {
    /// Longest sequence that may be generated.
    fn max_len(&self) -> usize;

    /// `log softmax` of the next-token logits after `prefix`.
    fn next_log_probs(&self, prefix: &[TokenId], answer: Span, context: &[TokenId]) -> Result<Vec<f64>>;

    /// Token that ends a sequence, if any.
    fn end_token(&self) -> Option<TokenId>;

    /// Whether decoding may emit `token`.
    fn allowed(&self, token: TokenId) -> bool;
}

impl NextTokenModel for QuestionGenerator {
    fn max_len(&self) -> usize {
        self.config.slot_len
    }

    fn next_log_probs(&self, prefix: &[TokenId], answer: Span, context: &[TokenId]) -> Result<Vec<f64>> {
        let logits = self.next_token_logits(prefix, answer, context)?;
        Ok(kernels::log_softmax(logits.data()))
    }

    fn end_token(&self) -> Option<TokenId> {
        Some(EOQ)
    }

    fn allowed(&self, token: TokenId) -> bool {
        !matches!(token, PAD | CLS | SEP)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMethod {
    Greedy,
    Beam,
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Generated tokens, including the end token when one was produced.
    pub tokens: Vec<TokenId>,
    /// Sum of the per-step log-probabilities of `tokens`.
    pub log_prob: f64,
    pub method: DecodeMethod,
}

impl DecodeResult {
    /// The question without its end token.
    pub fn question(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&EOQ) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

fn finished<M: NextTokenModel + ?Sized>(model: &M, tokens: &[TokenId]) -> bool {
    tokens.len() >= model.max_len() || (model.end_token().is_some() && tokens.last().copied() == model.end_token())
}

fn check_log_probs(lp: &[f64]) -> Result<()> {
    if lp.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("next-token log-probabilities".into()));
    }
    Ok(())
}

/// Highest-probability allowed token at each step; ties go to the lowest id.
pub fn greedy_decode<M: NextTokenModel + ?Sized>(model: &M, answer: Span, context: &[TokenId]) -> Result<DecodeResult> {
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while !finished(model, &tokens) {
        let lp = model.next_log_probs(&tokens, answer, context)?;
        check_log_probs(&lp)?;
        let best = (0..lp.len())
            .filter(|&t| model.allowed(t))
            .fold(None, |best: Option<usize>, t| match best {
                Some(b) if lp[b] >= lp[t] => Some(b),
                _ => Some(t),
            })
            .ok_or_else(|| contract("no token may be emitted"))?;
        log_prob += lp[best];
        tokens.push(best);
    }
    Ok(DecodeResult {
        tokens,
        log_prob,
        method: DecodeMethod::Greedy,
    })
}

struct Hypothesis {
    tokens: Vec<TokenId>,
    score: f64,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search over summed log-probabilities without length normalization.
/// Finished hypotheses keep competing unchanged. Results are best first.
pub fn beam_search<M: NextTokenModel + ?Sized>(
    model: &M,
    answer: Span,
    context: &[TokenId],
    width: usize,
) -> Result<Vec<DecodeResult>> {
    if width == 0 {
        return Err(contract("beam width must be at least 1"));
    }
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
    }];
    while beam.iter().any(|h| !finished(model, &h.tokens)) {
        let mut next = Vec::new();
        for h in beam {
            if finished(model, &h.tokens) {
                next.push(h);
                continue;
            }
            let lp = model.next_log_probs(&h.tokens, answer, context)?;
            check_log_probs(&lp)?;
            for (t, &v) in lp.iter().enumerate() {
                if !model.allowed(t) {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(t);
                next.push(Hypothesis {
                    tokens,
                    score: h.score + v,
                });
            }
        }
        next.sort_by(rank);
        next.truncate(width);
        if next.is_empty() {
            return Err(contract("no token may be emitted"));
        }
        beam = next;
    }
    Ok(beam
        .into_iter()
        .map(|h| DecodeResult {
            tokens: h.tokens,
            log_prob: h.score,
            method: DecodeMethod::Beam,
        })
        .collect())
}

/// Ancestral sampling from `softmax(logits / temperature)` restricted to
/// allowed tokens. The recorded log-probability is the model's own
/// (temperature 1) log-probability.
pub fn sample_decode_with<M: NextTokenModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    answer: Span,
    context: &[TokenId],
    temperature: f64,
    rng: &mut R,
) -> Result<DecodeResult> {
    if !(temperature > 0.0) {
        return Err(contract("temperature must be positive"));
    }
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while !finished(model, &tokens) {
        let lp = model.next_log_probs(&tokens, answer, context)?;
        check_log_probs(&lp)?;
        let max = (0..lp.len())
            .filter(|&t| model.allowed(t))
            .map(|t| lp[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = (0..lp.len())
            .map(|t| if model.allowed(t) { ((lp[t] - max) / temperature).exp() } else { 0.0 })
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| contract(format!("sampling weights: {e}")))?;
        let t = dist.sample(rng);
        log_prob += lp[t];
        tokens.push(t);
    }
    Ok(DecodeResult {
        tokens,
        log_prob,
        method: DecodeMethod::Sample,
    })
}

/// [`sample_decode_with`] driven by a fresh generator seeded with `seed`.
pub fn sample_decode<M: NextTokenModel + ?Sized>(
    model: &M,
    answer: Span,
    context: &[TokenId],
    temperature: f64,
    seed: u64,
) -> Result<DecodeResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_decode_with(model, answer, context, temperature, &mut rng)
}
