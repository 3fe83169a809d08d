use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledExample, TokenId};
use crate::error::{contract, Result};
use crate::qgen::{sample_decode_with, NextTokenModel};
use crate::span::{top_k_answers, Answer, AnswerExtractor, QaModel, Span};

use super::losses::qa_target;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaVariant {
    /// Expected roundtrip log-likelihood under the extractor and generator.
    Expectation,
    /// Mean over a fixed set of synthetic triples.
    Triples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaShape {
    /// `f(z) = log z`.
    Log,
    /// `f(z) = 1` if `z >= margin`, else 0. Not differentiable.
    Margin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaConfig {
    pub variant: BetaVariant,
    pub shape: BetaShape,
    /// Threshold of the margin shape.
    pub margin: f64,
    /// Weight of the auxiliary term in the combined objective.
    pub lambda: f64,
    /// Constraint level, reported next to the achieved value, never enforced.
    pub gamma: f64,
    pub samples_per_context: usize,
    /// Answers are drawn from this many most probable spans.
    pub k_top: usize,
    pub temperature: f64,
}

impl Default for BetaConfig {
    fn default() -> Self {
        Self {
            variant: BetaVariant::Triples,
            shape: BetaShape::Log,
            margin: 0.5,
            lambda: 0.1,
            gamma: 0.0,
            samples_per_context: 1,
            k_top: 10,
            temperature: 1.0,
        }
    }
}

impl BetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(contract("lambda must be non-negative"));
        }
        if self.shape == BetaShape::Margin && !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(contract("margin must lie in (0, 1)"));
        }
        if self.samples_per_context == 0 || self.k_top == 0 {
            return Err(contract("samples per context and k_top must be at least 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(contract("temperature must be positive"));
        }
        Ok(())
    }

    fn apply(&self, p: f64, log_p: f64) -> f64 {
        match self.shape {
            BetaShape::Log => log_p,
            BetaShape::Margin => f64::from(u8::from(p >= self.margin)),
        }
    }
}

/// `(1/m) Σ_j f(p(a_j | q_j, c_j))` over synthetic triples.
pub fn beta_triples(model: &QaModel, triples: &[LabeledExample], cfg: &BetaConfig) -> Result<f64> {
    if triples.is_empty() {
        return Err(contract("beta over an empty triple set"));
    }
    cfg.validate()?;
    let mut total = 0.0;
    for t in triples {
        let d = model.qa_distribution(&t.context, &t.question)?;
        let a = qa_target(t);
        total += cfg.apply(d.prob(&a), d.log_prob(&a));
    }
    Ok(total / triples.len() as f64)
}

/// The `k_top` most probable extractor spans with their probabilities
/// renormalized to sum to one.
pub fn answer_proposals(extractor: &AnswerExtractor, context: &[TokenId], k_top: usize) -> Result<Vec<(Span, f64)>> {
    let d = extractor.answer_distribution(context)?;
    let top = top_k_answers(&d, k_top);
    let z: f64 = top.iter().map(|&s| d.prob(&Answer::Span(s))).sum();
    Ok(top.into_iter().map(|s| (s, d.prob(&Answer::Span(s)) / z)).collect())
}

/// One `(a, q)` draw per requested sample: `a` from the renormalized top-k
/// extractor distribution, `q` by ancestral sampling from the generator.
pub fn draw_roundtrip_samples<Q: NextTokenModel + ?Sized, R: Rng + ?Sized>(
    contexts: &[Vec<TokenId>],
    extractor: &AnswerExtractor,
    qgen: &Q,
    cfg: &BetaConfig,
    rng: &mut R,
) -> Result<Vec<LabeledExample>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(contexts.len() * cfg.samples_per_context);
    for c in contexts {
        let proposals = answer_proposals(extractor, c, cfg.k_top)?;
        for _ in 0..cfg.samples_per_context {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = proposals[proposals.len() - 1].0;
            for &(s, p) in &proposals {
                acc += p;
                if u < acc {
                    pick = s;
                    break;
                }
            }
            let q = sample_decode_with(qgen, pick, c, cfg.temperature, rng)?;
            out.push(LabeledExample::with_answer(c.clone(), q.question().to_vec(), pick));
        }
    }
    Ok(out)
}

/// Monte Carlo estimate of `(1/m) Σ_j Σ_{a,q} p(a|c_j) p(q|a,c_j) f(p(a|q,c_j))`
/// with `samples_per_context` draws per context.
pub fn beta_expectation<Q: NextTokenModel + ?Sized, R: Rng + ?Sized>(
    contexts: &[Vec<TokenId>],
    extractor: &AnswerExtractor,
    qgen: &Q,
    qa: &QaModel,
    cfg: &BetaConfig,
    rng: &mut R,
) -> Result<f64> {
    if contexts.is_empty() {
        return Err(contract("beta over no contexts"));
    }
    let samples = draw_roundtrip_samples(contexts, extractor, qgen, cfg, rng)?;
    beta_triples(qa, &samples, cfg)
}

/// Largest number of questions [`beta_expectation_exhaustive`] enumerates
/// per answer.
pub const MAX_ENUMERATED_QUESTIONS: usize = 100_000;

/// Every question the generator can emit for `answer`, with its probability
/// under the decoding distribution (model probabilities renormalized over
/// emittable tokens).
pub fn enumerate_questions<Q: NextTokenModel + ?Sized>(
    qgen: &Q,
    answer: Span,
    context: &[TokenId],
) -> Result<Vec<(Vec<TokenId>, f64)>> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<TokenId>::new(), 1.0f64)];
    while let Some((prefix, p)) = stack.pop() {
        let done = prefix.len() >= qgen.max_len()
            || (qgen.end_token().is_some() && prefix.last().copied() == qgen.end_token());
        if done {
            out.push((prefix, p));
            if out.len() > MAX_ENUMERATED_QUESTIONS {
                return Err(contract("question space too large to enumerate"));
            }
            continue;
        }
        let lp = qgen.next_log_probs(&prefix, answer, context)?;
        let z: f64 = (0..lp.len()).filter(|&t| qgen.allowed(t)).map(|t| lp[t].exp()).sum();
        for t in (0..lp.len()).rev().filter(|&t| qgen.allowed(t)) {
            let mut next = prefix.clone();
            next.push(t);
            stack.push((next, p * lp[t].exp() / z));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// The double sum of [`beta_expectation`] evaluated exactly by enumerating
/// every proposed answer and every question.
pub fn beta_expectation_exhaustive<Q: NextTokenModel + ?Sized>(
    contexts: &[Vec<TokenId>],
    extractor: &AnswerExtractor,
    qgen: &Q,
    qa: &QaModel,
    cfg: &BetaConfig,
) -> Result<f64> {
    if contexts.is_empty() {
        return Err(contract("beta over no contexts"));
    }
    cfg.validate()?;
    let mut total = 0.0;
    for c in contexts {
        for (a, pa) in answer_proposals(extractor, c, cfg.k_top)? {
            for (tokens, pq) in enumerate_questions(qgen, a, c)? {
                let q = match (tokens.last(), qgen.end_token()) {
                    (Some(&t), Some(e)) if t == e => &tokens[..tokens.len() - 1],
                    _ => &tokens[..],
                };
                let d = qa.qa_distribution(c, q)?;
                let ans = Answer::Span(a);
                total += pa * pq * cfg.apply(d.prob(&ans), d.log_prob(&ans));
            }
        }
    }
    Ok(total / contexts.len() as f64)
}
