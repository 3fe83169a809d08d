//! Span enumeration, span distributions, and the two extractive models:
//! the question-unconditional extractor with joint start/end scoring and the
//! question-conditional answerer with independent start/end scoring.

mod dist;
mod heads;
mod models;

pub use dist::{enumerate_spans, top_k_answers, Answer, Span, SpanDistribution};
pub use heads::{score_independent, score_joint, IndependentHead, JointHead, QaHead};
pub use models::{
    AnswerExtractor, ExtractorScorer, QaModel, SpanModelConfig, SpanScoring, EXTRACTOR_KIND, QA_KIND,
};
