use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{enumerate_spans, Answer, Span, SpanDistribution};
use super::heads::{IndependentHead, JointHead, QaHead};
use crate::autodiff::{AdamState, ParamStore, Tape, Var};
use crate::corpus::TokenId;
use crate::encoder::{pack_context, pack_question_context, Checkpoint, Encoder, EncoderConfig};
use crate::error::{contract, Result};
use crate::training::Trainable;

pub const EXTRACTOR_KIND: &str = "answer-extraction";
pub const QA_KIND: &str = "qa";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanScoring {
    Joint,
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanModelConfig {
    /// Longest answer the extractor may propose, in tokens.
    pub max_answer_len: usize,
    pub scoring: SpanScoring,
}

impl Default for SpanModelConfig {
    fn default() -> Self {
        Self {
            max_answer_len: 32,
            scoring: SpanScoring::Joint,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ExtractorScorer {
    Joint(JointHead),
    Independent(IndependentHead),
}

/// Rows of `hidden` from `start` to the end.
fn tail_rows(tape: &mut Tape, hidden: Var, start: usize) -> Result<Var> {
    let rows = tape.shape(hidden)[0];
    tape.slice(hidden, 0, start, rows - start)
}

/// Question-unconditional answer extractor `p(a|c)`.
#[derive(Clone, Debug)]
pub struct AnswerExtractor {
    pub params: ParamStore,
    pub encoder: Encoder,
    pub scorer: ExtractorScorer,
    pub config: SpanModelConfig,
}

impl Trainable for AnswerExtractor {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

impl AnswerExtractor {
    pub fn new(encoder: EncoderConfig, config: SpanModelConfig, seed: u64) -> Result<Self> {
        if config.max_answer_len == 0 {
            return Err(contract("max answer length must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let enc = Encoder::new(encoder, &mut params, "encoder", &mut rng)?;
        let scorer = match config.scoring {
            SpanScoring::Joint => {
                ExtractorScorer::Joint(JointHead::new(&mut params, "span", encoder.hidden, encoder.hidden, &mut rng))
            }
            SpanScoring::Independent => {
                ExtractorScorer::Independent(IndependentHead::new(&mut params, "span", encoder.hidden, &mut rng))
            }
        };
        Ok(Self {
            params,
            encoder: enc,
            scorer,
            config,
        })
    }

    /// Encoder representations of the context tokens only, `[n×h]`.
    pub fn context_hidden(&self, tape: &mut Tape, context: &[TokenId]) -> Result<Var> {
        let input = pack_context(context, None)?;
        let h = self.encoder.encode(tape, &self.params, &input)?;
        tail_rows(tape, h, input.context_start)
    }

    /// Candidate spans (length-capped) and their scores as an `[N]` vector.
    pub fn span_scores(&self, tape: &mut Tape, context: &[TokenId]) -> Result<(Vec<Span>, Var)> {
        let spans = enumerate_spans(context.len(), self.config.max_answer_len);
        let hidden = self.context_hidden(tape, context)?;
        let scores = match &self.scorer {
            ExtractorScorer::Joint(h) => h.score_spans(tape, &self.params, hidden, &spans)?,
            ExtractorScorer::Independent(h) => h.score_spans(tape, &self.params, hidden, &spans)?,
        };
        Ok((spans, scores))
    }

    pub fn answer_distribution(&self, context: &[TokenId]) -> Result<SpanDistribution> {
        let mut tape = Tape::inference();
        let (spans, scores) = self.span_scores(&mut tape, context)?;
        SpanDistribution::from_scores(spans.into_iter().map(Answer::Span).collect(), tape.data(scores))
    }

    /// `-log p(gold | context)`. Gold spans longer than the cap are a
    /// contract error; callers skip and count them.
    pub fn nll(&self, tape: &mut Tape, context: &[TokenId], gold: Span) -> Result<Var> {
        if gold.len() > self.config.max_answer_len || !gold.within(context.len()) {
            return Err(contract(format!("gold span {gold:?} not a candidate")));
        }
        let (spans, scores) = self.span_scores(tape, context)?;
        let target = spans.binary_search(&gold).map_err(|_| contract("gold span not enumerated"))?;
        tape.cross_entropy(scores, target)
    }

    pub fn checkpoint(&self, step: u64, optimizer: Option<&AdamState>) -> Result<Checkpoint> {
        Ok(Checkpoint::capture(
            EXTRACTOR_KIND,
            self.encoder.config,
            serde_json::to_value(self.config)?,
            &self.params,
            step,
            optimizer,
        ))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(EXTRACTOR_KIND)?;
        let config: SpanModelConfig = serde_json::from_value(ckpt.settings.clone())?;
        let mut model = Self::new(ckpt.encoder, config, 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }
}

/// Question-conditional answerer `p(a|c,q)` over every span plus NULL.
#[derive(Clone, Debug)]
pub struct QaModel {
    pub params: ParamStore,
    pub encoder: Encoder,
    pub head: QaHead,
}

impl Trainable for QaModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

impl QaModel {
    pub fn new(encoder: EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let enc = Encoder::new(encoder, &mut params, "encoder", &mut rng)?;
        let head = QaHead::new(&mut params, "qa", encoder.hidden, &mut rng);
        Ok(Self {
            params,
            encoder: enc,
            head,
        })
    }

    /// Representations of the context rows of `[CLS] q [SEP] c`.
    pub fn context_hidden(&self, tape: &mut Tape, context: &[TokenId], question: &[TokenId]) -> Result<Var> {
        let input = pack_question_context(question, context)?;
        let h = self.encoder.encode(tape, &self.params, &input)?;
        tail_rows(tape, h, input.context_start)
    }

    /// Every span `s <= e` in lexicographic order, then NULL, with scores as
    /// an `[N+1]` vector.
    pub fn answer_scores(
        &self,
        tape: &mut Tape,
        context: &[TokenId],
        question: &[TokenId],
    ) -> Result<(Vec<Answer>, Var)> {
        let spans = enumerate_spans(context.len(), context.len());
        let hidden = self.context_hidden(tape, context, question)?;
        let scores = self.head.score_answers(tape, &self.params, hidden, &spans)?;
        let mut answers: Vec<Answer> = spans.into_iter().map(Answer::Span).collect();
        answers.push(Answer::Null);
        Ok((answers, scores))
    }

    pub fn qa_distribution(&self, context: &[TokenId], question: &[TokenId]) -> Result<SpanDistribution> {
        let mut tape = Tape::inference();
        let (answers, scores) = self.answer_scores(&mut tape, context, question)?;
        SpanDistribution::from_scores(answers, tape.data(scores))
    }

    /// Most probable answer; NULL means predicted unanswerable.
    pub fn qa_predict(&self, context: &[TokenId], question: &[TokenId]) -> Result<Answer> {
        Ok(self.qa_distribution(context, question)?.argmax())
    }

    /// `-log p(target | c, q)` as a scalar on `tape`.
    pub fn nll(&self, tape: &mut Tape, context: &[TokenId], question: &[TokenId], target: Answer) -> Result<Var> {
        let (answers, scores) = self.answer_scores(tape, context, question)?;
        let index = match target {
            Answer::Null => answers.len() - 1,
            Answer::Span(s) => {
                if s.start > s.end || !s.within(context.len()) {
                    return Err(contract(format!("target {s:?} outside context")));
                }
                answers[..answers.len() - 1]
                    .binary_search_by(|a| a.span().expect("spans precede NULL").cmp(&s))
                    .map_err(|_| contract("target span not enumerated"))?
            }
        };
        tape.cross_entropy(scores, index)
    }

    pub fn checkpoint(&self, step: u64, optimizer: Option<&AdamState>) -> Result<Checkpoint> {
        Ok(Checkpoint::capture(
            QA_KIND,
            self.encoder.config,
            serde_json::Value::Null,
            &self.params,
            step,
            optimizer,
        ))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(QA_KIND)?;
        let mut model = Self::new(ckpt.encoder, 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }
}
