use crate::autodiff::{AdamState, Tape, Var};
use crate::corpus::LabeledExample;
use crate::error::{contract, Result};
use crate::span::{Answer, AnswerExtractor, QaModel};

use super::schedule::{run_minibatches, TrainConfig, TrainLog};

/// The QA target of an example: its span, or NULL when unanswerable.
pub fn qa_target(ex: &LabeledExample) -> Answer {
    ex.answer.map_or(Answer::Null, Answer::Span)
}

/// Whether `ex` can supervise the extractor: answerable with a span no
/// longer than the extractor's cap.
pub fn extractor_can_learn(model: &AnswerExtractor, ex: &LabeledExample) -> bool {
    ex.answer
        .is_some_and(|a| a.len() <= model.config.max_answer_len && a.within(ex.context.len()))
}

/// Mean `-log p(gold span | context)` over the usable examples of `batch`,
/// plus the number skipped (unanswerable or longer than the span cap).
/// Returns `None` when nothing in the batch is usable.
pub fn loss_answer_extraction(
    model: &AnswerExtractor,
    tape: &mut Tape,
    batch: &[LabeledExample],
) -> Result<(Option<Var>, usize)> {
    let mut terms = Vec::new();
    let mut skipped = 0;
    for ex in batch {
        if !extractor_can_learn(model, ex) {
            skipped += 1;
            continue;
        }
        let gold = ex.answer.expect("checked answerable");
        terms.push(model.nll(tape, &ex.context, gold)?);
    }
    Ok((mean_of(tape, &terms)?, skipped))
}

/// Mean `-log p(target | c, q)` over `batch`, NULL targets included.
pub fn loss_qa(model: &QaModel, tape: &mut Tape, batch: &[LabeledExample]) -> Result<Var> {
    if batch.is_empty() {
        return Err(contract("empty QA batch"));
    }
    let terms = batch
        .iter()
        .map(|ex| model.nll(tape, &ex.context, &ex.question, qa_target(ex)))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_of(tape, &terms)?.expect("non-empty"))
}

fn mean_of(tape: &mut Tape, terms: &[Var]) -> Result<Option<Var>> {
    let Some((&first, rest)) = terms.split_first() else {
        return Ok(None);
    };
    let mut total = first;
    for &t in rest {
        total = tape.add(total, t)?;
    }
    Ok(Some(tape.scale(total, 1.0 / terms.len() as f64)?))
}

pub fn train_extractor(
    model: &mut AnswerExtractor,
    labeled: &[LabeledExample],
    cfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<TrainLog> {
    run_minibatches(model, labeled.len(), cfg, state, |m, tape, i| {
        let ex = &labeled[i];
        if !extractor_can_learn(m, ex) {
            return Ok(None);
        }
        m.nll(tape, &ex.context, ex.answer.expect("checked answerable")).map(Some)
    })
}

pub fn train_qa(model: &mut QaModel, labeled: &[LabeledExample], cfg: &TrainConfig, state: &mut AdamState) -> Result<TrainLog> {
    run_minibatches(model, labeled.len(), cfg, state, |m, tape, i| {
        let ex = &labeled[i];
        m.nll(tape, &ex.context, &ex.question, qa_target(ex)).map(Some)
    })
}
