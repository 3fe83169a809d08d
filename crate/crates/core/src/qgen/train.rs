use super::model::QuestionGenerator;
use crate::autodiff::AdamState;
use crate::corpus::{LabeledExample, TokenId};
use crate::error::{contract, Result};
use crate::training::{run_minibatches, TrainConfig, TrainLog};

/// Consecutive `(sentence, next sentence)` pairs of a document split after
/// every `boundary` token.
pub fn sentence_pairs(doc: &[TokenId], boundary: TokenId) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    let sentences: Vec<Vec<TokenId>> = doc
        .split_inclusive(|&t| t == boundary)
        .filter(|s| !s.is_empty())
        .map(<[TokenId]>::to_vec)
        .collect();
    sentences.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
}

/// Teacher-forced next-sentence training of the decoder. The encoder stack
/// stays frozen; the shared token embedding, which is also the decoder's
/// input and output matrix, is trained.
pub fn pretrain_next_sentence(
    model: &mut QuestionGenerator,
    pairs: &[(Vec<TokenId>, Vec<TokenId>)],
    cfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<TrainLog> {
    if pairs.is_empty() {
        return Err(contract("no sentence pairs to pretrain on"));
    }
    if model.decoder.is_none() {
        return Err(contract("next-sentence pretraining needs the sequence-to-sequence mode"));
    }
    model.params.set_trainable("encoder.", false);
    model.params.set_trainable("encoder.token_embedding", true);
    let log = run_minibatches(model, pairs.len(), cfg, state, |m, tape, i| {
        let (s, n) = &pairs[i];
        m.next_sentence_nll(tape, s, n).map(Some)
    });
    model.params.set_trainable("encoder.", true);
    log
}

/// Teacher-forced fine-tuning on `(context, answer) → question`.
/// Unanswerable examples are skipped and counted in the log.
pub fn finetune_qgen(
    model: &mut QuestionGenerator,
    labeled: &[LabeledExample],
    cfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<TrainLog> {
    run_minibatches(model, labeled.len(), cfg, state, |m, tape, i| {
        let ex = &labeled[i];
        match ex.answer {
            Some(a) => m.nll(tape, &ex.question, a, &ex.context).map(Some),
            None => Ok(None),
        }
    })
}
