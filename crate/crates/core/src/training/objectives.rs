use serde::{Deserialize, Serialize};

use crate::autodiff::AdamState;
use crate::corpus::{LabeledExample, Vocabulary};
use crate::error::{contract, Result};
use crate::span::QaModel;

use super::beta::{beta_triples, BetaConfig, BetaShape};
use super::losses::{qa_target, train_qa};
use super::metrics::{evaluate_qa, EvalScores};
use super::schedule::{accumulate, epoch_order, TrainConfig, TrainLog};

/// Per-step values of the supervised loss and the auxiliary term.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CombinedLog {
    /// Mean `-log p` over the labeled batch.
    pub losses: Vec<f64>,
    /// Mean `log p` over the synthetic batch (the log-shape β estimate).
    pub betas: Vec<f64>,
}

/// Gradient ascent on `L + λ·β`: each step pairs a labeled batch with a
/// synthetic batch of the same size, cycling through the synthetic set in
/// seeded shuffled order. Only the log shape is differentiable.
pub fn train_combined(
    model: &mut QaModel,
    labeled: &[LabeledExample],
    synthetic: &[LabeledExample],
    train: &TrainConfig,
    beta: &BetaConfig,
    state: &mut AdamState,
) -> Result<CombinedLog> {
    train.validate()?;
    beta.validate()?;
    if beta.shape == BetaShape::Margin {
        return Err(contract(
            "the margin shape is not differentiable; use it to evaluate beta, not to train",
        ));
    }
    if synthetic.is_empty() {
        return Err(contract("combined training needs synthetic triples"));
    }
    let mut log = CombinedLog::default();
    let mut syn_epoch = 0;
    let mut syn_order = epoch_order(synthetic.len(), train.seed ^ SYNTHETIC_STREAM, syn_epoch);
    let mut syn_pos = 0;
    for epoch in 0..train.epochs {
        let order = epoch_order(labeled.len(), train.seed, epoch);
        for batch in order.chunks(train.batch_size) {
            model.params.zero_grad();
            let mut total = 0.0;
            for &i in batch {
                let ex = &labeled[i];
                let mut tape = train.tape(0, epoch, i);
                let l = model.nll(&mut tape, &ex.context, &ex.question, qa_target(ex))?;
                total += accumulate(&tape, l, &mut model.params, 1.0)?;
            }
            model.params.scale_grads(1.0 / batch.len() as f64);

            let mut beta_total = 0.0;
            let weight = beta.lambda / batch.len() as f64;
            for _ in 0..batch.len() {
                if syn_pos == syn_order.len() {
                    syn_epoch += 1;
                    syn_order = epoch_order(synthetic.len(), train.seed ^ SYNTHETIC_STREAM, syn_epoch);
                    syn_pos = 0;
                }
                let ex = &synthetic[syn_order[syn_pos]];
                let mut tape = train.tape(SYNTHETIC_STREAM, syn_epoch, syn_order[syn_pos]);
                syn_pos += 1;
                let l = model.nll(&mut tape, &ex.context, &ex.question, qa_target(ex))?;
                beta_total -= accumulate(&tape, l, &mut model.params, weight)?;
            }
            state.step(&mut model.params)?;
            log.losses.push(total / batch.len() as f64);
            log.betas.push(beta_total / batch.len() as f64);
        }
    }
    Ok(log)
}

const SYNTHETIC_STREAM: u64 = 0x5EED_0F_5E7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedConfig {
    /// Schedule of the auxiliary phase on synthetic data.
    pub pretrain: TrainConfig,
    /// Schedule of the supervised phase on labeled data.
    pub finetune: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedReport {
    /// Log-shape β on the synthetic set before training.
    pub beta_init: f64,
    pub beta_after_pretrain: f64,
    pub beta_final: f64,
    pub dev_after_pretrain: EvalScores,
    pub dev_final: EvalScores,
    pub pretrain_losses: Vec<f64>,
    pub finetune_losses: Vec<f64>,
}

/// Maximizes log-shape β on `synthetic` (phase 1), then minimizes the
/// supervised loss on `labeled` (phase 2). Each phase has a fresh optimizer.
/// With no labeled data the phase-1 parameters are returned unchanged.
pub fn train_staged(
    model: &mut QaModel,
    synthetic: &[LabeledExample],
    labeled: &[LabeledExample],
    dev: &[LabeledExample],
    vocab: &Vocabulary,
    cfg: &StagedConfig,
) -> Result<StagedReport> {
    if synthetic.is_empty() {
        return Err(contract("staged training needs synthetic triples"));
    }
    let log_beta = BetaConfig::default();
    let beta_init = beta_triples(model, synthetic, &log_beta)?;
    let mut state = AdamState::new(&model.params, cfg.pretrain.adam());
    let pre = train_qa(model, synthetic, &cfg.pretrain, &mut state)?;
    let beta_after_pretrain = beta_triples(model, synthetic, &log_beta)?;
    let dev_after_pretrain = evaluate_qa(model, dev, vocab)?;
    let fine = finetune_only(model, labeled, &cfg.finetune)?;
    Ok(StagedReport {
        beta_init,
        beta_after_pretrain,
        beta_final: beta_triples(model, synthetic, &log_beta)?,
        dev_after_pretrain,
        dev_final: evaluate_qa(model, dev, vocab)?,
        pretrain_losses: pre.losses,
        finetune_losses: fine.losses,
    })
}

/// Supervised QA training with a fresh optimizer; a no-op on empty data.
pub fn finetune_only(model: &mut QaModel, labeled: &[LabeledExample], cfg: &TrainConfig) -> Result<TrainLog> {
    if labeled.is_empty() {
        return Ok(TrainLog::default());
    }
    let mut state = AdamState::new(&model.params, cfg.adam());
    train_qa(model, labeled, cfg, &mut state)
}
