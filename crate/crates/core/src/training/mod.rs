//! Losses, auxiliary roundtrip objectives, training schedules, EM/F1 and
//! learning curves.

mod beta;
mod curve;
mod losses;
mod metrics;
mod objectives;
mod schedule;

pub use beta::{
    answer_proposals, beta_expectation, beta_expectation_exhaustive, beta_triples, draw_roundtrip_samples,
    enumerate_questions, BetaConfig, BetaShape, BetaVariant, MAX_ENUMERATED_QUESTIONS,
};
pub use curve::{learning_curve, read_metrics_csv, write_metrics_csv, Arm, CurveArm, CurveConfig, MetricsRow};
pub use losses::{
    extractor_can_learn, loss_answer_extraction, loss_qa, qa_target, train_extractor, train_qa,
};
pub use metrics::{evaluate_qa, exact_match, f1, normalize_answer, EvalScores};
pub use objectives::{finetune_only, train_combined, train_staged, CombinedLog, StagedConfig, StagedReport};
pub use schedule::{accumulate, epoch_order, run_minibatches, TrainConfig, TrainLog, Trainable};
