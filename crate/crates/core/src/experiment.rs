//! End-to-end runs on the templated toy world: train the three generator
//! models on a labeled split, generate roundtrip-filtered data from held-out
//! windows, and measure how the filter and the synthetic data behave.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamState;
use crate::corpus::{generate_toy_world, LabeledExample, ToyConfig, ToyWorld, Window};
use crate::encoder::EncoderConfig;
use crate::error::{contract, Error, Result};
use crate::pipeline::{gold_precision, run_pipeline, Label, ModelTriple, PipelineConfig, PipelineOutput, SyntheticTriple};
use crate::qgen::{finetune_qgen, pretrain_next_sentence, sentence_pairs, QGenConfig, QGenMode, QuestionGenerator};
use crate::span::{AnswerExtractor, QaModel, SpanModelConfig};
use crate::training::{
    learning_curve, train_extractor, train_qa, Arm, CurveArm, CurveConfig, MetricsRow, StagedConfig, TrainConfig,
    TrainLog,
};

/// Model sizes for one experiment; the vocabulary size is filled in from the
/// toy world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_positions: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = EncoderConfig::desk(1);
        Self {
            hidden: d.hidden,
            layers: d.layers,
            heads: d.heads,
            ff: d.ff,
            max_positions: d.max_positions,
        }
    }
}

impl ModelShape {
    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ff: self.ff,
            max_positions: self.max_positions,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub toy: ToyConfig,
    /// Documents whose questions train the generators and fine-tune QA.
    pub labeled_docs: usize,
    /// Documents whose windows feed the generation pipeline.
    pub unlabeled_docs: usize,
    pub dev_docs: usize,
    pub shape: ModelShape,
    pub span: SpanModelConfig,
    pub qgen: QGenConfig,
    pub extractor_train: TrainConfig,
    pub qgen_train: TrainConfig,
    /// Next-sentence pretraining of the sequence-to-sequence generator's
    /// decoder; unused by the encoder-only generator.
    pub qgen_pretrain: TrainConfig,
    pub qa_train: TrainConfig,
    pub pipeline: PipelineConfig,
    /// Staged schedule of the learning-curve QA models.
    pub staged: StagedConfig,
    /// Synthetic pool sizes of the learning curve; 0 is labeled-only and a
    /// size past the pool's end takes the whole pool.
    pub curve_sizes: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            toy: ToyConfig::default(),
            labeled_docs: 12,
            unlabeled_docs: 680,
            dev_docs: 20,
            shape: ModelShape::default(),
            span: SpanModelConfig {
                max_answer_len: 4,
                ..SpanModelConfig::default()
            },
            qgen: QGenConfig {
                slot_len: 12,
                ..QGenConfig::default()
            },
            extractor_train: TrainConfig::toy(8, 0),
            qgen_train: TrainConfig::toy(12, 0),
            qgen_pretrain: TrainConfig::toy(1, 0),
            qa_train: TrainConfig::toy(12, 0),
            pipeline: PipelineConfig::default(),
            staged: StagedConfig {
                pretrain: TrainConfig::toy(3, 0),
                finetune: TrainConfig::toy(12, 0),
            },
            curve_sizes: vec![0, 100, 200],
        }
    }
}

/// A toy world cut into labeled, unlabeled and dev documents.
#[derive(Clone, Debug)]
pub struct ToySplit {
    pub world: ToyWorld,
    pub labeled: Vec<LabeledExample>,
    pub unlabeled: Vec<Window>,
    pub dev: Vec<LabeledExample>,
}

pub fn split_toy_world(seed: u64, cfg: &ExperimentConfig) -> Result<ToySplit> {
    check_doc_counts(cfg)?;
    let n = cfg.labeled_docs + cfg.unlabeled_docs + cfg.dev_docs;
    split_world(generate_toy_world(seed, n, &cfg.toy)?, cfg)
}

fn check_doc_counts(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.labeled_docs == 0 || cfg.unlabeled_docs == 0 || cfg.dev_docs == 0 {
        return Err(contract("labeled, unlabeled and dev document counts must be positive"));
    }
    Ok(())
}

/// Splits an existing world by document id: labeled first, then unlabeled,
/// then dev. Documents past the three counts are ignored.
pub fn split_world(world: ToyWorld, cfg: &ExperimentConfig) -> Result<ToySplit> {
    check_doc_counts(cfg)?;
    let n = cfg.labeled_docs + cfg.unlabeled_docs + cfg.dev_docs;
    if world.docs.len() < n {
        return Err(Error::Compat(format!(
            "world has {} documents, the split needs {n}",
            world.docs.len()
        )));
    }
    let dev_from = cfg.labeled_docs + cfg.unlabeled_docs;
    let mut labeled = Vec::new();
    let mut dev = Vec::new();
    for ex in world.labeled_examples() {
        if ex.doc_id < cfg.labeled_docs {
            labeled.push(ex.example);
        } else if (dev_from..n).contains(&ex.doc_id) {
            dev.push(ex.example);
        }
    }
    let unlabeled = world
        .windows()
        .into_iter()
        .filter(|w| (cfg.labeled_docs..dev_from).contains(&w.doc_id))
        .collect();
    Ok(ToySplit {
        world,
        labeled,
        unlabeled,
        dev,
    })
}

/// The extractor, question generator and filtering QA model.
#[derive(Clone, Debug)]
pub struct Generators {
    pub extractor: AnswerExtractor,
    pub qgen: QuestionGenerator,
    pub qa: QaModel,
}

impl Generators {
    pub fn triple(&self) -> ModelTriple<'_> {
        ModelTriple {
            extractor: &self.extractor,
            qgen: &self.qgen,
            qa: &self.qa,
        }
    }
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..*cfg }
}

/// Seed offsets of the three models, so one run seed gives each its own
/// initialization.
pub const EXTRACTOR_SEED: u64 = 0;
pub const QGEN_SEED: u64 = 1;
pub const QA_SEED: u64 = 2;

pub fn train_answer_extractor(
    model: &mut AnswerExtractor,
    split: &ToySplit,
    train: &TrainConfig,
    state: &mut AdamState,
) -> Result<TrainLog> {
    train_extractor(model, &split.labeled, train, state)
}

/// Fine-tunes the question generator on the labeled split. The
/// sequence-to-sequence generator first pretrains its decoder on
/// consecutive sentence pairs of the unlabeled documents.
pub fn train_question_generator(
    model: &mut QuestionGenerator,
    split: &ToySplit,
    cfg: &ExperimentConfig,
    train: &TrainConfig,
    state: &mut AdamState,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    if model.config.mode == QGenMode::Seq2Seq && cfg.qgen_pretrain.epochs > 0 {
        let period = split.world.vocab.id(".");
        let docs: HashSet<usize> = split.unlabeled.iter().map(|w| w.doc_id).collect();
        let pairs: Vec<_> = split
            .world
            .docs
            .iter()
            .filter(|d| docs.contains(&d.doc_id))
            .flat_map(|d| sentence_pairs(&d.tokens, period))
            .collect();
        let pre = TrainConfig {
            seed: train.seed,
            ..cfg.qgen_pretrain
        };
        let mut pre_state = AdamState::new(&model.params, pre.adam());
        log = pretrain_next_sentence(model, &pairs, &pre, &mut pre_state)?;
    }
    let fine = finetune_qgen(model, &split.labeled, train, state)?;
    log.losses.extend(fine.losses);
    log.skipped += fine.skipped;
    Ok(log)
}

/// Trains all three models on the labeled split with their configured
/// schedules.
pub fn train_generators(split: &ToySplit, seed: u64, cfg: &ExperimentConfig) -> Result<Generators> {
    let enc = cfg.shape.encoder(split.world.vocab.len());

    let mut extractor = AnswerExtractor::new(enc, cfg.span, seed.wrapping_add(EXTRACTOR_SEED))?;
    let t = seeded(&cfg.extractor_train, seed);
    let mut state = AdamState::new(&extractor.params, t.adam());
    train_answer_extractor(&mut extractor, split, &t, &mut state)?;

    let mut qgen = QuestionGenerator::new(enc, cfg.qgen, seed.wrapping_add(QGEN_SEED))?;
    let t = seeded(&cfg.qgen_train, seed);
    let mut state = AdamState::new(&qgen.params, t.adam());
    train_question_generator(&mut qgen, split, cfg, &t, &mut state)?;

    let mut qa = QaModel::new(enc, seed.wrapping_add(QA_SEED))?;
    let t = seeded(&cfg.qa_train, seed);
    let mut state = AdamState::new(&qa.params, t.adam());
    train_qa(&mut qa, &split.labeled, &t, &mut state)?;

    Ok(Generators { extractor, qgen, qa })
}

/// Gold precision of the kept and discarded positives of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub discarded: usize,
    /// `None` when the partition is empty.
    pub kept_precision: Option<f64>,
    pub discarded_precision: Option<f64>,
}

impl FilterReport {
    /// Whether the filter kept a strictly more accurate subset.
    pub fn filter_helps(&self) -> bool {
        matches!((self.kept_precision, self.discarded_precision), (Some(k), Some(d)) if k > d)
    }
}

/// Scores each positive triple against the toy world's ground truth: a
/// triple is correct when its question is a templated question about its
/// window whose unique answer is the sampled span.
pub fn filter_report(world: &ToyWorld, windows: &[Window], out: &PipelineOutput) -> FilterReport {
    let by_id: HashMap<(usize, usize), &Window> = windows.iter().map(|w| ((w.doc_id, w.window_id), w)).collect();
    let gold = |t: &SyntheticTriple| {
        by_id
            .get(&(t.doc_id, t.window_id))
            .and_then(|w| world.gold_answer(w, &t.question_tokens))
    };
    FilterReport {
        kept: out.kept().count(),
        discarded: out.discarded().count(),
        kept_precision: gold_precision(out.kept(), gold),
        discarded_precision: gold_precision(out.discarded(), gold),
    }
}

/// Roundtrip-filtered and unfiltered synthetic pools from one pipeline run.
/// Negatives go to both arms.
pub fn synthetic_arms(out: &PipelineOutput) -> Vec<CurveArm> {
    let positives = |keep_all: bool| -> Vec<LabeledExample> {
        out.triples
            .iter()
            .filter(|t| !t.question_tokens.is_empty())
            .filter(|t| t.label == Label::Negative || t.kept || keep_all)
            .map(SyntheticTriple::to_example)
            .collect()
    };
    vec![
        CurveArm {
            arm: Arm::Rt,
            pool: positives(false),
        },
        CurveArm {
            arm: Arm::NoRt,
            pool: positives(true),
        },
    ]
}

/// Everything one seed of the filter experiment produces.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub split: ToySplit,
    pub generators: Generators,
    pub output: PipelineOutput,
    pub report: FilterReport,
}

/// Split, train, generate and score for one seed.
pub fn run_seed(seed: u64, cfg: &ExperimentConfig) -> Result<SeedRun> {
    let split = split_toy_world(seed, cfg)?;
    let generators = train_generators(&split, seed, cfg)?;
    let pipeline = PipelineConfig {
        seed,
        ..cfg.pipeline.clone()
    };
    let output = run_pipeline(&split.unlabeled, generators.triple(), &pipeline)?;
    let report = filter_report(&split.world, &split.unlabeled, &output);
    Ok(SeedRun {
        split,
        generators,
        output,
        report,
    })
}

/// Learning curve of one seed's synthetic arms over `cfg.curve_sizes`,
/// fine-tuning on the full labeled split.
pub fn run_curve(run: &SeedRun, seed: u64, cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let curve = CurveConfig {
        sizes: cfg.curve_sizes.clone(),
        seeds: vec![seed],
        encoder: cfg.shape.encoder(run.split.world.vocab.len()),
        staged: cfg.staged,
        beta_probe: 64,
        wall_clock: false,
    };
    learning_curve(&synthetic_arms(&run.output), &run.split.labeled, &run.split.dev, &run.split.world.vocab, &curve)
}
