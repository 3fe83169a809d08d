use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rtqa::autodiff::AdamState;
use rtqa::corpus::{generate_toy_world, ToyWorld, Vocabulary};
use rtqa::encoder::Checkpoint;
use rtqa::experiment::{
    filter_report, run_seed, split_world, synthetic_arms, train_answer_extractor, train_question_generator, ToySplit,
    EXTRACTOR_SEED, QA_SEED, QGEN_SEED,
};
use rtqa::pipeline::{read_triples, run_pipeline, summary_path, write_output, ModelTriple, PipelineConfig, PipelineOutput};
use rtqa::qgen::QuestionGenerator;
use rtqa::span::{AnswerExtractor, QaModel};
use rtqa::training::{
    beta_triples, evaluate_qa, learning_curve, train_combined, train_qa, train_staged, write_metrics_csv, CurveArm, CurveConfig, MetricsRow, TrainConfig, TrainLog,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::Files;
use crate::{CliError, Task};

const CORPUS: &str = "corpus.jsonl";
const VOCAB: &str = "vocab.txt";
const SYNTHETIC: &str = "synthetic.jsonl";

fn ckpt_name(task: Task) -> String {
    format!("{}.ckpt.json", task.name())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(rtqa::Error::from)?;
    fs::write(path, text + "\n").map_err(rtqa::Error::from)?;
    Ok(())
}

fn require(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("missing input {}", path.display())));
    }
    Ok(())
}

/// Loads a toy world directory and cuts it into the configured split.
fn load_split(cfg: &RunConfig, data: &Path, files: &mut Files) -> Result<ToySplit, CliError> {
    let (corpus, vocab) = (data.join(CORPUS), data.join(VOCAB));
    require(&corpus)?;
    require(&vocab)?;
    let world = ToyWorld::load_jsonl(&corpus, Vocabulary::load(&vocab)?, cfg.experiment.toy.clone())?;
    files.input(corpus);
    files.input(vocab);
    Ok(split_world(world, &cfg.experiment)?)
}

fn check_vocab(ckpt: &Checkpoint, vocab: &Vocabulary, path: &Path) -> Result<(), CliError> {
    if ckpt.encoder.vocab_size != vocab.len() {
        return Err(rtqa::Error::Compat(format!(
            "{} was trained with a vocabulary of {} tokens, the data has {}",
            path.display(),
            ckpt.encoder.vocab_size,
            vocab.len()
        ))
        .into());
    }
    Ok(())
}

fn load_ckpt(path: &Path, vocab: &Vocabulary, files: &mut Files) -> Result<Checkpoint, CliError> {
    require(path)?;
    let ckpt = Checkpoint::load(path)?;
    check_vocab(&ckpt, vocab, path)?;
    files.input(path);
    Ok(ckpt)
}

pub fn toyworld(cfg: &RunConfig, out: &Path) -> Result<Files, CliError> {
    let e = &cfg.experiment;
    let world = generate_toy_world(cfg.seed, e.labeled_docs + e.unlabeled_docs + e.dev_docs, &e.toy)?;
    let mut files = Files::default();
    let (corpus, vocab) = (out.join(CORPUS), out.join(VOCAB));
    world.save_jsonl(&corpus)?;
    world.vocab.save(&vocab)?;
    println!("{} documents, {} tokens in vocabulary", world.docs.len(), world.vocab.len());
    files.output(corpus);
    files.output(vocab);
    Ok(files)
}

fn write_losses(path: &Path, first_step: u64, log: &TrainLog) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(rtqa::Error::from)?;
    w.write_record(["step", "loss"]).map_err(rtqa::Error::from)?;
    for (i, l) in log.losses.iter().enumerate() {
        w.write_record([(first_step + i as u64 + 1).to_string(), l.to_string()])
            .map_err(rtqa::Error::from)?;
    }
    w.flush().map_err(rtqa::Error::from)?;
    Ok(())
}

/// Restores the optimizer from a checkpoint, or starts a fresh one. The
/// schedule's learning rate always comes from the current configuration.
fn optimizer(ckpt: Option<&Checkpoint>, store: &rtqa::autodiff::ParamStore, t: &TrainConfig) -> AdamState {
    match ckpt.and_then(|c| c.optimizer.clone()) {
        Some(mut s) => {
            s.config = t.adam();
            s
        }
        None => AdamState::new(store, t.adam()),
    }
}

pub fn train(cfg: &RunConfig, out: &Path, task: Task, data: &Path, resume: Option<&Path>) -> Result<Files, CliError> {
    let mut files = Files::default();
    let split = load_split(cfg, data, &mut files)?;
    let vocab = &split.world.vocab;
    let ckpt = resume.map(|p| load_ckpt(p, vocab, &mut files)).transpose()?;
    let enc = cfg.experiment.shape.encoder(vocab.len());
    let start = ckpt.as_ref().map_or(0, |c| c.step);
    let e = &cfg.experiment;
    // A resumed run reshuffles from where the previous one stopped.
    let seeded = |t: &TrainConfig| TrainConfig {
        seed: cfg.seed.wrapping_add(start),
        ..*t
    };

    let (log, saved) = match task {
        Task::AnswerExtraction => {
            let mut m = match &ckpt {
                Some(c) => AnswerExtractor::from_checkpoint(c)?,
                None => AnswerExtractor::new(enc, e.span, cfg.seed.wrapping_add(EXTRACTOR_SEED))?,
            };
            let t = seeded(&e.extractor_train);
            let mut state = optimizer(ckpt.as_ref(), &m.params, &t);
            let log = train_answer_extractor(&mut m, &split, &t, &mut state)?;
            (log, m.checkpoint(state.step, Some(&state))?)
        }
        Task::Qgen => {
            let mut m = match &ckpt {
                Some(c) => QuestionGenerator::from_checkpoint(c)?,
                None => QuestionGenerator::new(enc, e.qgen, cfg.seed.wrapping_add(QGEN_SEED))?,
            };
            let t = seeded(&e.qgen_train);
            let mut state = optimizer(ckpt.as_ref(), &m.params, &t);
            // Decoder pretraining belongs to the first run only.
            let mut exp = e.clone();
            if ckpt.is_some() {
                exp.qgen_pretrain.epochs = 0;
            }
            let log = train_question_generator(&mut m, &split, &exp, &t, &mut state)?;
            (log, m.checkpoint(state.step, Some(&state))?)
        }
        Task::Qa => {
            let mut m = match &ckpt {
                Some(c) => QaModel::from_checkpoint(c)?,
                None => QaModel::new(enc, cfg.seed.wrapping_add(QA_SEED))?,
            };
            let t = seeded(&e.qa_train);
            let mut state = optimizer(ckpt.as_ref(), &m.params, &t);
            let log = train_qa(&mut m, &split.labeled, &t, &mut state)?;
            (log, m.checkpoint(state.step, Some(&state))?)
        }
    };
    let ckpt_path = out.join(ckpt_name(task));
    let losses_path = out.join(format!("{}.losses.csv", task.name()));
    saved.save(&ckpt_path)?;
    write_losses(&losses_path, start, &log)?;
    println!(
        "{}: {} steps (total {}), final loss {:.4}, {} skipped",
        task.name(),
        log.losses.len(),
        saved.step,
        log.losses.last().copied().unwrap_or(f64::NAN),
        log.skipped
    );
    files.output(ckpt_path);
    files.output(losses_path);
    Ok(files)
}

pub fn synth(cfg: &RunConfig, out: &Path, models: &Path, data: &Path) -> Result<Files, CliError> {
    let mut files = Files::default();
    let split = load_split(cfg, data, &mut files)?;
    let vocab = &split.world.vocab;
    let load = |task, files: &mut Files| load_ckpt(&models.join(ckpt_name(task)), vocab, files);
    let extractor = AnswerExtractor::from_checkpoint(&load(Task::AnswerExtraction, &mut files)?)?;
    let qgen = QuestionGenerator::from_checkpoint(&load(Task::Qgen, &mut files)?)?;
    let qa = QaModel::from_checkpoint(&load(Task::Qa, &mut files)?)?;

    let pipeline = PipelineConfig {
        seed: cfg.seed,
        ..cfg.experiment.pipeline.clone()
    };
    let models = ModelTriple {
        extractor: &extractor,
        qgen: &qgen,
        qa: &qa,
    };
    let output = run_pipeline(&split.unlabeled, models, &pipeline)?;
    let report = filter_report(&split.world, &split.unlabeled, &output);

    let data_path = out.join(SYNTHETIC);
    write_output(&output, &data_path)?;
    let filter_path = out.join("filter.json");
    write_json(&filter_path, &report)?;
    let s = &output.summary;
    println!(
        "attempted {}, kept {}, discarded {}, negatives {}, skipped {}",
        s.attempted, s.kept, s.discarded, s.negatives, s.skipped
    );
    files.output(summary_path(&data_path));
    files.output(data_path);
    files.output(filter_path);
    Ok(files)
}

/// The synthetic pools of a generated dataset, restricted to the
/// configured arms.
fn load_arms(cfg: &RunConfig, path: &Path, files: &mut Files) -> Result<Vec<CurveArm>, CliError> {
    require(path)?;
    let output = PipelineOutput {
        triples: read_triples(path)?,
        summary: Default::default(),
    };
    files.input(path);
    Ok(synthetic_arms(&output)
        .into_iter()
        .filter(|a| cfg.arms.contains(&a.arm))
        .collect())
}

#[derive(Serialize)]
struct TrainingReport {
    arm: String,
    objective: &'static str,
    synthetic: usize,
    em: f64,
    f1: f64,
    beta: f64,
    lambda: f64,
    /// Constraint level, reported next to the achieved β, not enforced.
    gamma: f64,
}

pub fn pretrain_finetune(cfg: &RunConfig, out: &Path, synthetic: &Path, data: &Path) -> Result<Files, CliError> {
    let mut files = Files::default();
    let split = load_split(cfg, data, &mut files)?;
    let arms = load_arms(cfg, synthetic, &mut files)?;
    let arm = arms.into_iter().next().expect("arms validated non-empty");
    if arm.pool.is_empty() {
        return Err(CliError::Data(format!("{} has no {} triples", synthetic.display(), arm.arm.label())));
    }
    let e = &cfg.experiment;
    let vocab = &split.world.vocab;
    let mut model = QaModel::new(e.shape.encoder(vocab.len()), cfg.seed.wrapping_add(QA_SEED))?;
    let mut staged = e.staged;
    staged.pretrain.seed = cfg.seed;
    staged.finetune.seed = cfg.seed;

    let objective = if cfg.beta.lambda > 0.0 {
        let mut state = AdamState::new(&model.params, staged.finetune.adam());
        train_combined(&mut model, &split.labeled, &arm.pool, &staged.finetune, &cfg.beta, &mut state)?;
        "combined"
    } else {
        train_staged(&mut model, &arm.pool, &split.labeled, &split.dev, vocab, &staged)?;
        "staged"
    };
    let scores = evaluate_qa(&model, &split.dev, vocab)?;
    let beta = beta_triples(&model, &arm.pool, &cfg.beta)?;
    let report = TrainingReport {
        arm: arm.arm.label().to_string(),
        objective,
        synthetic: arm.pool.len(),
        em: scores.em,
        f1: scores.f1,
        beta,
        lambda: cfg.beta.lambda,
        gamma: cfg.beta.gamma,
    };
    let row = MetricsRow {
        arm: report.arm.clone(),
        size: arm.pool.len(),
        seed: cfg.seed,
        em: scores.em,
        f1: scores.f1,
        beta,
        wall_s: 0.0,
    };

    let ckpt_path = out.join(format!("qa.{objective}.ckpt.json"));
    model.checkpoint(0, None)?.save(&ckpt_path)?;
    let metrics_path = out.join("metrics.csv");
    write_metrics_csv(&[row], &metrics_path)?;
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    println!("{objective} on {} {} triples: dev EM {:.3} F1 {:.3}", report.synthetic, report.arm, report.em, report.f1);
    files.output(ckpt_path);
    files.output(metrics_path);
    files.output(report_path);
    Ok(files)
}

#[derive(Serialize)]
struct CurvePoint {
    arm: String,
    size: usize,
    seeds: usize,
    mean_em: f64,
    mean_f1: f64,
}

fn arm_rank(cfg: &RunConfig, label: &str) -> usize {
    cfg.arms.iter().position(|a| a.label() == label).unwrap_or(usize::MAX)
}

pub fn curve(cfg: &RunConfig, out: &Path, synthetic: Option<&Path>, data: Option<&Path>) -> Result<Files, CliError> {
    let mut files = Files::default();
    let e = &cfg.experiment;
    let curve_cfg = |vocab: usize, seeds: Vec<u64>| CurveConfig {
        sizes: e.curve_sizes.clone(),
        seeds,
        encoder: e.shape.encoder(vocab),
        staged: e.staged,
        beta_probe: 64,
        wall_clock: false,
    };
    let mut rows = Vec::new();
    let mut filters = BTreeMap::new();
    match (synthetic, data) {
        (Some(syn), Some(data)) => {
            let split = load_split(cfg, data, &mut files)?;
            let arms = load_arms(cfg, syn, &mut files)?;
            let c = curve_cfg(split.world.vocab.len(), cfg.curve_seeds.clone());
            rows = learning_curve(&arms, &split.labeled, &split.dev, &split.world.vocab, &c)?;
        }
        (None, None) => {
            for &seed in &cfg.curve_seeds {
                let run = run_seed(seed, e)?;
                log::info!("seed {seed}: kept {} of {}", run.report.kept, run.output.summary.attempted);
                filters.insert(seed.to_string(), run.report.clone());
                let arms: Vec<CurveArm> = synthetic_arms(&run.output)
                    .into_iter()
                    .filter(|a| cfg.arms.contains(&a.arm))
                    .collect();
                let c = curve_cfg(run.split.world.vocab.len(), vec![seed]);
                rows.extend(learning_curve(&arms, &run.split.labeled, &run.split.dev, &run.split.world.vocab, &c)?);
            }
            rows.sort_by_key(|r| (r.size, arm_rank(cfg, &r.arm), r.seed));
        }
        (None, Some(_)) => return Err(CliError::Usage("--data without --synthetic; pass both or neither".into())),
        (Some(_), None) => unreachable!("clap requires --data with --synthetic"),
    }

    let mut points: Vec<CurvePoint> = Vec::new();
    for r in &rows {
        match points.iter_mut().find(|p| p.arm == r.arm && p.size == r.size) {
            Some(p) => {
                p.seeds += 1;
                p.mean_em += r.em;
                p.mean_f1 += r.f1;
            }
            None => points.push(CurvePoint {
                arm: r.arm.clone(),
                size: r.size,
                seeds: 1,
                mean_em: r.em,
                mean_f1: r.f1,
            }),
        }
    }
    for p in &mut points {
        p.mean_em /= p.seeds as f64;
        p.mean_f1 /= p.seeds as f64;
        println!("{:>6} size {:>5}: EM {:.3} F1 {:.3} over {} seeds", p.arm, p.size, p.mean_em, p.mean_f1, p.seeds);
    }

    let csv_path = out.join("curve.csv");
    write_metrics_csv(&rows, &csv_path)?;
    let summary_path = out.join("curve.summary.json");
    write_json(&summary_path, &serde_json::json!({ "points": points, "filter": filters }))?;
    files.output(csv_path);
    files.output(summary_path);
    Ok(files)
}

#[derive(Serialize)]
struct EvalReport {
    examples: usize,
    em: f64,
    f1: f64,
}

pub fn eval(cfg: &RunConfig, out: &Path, model: &Path, data: &Path) -> Result<Files, CliError> {
    let mut files = Files::default();
    let split = load_split(cfg, data, &mut files)?;
    let ckpt = load_ckpt(model, &split.world.vocab, &mut files)?;
    let qa = QaModel::from_checkpoint(&ckpt)?;
    let scores = evaluate_qa(&qa, &split.dev, &split.world.vocab)?;
    let report = EvalReport {
        examples: split.dev.len(),
        em: scores.em,
        f1: scores.f1,
    };
    let path: PathBuf = out.join("eval.json");
    write_json(&path, &report)?;
    println!("dev EM {:.3} F1 {:.3} on {} examples", report.em, report.f1, report.examples);
    files.output(path);
    Ok(files)
}
