use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledExample, Vocabulary};
use crate::encoder::EncoderConfig;
use crate::error::{contract, Result};
use crate::span::QaModel;

use super::beta::{beta_triples, BetaConfig};
use super::objectives::{finetune_only, train_staged, StagedConfig};
use super::metrics::evaluate_qa;
use super::schedule::epoch_order;

/// Which synthetic set a learning-curve row was trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    /// Roundtrip-filtered triples.
    #[serde(rename = "rt")]
    Rt,
    /// Every generated triple, unfiltered.
    #[serde(rename = "no-rt")]
    NoRt,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Rt => "rt",
            Arm::NoRt => "no-rt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rt" => Some(Arm::Rt),
            "no-rt" => Some(Arm::NoRt),
            _ => None,
        }
    }
}

/// One learning-curve grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub arm: String,
    pub size: usize,
    pub seed: u64,
    pub em: f64,
    pub f1: f64,
    pub beta: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    /// Synthetic-set sizes, ascending; 0 is the labeled-only baseline.
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub encoder: EncoderConfig,
    pub staged: StagedConfig,
    /// β is measured on the first this-many triples of each arm's pool.
    pub beta_probe: usize,
    /// Record elapsed seconds per row; when off the column is 0 so the CSV
    /// is reproducible byte for byte.
    pub wall_clock: bool,
}

/// A synthetic pool for one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveArm {
    pub arm: Arm,
    pub pool: Vec<LabeledExample>,
}

/// For each size, arm and seed: a fresh QA model is pretrained on `size`
/// triples drawn (seeded shuffle) from the arm's pool, fine-tuned on
/// `labeled`, and scored on `dev`. Rows are ordered size, arm, seed.
pub fn learning_curve(
    arms: &[CurveArm],
    labeled: &[LabeledExample],
    dev: &[LabeledExample],
    vocab: &Vocabulary,
    cfg: &CurveConfig,
) -> Result<Vec<MetricsRow>> {
    if cfg.sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(contract("learning-curve sizes must be ascending"));
    }
    let mut rows = Vec::new();
    // The labeled-only model does not depend on the arm; train it once.
    let mut baselines: HashMap<u64, QaModel> = HashMap::new();
    for &size in &cfg.sizes {
        for arm in arms {
            for &seed in &cfg.seeds {
                let start = Instant::now();
                let order = epoch_order(arm.pool.len(), seed, 0);
                let subset: Vec<LabeledExample> = order.iter().take(size).map(|&i| arm.pool[i].clone()).collect();
                let mut staged = cfg.staged;
                staged.pretrain.seed = seed;
                staged.finetune.seed = seed;
                let (model, scores) = if subset.is_empty() {
                    if !baselines.contains_key(&seed) {
                        let mut model = QaModel::new(cfg.encoder, seed)?;
                        finetune_only(&mut model, labeled, &staged.finetune)?;
                        baselines.insert(seed, model);
                    }
                    let model = baselines[&seed].clone();
                    let scores = evaluate_qa(&model, dev, vocab)?;
                    (model, scores)
                } else {
                    let mut model = QaModel::new(cfg.encoder, seed)?;
                    let scores = train_staged(&mut model, &subset, labeled, dev, vocab, &staged)?.dev_final;
                    (model, scores)
                };
                let probe: Vec<LabeledExample> = arm.pool.iter().take(cfg.beta_probe).cloned().collect();
                let beta = if probe.is_empty() {
                    f64::NAN
                } else {
                    beta_triples(&model, &probe, &BetaConfig::default())?
                };
                log::info!("curve {} size {size} seed {seed}: em {:.3}", arm.arm.label(), scores.em);
                rows.push(MetricsRow {
                    arm: arm.arm.label().to_string(),
                    size,
                    seed,
                    em: scores.em,
                    f1: scores.f1,
                    beta,
                    wall_s: if cfg.wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
                });
            }
        }
    }
    Ok(rows)
}

/// Writes rows under the header `arm,size,seed,em,f1,beta,wall_s`.
pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    if rows.is_empty() {
        w.write_record(["arm", "size", "seed", "em", "f1", "beta", "wall_s"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}
