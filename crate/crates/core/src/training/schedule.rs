use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, ParamStore, Tape, Var};
use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Dropout rate on embeddings and sublayer outputs; 0 disables it.
    #[serde(default)]
    pub dropout: f64,
}

impl TrainConfig {
    /// Batch 128, one epoch, learning rate 2e-5, no decay.
    pub fn full_scale() -> Self {
        Self {
            batch_size: 128,
            lr: 2e-5,
            epochs: 1,
            seed: 0,
            dropout: 0.0,
        }
    }

    pub fn toy(epochs: usize, seed: u64) -> Self {
        Self {
            batch_size: 16,
            lr: 1e-3,
            epochs,
            seed,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(contract("batch size must be >= 1 and learning rate > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(contract("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Fresh training tape for example `index` of `epoch`. Dropout masks
    /// depend only on the seed, epoch and index, so runs are reproducible.
    pub fn tape(&self, stream: u64, epoch: usize, index: usize) -> Tape {
        if self.dropout == 0.0 {
            return Tape::new();
        }
        let mut h = self.seed ^ stream;
        for v in [epoch as u64, index as u64] {
            h = splitmix(h ^ v);
        }
        Tape::with_dropout(self.dropout, h)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::toy(1, 0)
    }
}

/// A model whose parameters live in one [`ParamStore`].
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

/// Example order for `epoch`: a fixed shuffle derived from the run seed.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order
}

/// Per-step record of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Mean loss of each optimizer step's batch.
    pub losses: Vec<f64>,
    /// Examples for which the loss function declined to produce a loss.
    pub skipped: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adds the gradient of `loss` (a scalar on `tape`) times `scale` into the
/// store. Returns the loss value.
pub fn accumulate(tape: &Tape, loss: Var, store: &mut ParamStore, scale: f64) -> Result<f64> {
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss {value}")));
    }
    let grads = tape.backward(loss)?;
    grads.accumulate_into(tape, store, scale);
    Ok(value)
}

/// Shuffled minibatch descent over `n` examples. `loss` builds example `i`'s
/// scalar loss on a fresh tape, or returns `None` to skip it. Each batch's
/// gradient is the mean over its non-skipped examples.
pub fn run_minibatches<M, F>(
    model: &mut M,
    n: usize,
    cfg: &TrainConfig,
    state: &mut AdamState,
    mut loss: F,
) -> Result<TrainLog>
where
    M: Trainable,
    F: FnMut(&M, &mut Tape, usize) -> Result<Option<Var>>,
{
    cfg.validate()?;
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        for batch in order.chunks(cfg.batch_size) {
            model.params_mut().zero_grad();
            let mut used = 0usize;
            let mut total = 0.0;
            for &i in batch {
                let mut tape = cfg.tape(0, epoch, i);
                match loss(model, &mut tape, i)? {
                    Some(l) => {
                        total += accumulate(&tape, l, model.params_mut(), 1.0)?;
                        used += 1;
                    }
                    None => log.skipped += 1,
                }
            }
            if used == 0 {
                continue;
            }
            let scale = 1.0 / used as f64;
            model.params_mut().scale_grads(scale);
            state.step(model.params_mut())?;
            log.losses.push(total * scale);
        }
    }
    Ok(log)
}
