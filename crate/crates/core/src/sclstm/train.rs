use std::f64::consts::TAU;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::model::{backward_refs, batch_loss, Dims, SclstmParams, TrainingSample};
use super::SclstmError;
use crate::numerics::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Rotate every user of every minibatch sample by a fresh random phase.
    #[serde(default)]
    pub phase_augment: bool,
    /// Start the G-layer weights at zero so that its output begins as the
    /// bias alone.
    #[serde(default)]
    pub zero_g_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 128,
            adam: AdamConfig {
                g_weight_lr_scale: 0.01,
                ..AdamConfig::default()
            },
            phase_augment: true,
            zero_g_weights: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen, epoch 0 included.
    pub params: SclstmParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<HistoryRow>,
}

fn shuffle(order: &mut [usize], rng: &mut SimRng) {
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
}

/// Minibatch Adam on the cascaded-channel MSE. Row 0 of the history holds
/// the losses of the initial parameters.
pub fn train(
    train_set: &[TrainingSample],
    val_set: &[TrainingSample],
    dims: Dims,
    cfg: &TrainConfig,
    rng: &mut SimRng,
) -> Result<TrainOutcome, SclstmError> {
    let mut init = SclstmParams::init(dims, &mut rng.split(0x1417));
    if cfg.zero_g_weights {
        init.g_layer.weight.data.fill(0.0);
    }
    train_from(init, train_set, val_set, cfg, rng)
}

/// Like [`train`] but starting from given parameters.
pub fn train_from(
    mut params: SclstmParams,
    train_set: &[TrainingSample],
    val_set: &[TrainingSample],
    cfg: &TrainConfig,
    rng: &mut SimRng,
) -> Result<TrainOutcome, SclstmError> {
    if train_set.is_empty() || val_set.is_empty() || cfg.batch_size == 0 {
        return Err(SclstmError::InvalidInput("training needs non-empty train/validation sets and batches".into()));
    }
    let mut state = AdamState::new(&params);
    let val0 = batch_loss(&params, val_set)?;
    let train0 = batch_loss(&params, train_set)?;
    if !val0.is_finite() || !train0.is_finite() {
        return Err(SclstmError::TrainingDiverged { epoch: 0 });
    }
    let mut history = vec![HistoryRow {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
        lr: cfg.adam.lr,
    }];
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val = val0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        shuffle(&mut order, rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut lr = cfg.adam.lr_at(state.step + 1);
        for idx in order.chunks(cfg.batch_size) {
            let (loss, grads) = if cfg.phase_augment {
                let rotated: Vec<TrainingSample> = idx
                    .iter()
                    .map(|&i| {
                        let s = &train_set[i];
                        let phases: Vec<f64> = (0..s.target.len()).map(|_| rng.uniform() * TAU).collect();
                        s.rotated(&phases)
                    })
                    .collect();
                let refs: Vec<&TrainingSample> = rotated.iter().collect();
                backward_refs(&params, &refs)?
            } else {
                batch.clear();
                batch.extend(idx.iter().map(|&i| &train_set[i]));
                backward_refs(&params, &batch)?
            };
            if !loss.is_finite() {
                return Err(SclstmError::TrainingDiverged { epoch });
            }
            lr = adam_step(&mut params, &grads, &mut state, &cfg.adam);
            loss_sum += loss;
            batches += 1;
        }
        if !params.is_finite() {
            return Err(SclstmError::TrainingDiverged { epoch });
        }
        let val = batch_loss(&params, val_set)?;
        if !val.is_finite() {
            return Err(SclstmError::TrainingDiverged { epoch });
        }
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = params.clone();
        }
        history.push(HistoryRow {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss: val,
            lr,
        });
    }
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        best_val_loss: best_val,
        history,
    })
}

/// Writes `epoch,train_loss,val_loss,lr`.
pub fn write_history_csv<W: Write>(history: &[HistoryRow], mut out: W) -> io::Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,lr")?;
    for h in history {
        writeln!(out, "{},{:e},{:e},{:e}", h.epoch, h.train_loss, h.val_loss, h.lr)?;
    }
    Ok(())
}
