//! Mini-batch SGD with momentum, cosine learning-rate decay, class-balanced
//! batches and early stopping on validation AUROC.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{forward, Batch, Model, EXPERT_CLASS};
use crate::error::{Error, Result};
use crate::evaluation::roc::auroc;
use crate::features::WindowFeatures;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub cosine_decay: bool,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    /// Draw half of each batch from each class.
    pub balanced_batches: bool,
    /// Optimizer steps per epoch; defaults to one pass over the training set.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            cosine_decay: true,
            batch_size: 32,
            epochs: 30,
            patience: Some(5),
            balanced_batches: true,
            steps_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Parameter(
                "learning rate, batch size and epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Parameter("steps_per_epoch must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auroc: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

impl TrainingHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record([
            "epoch",
            "train_loss",
            "val_loss",
            "val_auroc",
            "learning_rate",
        ])?;
        for r in &self.epochs {
            writer.write_record(&[
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.val_auroc.to_string(),
                r.learning_rate.to_string(),
            ])?;
        }
        writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Cycles through a shuffled index pool, reshuffling after each pass.
struct Sampler {
    pool: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(pool: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let mut s = Self { pool, pos: 0 };
        s.pool.shuffle(rng);
        s
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.pool.len() {
            self.pool.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.pool[self.pos - 1]
    }
}

/// Validation loss and AUROC of `model` on `windows`.
pub fn evaluate(model: &Model, windows: &[&WindowFeatures]) -> Result<(f64, f64)> {
    let mut scores = Vec::with_capacity(windows.len());
    let mut loss = 0.0;
    for chunk in windows.chunks(64) {
        for (p, w) in forward(model, chunk)?.iter().zip(chunk) {
            let y = w.label.class_index();
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            scores.push(p[EXPERT_CLASS]);
        }
    }
    let labels: Vec<bool> = windows.iter().map(|w| w.label.is_expert()).collect();
    Ok((loss / windows.len() as f64, auroc(&scores, &labels)?))
}

/// Trains `model` and returns the parameters of the epoch with the best
/// validation AUROC (ties broken by lower validation loss).
pub fn train(
    mut model: Model,
    train_windows: &[WindowFeatures],
    val_windows: &[WindowFeatures],
    tc: &TrainConfig,
) -> Result<(Model, TrainingHistory)> {
    tc.validate()?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Parameter(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let val: Vec<&WindowFeatures> = val_windows.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);

    let experts: Vec<usize> = (0..train_windows.len())
        .filter(|&i| train_windows[i].label.is_expert())
        .collect();
    let others: Vec<usize> = (0..train_windows.len())
        .filter(|&i| !train_windows[i].label.is_expert())
        .collect();
    let balanced = tc.balanced_batches && !experts.is_empty() && !others.is_empty();
    let mut samplers = if balanced {
        vec![
            Sampler::new(others, &mut rng),
            Sampler::new(experts, &mut rng),
        ]
    } else {
        vec![Sampler::new((0..train_windows.len()).collect(), &mut rng)]
    };

    let steps = tc
        .steps_per_epoch
        .unwrap_or_else(|| train_windows.len().div_ceil(tc.batch_size));
    let total_steps = (steps * tc.epochs) as f64;
    let mut velocity = model.zeros_like();
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, f64, Model)> = None;
    let mut since_best = 0usize;
    let mut step = 0usize;

    for epoch in 0..tc.epochs {
        let mut epoch_loss = 0.0;
        let mut lr = tc.learning_rate;
        for _ in 0..steps {
            let n_samplers = samplers.len();
            let picks: Vec<&WindowFeatures> = (0..tc.batch_size)
                .map(|j| {
                    let s = &mut samplers[j % n_samplers];
                    &train_windows[s.next(&mut rng)]
                })
                .collect();
            let batch = Batch::<f32>::from_features(&picks, model.config.seq_len)?;
            let (loss, grad) = model.loss_and_gradients(&batch).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { batch: step },
                other => other,
            })?;

            lr = if tc.cosine_decay {
                0.5 * tc.learning_rate
                    * (1.0 + (std::f64::consts::PI * step as f64 / total_steps).cos())
            } else {
                tc.learning_rate
            };
            let (lr32, mu) = (lr as f32, tc.momentum as f32);
            for ((p, v), g) in model
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors().into_iter().map(|(_, g)| g))
            {
                for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = mu * *v + g;
                    *p -= lr32 * *v;
                }
            }
            let loss = loss as f64;
            history.step_losses.push(loss);
            epoch_loss += loss;
            step += 1;
        }
        if !model.is_finite() {
            return Err(Error::NonFinite { batch: step - 1 });
        }

        let (val_loss, val_auroc) = evaluate(&model, &val)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / steps as f64,
            val_loss,
            val_auroc,
            learning_rate: lr,
        });
        let improved = match &best {
            None => true,
            Some((a, l, _)) => val_auroc > *a || (val_auroc == *a && val_loss < *l),
        };
        if improved {
            best = Some((val_auroc, val_loss, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if tc.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }

    let (_, _, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}
