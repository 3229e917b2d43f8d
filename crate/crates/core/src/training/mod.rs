//! Minibatch Adam training with validation early stopping.

mod adam;
mod backprop;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Windows;
use crate::error::{Error, Result};
use crate::metrics::{EvalResult, MetricAccumulator};
use crate::node::{ModelParams, SolverConfig};
use crate::pipeline::{window_block, Flow, Pipeline};

pub use adam::{adam_step, AdamState};
pub use backprop::{backward, batch_loss, loss, BatchOutcome, GradientBundle, Probes};

/// Learning rates searched by the experiment grid.
pub const LEARNING_RATE_GRID: [f64; 6] = [0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001];
pub const BATCH_SIZE_GRID: [usize; 4] = [8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegWeights {
    pub lambda_k: f64,
    pub lambda_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda_k: f64,
    pub lambda_j: f64,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            lambda_k: 0.0,
            lambda_j: 0.0,
            solver: SolverConfig::default(),
            seed: 2021,
        }
    }
}

impl TrainConfig {
    pub fn reg(&self) -> RegWeights {
        RegWeights {
            lambda_k: self.lambda_k,
            lambda_j: self.lambda_j,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be >= 1".into()));
        }
        for (name, v) in [("lambda_k", self.lambda_k), ("lambda_j", self.lambda_j)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean regularized training loss per epoch.
    pub train_losses: Vec<f64>,
    /// Plain validation MSE per epoch.
    pub val_mse: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub test_mse: Option<f64>,
    pub test_mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Plain (unregularized) metrics of `model` over every window.
pub fn evaluate<W: Windows + ?Sized>(
    pipeline: &Pipeline,
    model: &ModelParams,
    windows: &W,
    batch_size: usize,
) -> Result<EvalResult> {
    let mut acc = MetricAccumulator::default();
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = pipeline.batch(windows, chunk)?;
        let pred = pipeline.predict_batch(model, &batch)?;
        for (b, &i) in chunk.iter().enumerate() {
            let y = windows.y(i);
            acc.add(window_block(&pred, b, y.ncols()), y);
        }
    }
    acc.finish()
}

fn node_probe_count(pipeline: &Pipeline) -> usize {
    match pipeline.flow {
        Flow::Node { .. } => pipeline.components().len(),
        _ => 0,
    }
}

/// Trains `model` in place of a copy and returns the parameters from the
/// epoch with the lowest validation MSE.
pub fn train<T: Windows + ?Sized, V: Windows + ?Sized>(
    pipeline: &Pipeline,
    train_windows: &T,
    val_windows: &V,
    model: ModelParams,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    pipeline.check_model(&model)?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Config("training and validation windows must be nonempty".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = model;
    let mut state = AdamState::new(&model);
    let mut best = model.clone();
    let mut report = TrainReport {
        best_val_mse: f64::INFINITY,
        ..Default::default()
    };
    let reg = config.reg();
    let n_probes = node_probe_count(pipeline);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let seeds: Vec<u64> = (0..n_probes).map(|_| rng.next_u64()).collect();
            let probes = Probes::new(pipeline, seeds);
            let step = backward(pipeline, &model, train_windows, chunk, reg, &probes);
            let (loss, grads) = match step {
                Ok(v) => v,
                Err(Error::Numerics(reason)) => {
                    report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
                    return Err(Error::TrainingAborted {
                        reason,
                        report: Box::new(report),
                    });
                }
                Err(e) => return Err(e),
            };
            adam_step(&mut model, &grads, &mut state, config.learning_rate);
            loss_sum += loss * chunk.len() as f64;
        }
        let val = match evaluate(pipeline, &model, val_windows, config.batch_size.max(64)) {
            Ok(v) if v.mse.is_finite() => v,
            Ok(_) | Err(Error::Numerics(_)) => {
                report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
                return Err(Error::TrainingAborted {
                    reason: format!("non-finite validation error at epoch {epoch}"),
                    report: Box::new(report),
                });
            }
            Err(e) => return Err(e),
        };
        report.train_losses.push(loss_sum / train_windows.len() as f64);
        report.val_mse.push(val.mse);
        report.epochs_run = epoch;
        if val.mse < report.best_val_mse {
            report.best_val_mse = val.mse;
            report.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                report.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WindowSet;
    use crate::pipeline::Variant;
    use ndarray::Array2;

    fn flat_windows(n: usize) -> WindowSet {
        WindowSet::new(Array2::from_elem((n, 2), 0.5), 8, 4).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lambda_k: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_targets_stop_early() {
        let p = Pipeline::new(Variant::Linear, 8, 4, None, None, SolverConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = p.init_model(&mut rng);
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 400,
            patience: 5,
            ..Default::default()
        };
        let (best, report) = train(&p, &flat_windows(40), &flat_windows(20), model, &config).unwrap();
        assert!(report.stopped_early);
        assert!(report.epochs_run < config.max_epochs);
        assert!(report.best_epoch <= report.epochs_run);
        let after = evaluate(&p, &best, &flat_windows(20), 16).unwrap();
        assert_eq!(after.mse, report.best_val_mse);
        for later in &report.val_mse[report.best_epoch..] {
            assert!(report.best_val_mse <= *later);
        }
    }
}
