//! One configured run: load → EDA → split → train → test → report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, window_count, Panel, WindowSet, ZScore};
use crate::eda::{describe, select_parameters, EdaReport};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_naive, EvalResult};
use crate::node::{count_parameters, ModelParams};
use crate::pipeline::Pipeline;
use crate::training::{evaluate, train, TrainReport};

use super::config::{build_pipeline, resolve_eda, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub pred_len: usize,
    pub pipeline: Pipeline,
    pub parameter_count: usize,
    pub train: TrainReport,
    pub test: EvalResult,
    pub naive: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub dataset_rows: usize,
    pub n_features: usize,
    pub split_rows: [usize; 3],
    pub eda: EdaReport,
    pub horizons: Vec<HorizonResult>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A finished run plus what stays out of the deterministic report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub models: Vec<ModelParams>,
    pub wall_clock_seconds: Vec<f64>,
}

/// Standardized panel with chronological split boundaries.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub raw: Panel,
    pub scaled: Array2<f64>,
    pub zscore: ZScore,
    pub n_train: usize,
    pub n_val: usize,
}

impl PreparedData {
    pub fn new(raw: Panel, config: &ExperimentConfig) -> Result<Self> {
        let spec = config.split()?;
        let (n_train, n_val, _) = spec.sizes(raw.len());
        let zscore = ZScore::fit(&raw.slice_rows(0, n_train))?;
        let scaled = zscore.transform(&raw).values;
        Ok(Self {
            raw,
            scaled,
            zscore,
            n_train,
            n_val,
        })
    }

    pub fn split_rows(&self) -> [usize; 3] {
        [self.n_train, self.n_val, self.raw.len() - self.n_train - self.n_val]
    }

    // Validation and test windows start their look-back inside the
    // preceding split, so every target row belongs to its own split.
    fn block(&self, start: usize, end: usize, seq_len: usize, pred_len: usize) -> Result<WindowSet> {
        let start = start.saturating_sub(seq_len);
        window_count(end - start, seq_len, pred_len)?;
        WindowSet::new(self.scaled.slice(s![start..end, ..]).to_owned(), seq_len, pred_len)
    }

    pub fn train_windows(&self, seq_len: usize, pred_len: usize) -> Result<WindowSet> {
        WindowSet::new(self.scaled.slice(s![..self.n_train, ..]).to_owned(), seq_len, pred_len)
    }

    pub fn val_windows(&self, seq_len: usize, pred_len: usize) -> Result<WindowSet> {
        self.block(self.n_train, self.n_train + self.n_val, seq_len, pred_len)
    }

    pub fn test_windows(&self, seq_len: usize, pred_len: usize) -> Result<WindowSet> {
        self.block(self.n_train + self.n_val, self.raw.len(), seq_len, pred_len)
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Panel> {
    load_csv(config.dataset_path(), &config.datetime_column)
}

/// Preset or data-driven statistics, before config overrides.
pub fn run_eda(config: &ExperimentConfig, panel: &Panel) -> Result<EdaReport> {
    let options = config.eda_options()?;
    let mut grid = config.candidate_grid(panel.granularity());
    if panel.len() < grid.stationarity_window {
        grid.stationarity_window = grid.window_length;
    }
    if let (Some(kernel), Some(period)) = (config.kernel_size, config.period) {
        return describe(panel, kernel, period, grid.window_length, grid.stationarity_window, &options);
    }
    match config.preset() {
        Some(preset) => {
            let mut report = describe(
                panel,
                config.kernel_size.unwrap_or(preset.kernel_size),
                config.period.unwrap_or(preset.period),
                grid.window_length,
                grid.stationarity_window,
                &options,
            )?;
            report.use_seasonality = preset.use_seasonality;
            report.use_instance_norm = preset.use_instance_norm;
            Ok(report)
        }
        None => select_parameters(panel, &grid, &options),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    run_on_panel(config, load_dataset(config)?)
}

/// Same as [`run_experiment`] with the panel already in memory.
pub fn run_on_panel(config: &ExperimentConfig, panel: Panel) -> Result<RunOutcome> {
    config.validate()?;
    let eda = resolve_eda(config, run_eda(config, &panel)?);
    let data = PreparedData::new(panel, config)?;
    let seq_len = config.effective_seq_len();
    let train_config = config.train_config();

    let mut horizons = Vec::new();
    let mut models = Vec::new();
    let mut wall_clock_seconds = Vec::new();
    for &pred_len in &config.horizons {
        let started = Instant::now();
        let pipeline = build_pipeline(config, &eda, pred_len)?;
        let train_w = data.train_windows(seq_len, pred_len)?;
        let val_w = data.val_windows(seq_len, pred_len)?;
        let test_w = data.test_windows(seq_len, pred_len)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let init = pipeline.init_model(&mut rng);
        let (model, mut report) = train(&pipeline, &train_w, &val_w, init, &train_config)?;
        let test = evaluate(&pipeline, &model, &test_w, 256)?;
        report.test_mse = Some(test.mse);
        report.test_mae = Some(test.mae);
        report.wall_clock_seconds = None;

        horizons.push(HorizonResult {
            pred_len,
            parameter_count: count_parameters(&model),
            pipeline,
            train: report,
            test,
            naive: evaluate_naive(&test_w)?,
        });
        models.push(model);
        wall_clock_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(RunOutcome {
        report: RunReport {
            config: config.clone(),
            dataset_rows: data.raw.len(),
            n_features: data.raw.n_features(),
            split_rows: data.split_rows(),
            eda,
            horizons,
        },
        models,
        wall_clock_seconds,
    })
}

pub fn checkpoint_path(dir: &Path, pred_len: usize) -> PathBuf {
    dir.join(format!("checkpoint_h{pred_len}.json"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `metrics.csv`, `losses.csv`, one checkpoint per
/// horizon and `timing.json` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("report.json"), &outcome.report.to_json()?)?;

    let path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "pred_len", "variant", "mse", "mae", "mape_paper", "naive_mse", "naive_mae",
        "parameters", "best_epoch", "epochs_run",
    ])?;
    for h in &outcome.report.horizons {
        w.write_record([
            h.pred_len.to_string(),
            outcome.report.config.variant.to_string(),
            h.test.mse.to_string(),
            h.test.mae.to_string(),
            h.test.mape_paper.to_string(),
            h.naive.mse.to_string(),
            h.naive.mae.to_string(),
            h.parameter_count.to_string(),
            h.train.best_epoch.to_string(),
            h.train.epochs_run.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("losses.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["pred_len", "epoch", "train_loss", "val_mse"])?;
    for h in &outcome.report.horizons {
        for (i, (tl, vm)) in h.train.train_losses.iter().zip(&h.train.val_mse).enumerate() {
            w.write_record([
                h.pred_len.to_string(),
                (i + 1).to_string(),
                tl.to_string(),
                vm.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    for (h, model) in outcome.report.horizons.iter().zip(&outcome.models) {
        model.save(checkpoint_path(dir, h.pred_len))?;
    }
    let timing: BTreeMap<String, f64> = outcome
        .report
        .horizons
        .iter()
        .zip(&outcome.wall_clock_seconds)
        .map(|(h, s)| (format!("h{}", h.pred_len), *s))
        .collect();
    write_text(&dir.join("timing.json"), &serde_json::to_string_pretty(&timing)?)
}

/// Re-scores the checkpoints of a finished run on its test split.
pub fn evaluate_run(dir: &Path) -> Result<Vec<(usize, EvalResult)>> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report = RunReport::from_json(&text)?;
    let data = PreparedData::new(load_dataset(&report.config)?, &report.config)?;
    let mut out = Vec::new();
    for h in &report.horizons {
        let model = ModelParams::load(checkpoint_path(dir, h.pred_len))?;
        h.pipeline.check_model(&model)?;
        let test_w = data.test_windows(h.pipeline.seq_len, h.pred_len)?;
        out.push((h.pred_len, evaluate(&h.pipeline, &model, &test_w, 256)?));
    }
    Ok(out)
}
