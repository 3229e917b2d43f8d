//! Experiment configuration, dataset presets and pipeline assembly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitSpec;
use crate::decomposition::DecompConfig;
use crate::eda::{CandidateGrid, EdaOptions, EdaReport, DEFAULT_KERNELS};
use crate::error::{Error, Result};
use crate::instnorm::{NormAxis, DEFAULT_EPS_FLOOR};
use crate::node::{SolverConfig, SolverMethod};
use crate::pipeline::{NormSettings, Pipeline, Variant};
use crate::training::TrainConfig;

/// Environment variable naming the directory relative dataset paths
/// are resolved against.
pub const DATA_DIR_ENV: &str = "DNODE_DATA_DIR";

/// Where decomposition and normalization flags come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaMode {
    /// Known datasets use their published settings; others fall back to auto.
    #[default]
    Preset,
    /// Always select parameters from the data.
    Auto,
}

/// Published per-dataset settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetPreset {
    pub kernel_size: usize,
    pub period: usize,
    pub use_seasonality: bool,
    pub use_instance_norm: bool,
    pub seq_len: usize,
}

pub fn dataset_preset(name: &str) -> Option<DatasetPreset> {
    let p = |kernel_size, period, use_seasonality, use_instance_norm| DatasetPreset {
        kernel_size,
        period,
        use_seasonality,
        use_instance_norm,
        seq_len: 336,
    };
    let key = name.to_ascii_lowercase().replace(['-', ' '], "_");
    Some(match key.as_str() {
        "electricity" | "ecl" => p(25, 24, true, false),
        "exchange" | "exchange_rate" => p(10, 7, false, false),
        "weather" => p(10, 6, false, false),
        "ili" | "national_illness" => DatasetPreset {
            seq_len: 104,
            ..p(25, 52, false, true)
        },
        "etth1" => p(10, 48, true, true),
        "etth2" => p(25, 24, true, true),
        "ettm1" => p(50, 7, true, false),
        "ettm2" => p(25, 7, true, true),
        _ => return None,
    })
}

/// Flat so that every key maps to one command-line flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV path; relative paths are tried against `DNODE_DATA_DIR` too.
    pub dataset: String,
    /// Preset lookup key; defaults to the file stem.
    pub dataset_name: Option<String>,
    pub datetime_column: String,
    /// Look-back length; 104 for ILI and 336 otherwise when unset.
    pub seq_len: Option<usize>,
    pub horizons: Vec<usize>,
    pub variant: Variant,

    pub eda_mode: EdaMode,
    pub kernel_size: Option<usize>,
    pub period: Option<usize>,
    pub use_seasonality: Option<bool>,
    pub use_instance_norm: Option<bool>,
    pub candidate_kernels: Vec<usize>,
    pub candidate_periods: Option<Vec<usize>>,
    pub stationarity_window: Option<usize>,
    pub seasonality_threshold: f64,
    pub shift_threshold: f64,
    pub significance: f64,

    pub norm_axis: NormAxis,
    pub eps_floor: f64,
    pub train_frac: Option<f64>,
    pub val_frac: Option<f64>,
    pub test_frac: Option<f64>,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda_k: f64,
    pub lambda_j: f64,
    pub solver: SolverMethod,
    pub n_steps: usize,
    pub terminal_time: f64,
    pub seed: u64,

    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let eda = EdaOptions::default();
        Self {
            dataset: String::new(),
            dataset_name: None,
            datetime_column: "date".into(),
            seq_len: None,
            horizons: vec![96],
            variant: Variant::LtsfDnode,
            eda_mode: EdaMode::Preset,
            kernel_size: None,
            period: None,
            use_seasonality: None,
            use_instance_norm: None,
            candidate_kernels: DEFAULT_KERNELS.to_vec(),
            candidate_periods: None,
            stationarity_window: None,
            seasonality_threshold: eda.seasonality_threshold,
            shift_threshold: eda.shift_threshold,
            significance: eda.significance,
            norm_axis: NormAxis::Feature,
            eps_floor: DEFAULT_EPS_FLOOR,
            train_frac: None,
            val_frac: None,
            test_frac: None,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            lambda_k: train.lambda_k,
            lambda_j: train.lambda_j,
            solver: train.solver.method,
            n_steps: train.solver.n_steps,
            terminal_time: train.solver.terminal_time,
            seed: train.seed,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn name(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            Path::new(&self.dataset)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }

    pub fn preset(&self) -> Option<DatasetPreset> {
        match self.eda_mode {
            EdaMode::Preset => dataset_preset(&self.name()),
            EdaMode::Auto => None,
        }
    }

    pub fn effective_seq_len(&self) -> usize {
        self.seq_len
            .unwrap_or_else(|| dataset_preset(&self.name()).map_or(336, |p| p.seq_len))
    }

    pub fn split(&self) -> Result<SplitSpec> {
        match (self.train_frac, self.val_frac, self.test_frac) {
            (None, None, None) => Ok(SplitSpec::default_for(&self.name())),
            (Some(a), Some(b), Some(c)) => SplitSpec::new(a, b, c),
            _ => Err(Error::Config(
                "train_frac, val_frac and test_frac must be given together".into(),
            )),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: self.solver,
            n_steps: self.n_steps,
            terminal_time: self.terminal_time,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            lambda_k: self.lambda_k,
            lambda_j: self.lambda_j,
            solver: self.solver_config(),
            seed: self.seed,
        }
    }

    pub fn eda_options(&self) -> Result<EdaOptions> {
        Ok(EdaOptions {
            seasonality_threshold: self.seasonality_threshold,
            shift_threshold: self.shift_threshold,
            significance: self.significance,
            split: self.split()?,
        })
    }

    pub fn candidate_grid(&self, granularity: Option<chrono::TimeDelta>) -> CandidateGrid {
        let window = self.effective_seq_len();
        let periods = self
            .candidate_periods
            .clone()
            .unwrap_or_else(|| CandidateGrid::periods_for_granularity(granularity, window));
        let kernels = self.candidate_kernels.iter().copied().filter(|&k| k < window).collect();
        let mut grid = CandidateGrid::new(kernels, periods, window);
        grid.stationarity_window = self.stationarity_window.unwrap_or(720.max(window));
        grid
    }

    /// Resolves the dataset path, trying `DNODE_DATA_DIR` for relative paths.
    pub fn dataset_path(&self) -> PathBuf {
        let direct = PathBuf::from(&self.dataset);
        if direct.is_absolute() || direct.exists() {
            return direct;
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(root) => Path::new(&root).join(&direct),
            None => direct,
        }
    }

    /// Rejects flag combinations the chosen variant cannot honour.
    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be a nonempty list of positive lengths".into()));
        }
        if !v.decomposes() {
            for (name, set) in [
                ("kernel_size", self.kernel_size.is_some()),
                ("period", self.period.is_some()),
                ("use_seasonality", self.use_seasonality.is_some()),
            ] {
                if set {
                    return Err(Error::Config(format!("variant {v} does not decompose; remove {name}")));
                }
            }
        }
        if let (Some(forced), Some(asked)) = (v.forced_seasonality(), self.use_seasonality) {
            if forced != asked {
                return Err(Error::Config(format!(
                    "variant {v} fixes use_seasonality = {forced}"
                )));
            }
        }
        if self.use_instance_norm == Some(true) && !v.may_normalize() {
            return Err(Error::Config(format!("variant {v} does not use instance normalization")));
        }
        if !(self.eps_floor > 0.0) {
            return Err(Error::Config("eps_floor must be positive".into()));
        }
        self.split()?;
        self.train_config().validate()
    }
}

/// Applies config overrides on top of EDA or preset choices.
pub fn resolve_eda(config: &ExperimentConfig, mut eda: EdaReport) -> EdaReport {
    if let Some(k) = config.kernel_size {
        eda.kernel_size = k;
    }
    if let Some(p) = config.period {
        eda.period = p;
    }
    if let Some(s) = config.use_seasonality {
        eda.use_seasonality = s;
    }
    if let Some(n) = config.use_instance_norm {
        eda.use_instance_norm = n;
    }
    eda
}

/// Assembles the forecasting pipeline for one horizon.
pub fn build_pipeline(config: &ExperimentConfig, eda: &EdaReport, pred_len: usize) -> Result<Pipeline> {
    config.validate()?;
    let eda = resolve_eda(config, eda.clone());
    let v = config.variant;
    let decomposition = v.decomposes().then(|| {
        DecompConfig::new(
            eda.kernel_size,
            eda.period,
            v.forced_seasonality().unwrap_or(eda.use_seasonality),
        )
    });
    let normalization = (v.may_normalize() && eda.use_instance_norm).then_some(NormSettings {
        axis: config.norm_axis,
        eps_floor: config.eps_floor,
    });
    Pipeline::new(
        v,
        config.effective_seq_len(),
        pred_len,
        decomposition,
        normalization,
        config.solver_config(),
    )
}
