use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dnode_core::data::load_csv;
use dnode_core::decomposition::{decompose, DecompConfig};
use dnode_core::eda::EdaReport;
use dnode_core::harness::config::resolve_eda;
use dnode_core::harness::experiment::{load_dataset, run_eda};
use dnode_core::harness::grid::{expand, regularization_table};
use dnode_core::harness::{
    evaluate_run, grid_search, run_experiment, synth_generate, write_outputs, ExperimentConfig, SynthSpec,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dnode", version, about = "Decomposition + linear neural ODE forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset statistics and selected decomposition parameters.
    Eda(EdaArgs),
    /// Write the trend / seasonality / residual of one look-back window.
    Decompose(DecomposeArgs),
    /// Train and test one configuration.
    Train(ConfigArgs),
    /// Re-score the checkpoints of a finished run.
    Evaluate(EvaluateArgs),
    /// Train a grid of configurations and keep the best by validation MSE.
    Grid(GridArgs),
    /// Generate a synthetic dataset CSV.
    Synth(SynthArgs),
}

/// Every field of the experiment config as an optional flag of the same name.
#[derive(Args, Serialize, Default)]
#[command(rename_all = "snake_case")]
struct Overrides {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_name: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    datetime_column: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seq_len: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizons: Option<Vec<usize>>,
    /// ltsf_dnode, linear, linear_tr, linear_tsr, nlinear, no_dcmp, no_norm, no_node
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    /// preset or auto
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eda_mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    use_seasonality: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    use_instance_norm: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    candidate_kernels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    candidate_periods: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stationarity_window: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seasonality_threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    shift_threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    significance: Option<f64>,
    /// feature or time
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    norm_axis: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_floor: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_frac: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    val_frac: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_frac: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_k: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_j: Option<f64>,
    /// euler or rk4
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    terminal_time: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        let flags = toml::Table::try_from(&self.overrides)?;
        table.extend(flags);
        let config: ExperimentConfig = table.try_into().context("invalid experiment config")?;
        if config.dataset.is_empty() {
            bail!("no dataset given; set `dataset` in the config or pass --dataset");
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct EdaArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// First row of the window.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
#[command(rename_all = "snake_case")]
struct GridArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',')]
    grid_learning_rate: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_batch_size: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    grid_lambda_k: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_lambda_j: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(rename_all = "snake_case")]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    length: usize,
    #[arg(long, default_value_t = 3)]
    n_features: usize,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 24.0)]
    period: f64,
    #[arg(long, default_value_t = 0.0)]
    trend_slope: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    #[arg(long, default_value_t = 0.0)]
    level_shift: f64,
    #[arg(long, default_value_t = 0.8)]
    shift_start: f64,
    #[arg(long, default_value_t = 60)]
    interval_minutes: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn table_header() -> String {
    format!(
        "{:<16} {:>15} {:>12} {:>7} {:>7} {:>12} {:>12} {:>12} {:>10}",
        "dataset", "forecastability", "trend", "kernel", "period", "seasonality", "stationarity", "use_season", "inst_norm"
    )
}

fn table_row(name: &str, r: &EdaReport) -> String {
    format!(
        "{:<16} {:>15.3} {:>12.2e} {:>7} {:>7} {:>11.2}% {:>11.2}% {:>12} {:>10}",
        name,
        r.forecastability,
        r.trend_slope,
        r.kernel_size,
        r.period,
        100.0 * r.seasonality_ratio,
        100.0 * r.stationarity_ratio,
        r.use_seasonality,
        r.use_instance_norm
    )
}

fn eda(args: &EdaArgs) -> Result<()> {
    let config = args.config.load()?;
    let panel = load_dataset(&config)?;
    let report = resolve_eda(&config, run_eda(&config, &panel)?);
    println!("{}", table_header());
    println!("{}", table_row(&config.name(), &report));
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn decompose_window(args: &DecomposeArgs) -> Result<()> {
    let config = args.config.load()?;
    let panel = load_csv(config.dataset_path(), &config.datetime_column)?;
    let report = resolve_eda(&config, run_eda(&config, &panel)?);
    let len = config.effective_seq_len();
    if args.start + len > panel.len() {
        bail!("window [{}, {}) exceeds the {} dataset rows", args.start, args.start + len, panel.len());
    }
    let window = panel.slice_rows(args.start, args.start + len);
    let parts = decompose(
        window.values.view(),
        &DecompConfig::new(report.kernel_size, report.period, report.use_seasonality),
    )?;
    let mut w = csv::Writer::from_path(&args.out)?;
    let mut header = vec![config.datetime_column.clone()];
    for name in &window.feature_names {
        for part in ["value", "trend", "seasonality", "residual"] {
            header.push(format!("{name}_{part}"));
        }
    }
    w.write_record(&header)?;
    for (i, ts) in window.timestamps.iter().enumerate() {
        let mut row = vec![ts.format("%Y-%m-%d %H:%M:%S").to_string()];
        for j in 0..window.n_features() {
            for m in [&window.values, &parts.trend, &parts.seasonality, &parts.residual] {
                row.push(m[[i, j]].to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    println!(
        "kernel {} period {} seasonality {} -> {}",
        report.kernel_size,
        report.period,
        report.use_seasonality,
        args.out.display()
    );
    Ok(())
}

fn default_output_dir(config: &ExperimentConfig) -> PathBuf {
    match &config.output_dir {
        Some(dir) => PathBuf::from(dir),
        None => Path::new("runs").join(format!("{}_{}", config.name(), config.variant)),
    }
}

fn train(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let dir = default_output_dir(&config);
    let outcome = run_experiment(&config)?;
    write_outputs(&outcome, &dir)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>8}", "horizon", "mse", "mae", "naive_mse", "epochs");
    for h in &outcome.report.horizons {
        println!(
            "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>8}",
            h.pred_len, h.test.mse, h.test.mae, h.naive.mse, h.train.epochs_run
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    println!("{:>8} {:>10} {:>10} {:>10}", "horizon", "mse", "mae", "mape");
    for (h, r) in evaluate_run(&args.run)? {
        println!("{:>8} {:>10.4} {:>10.4} {:>10.4}", h, r.mse, r.mae, r.mape_paper);
    }
    Ok(())
}

fn grid(args: &GridArgs) -> Result<()> {
    let base = args.config.load()?;
    let configs = expand(
        &base,
        args.grid_learning_rate.as_deref().unwrap_or(&[base.learning_rate]),
        args.grid_batch_size.as_deref().unwrap_or(&[base.batch_size]),
        args.grid_lambda_k.as_deref().unwrap_or(&[base.lambda_k]),
        args.grid_lambda_j.as_deref().unwrap_or(&[base.lambda_j]),
    );
    let report = grid_search(&configs)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("grid.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(args.out.join("grid.csv"), regularization_table(&report))?;
    for &i in &report.selected {
        let e = &report.entries[i];
        println!(
            "{} H={} selected lr={} bs={} lambda_k={} lambda_j={} val_mse={:.4} test_mse={:.4}",
            e.dataset, e.pred_len, e.learning_rate, e.batch_size, e.lambda_k, e.lambda_j, e.val_mse, e.test.mse
        );
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        length: args.length,
        n_features: args.n_features,
        amplitude: args.amplitude,
        period: args.period,
        trend_slope: args.trend_slope,
        noise_std: args.noise_std,
        level_shift: args.level_shift,
        shift_start: args.shift_start,
        interval_minutes: args.interval_minutes,
        seed: args.seed,
    };
    synth_generate(&spec)?.write_csv(&args.out, "date")?;
    println!("wrote {} rows to {}", spec.length, args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Eda(a) => eda(&a),
        Command::Decompose(a) => decompose_window(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Grid(a) => grid(&a),
        Command::Synth(a) => synth(&a),
    }
}
