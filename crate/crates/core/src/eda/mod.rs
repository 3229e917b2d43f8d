//! Dataset statistics and data-driven choice of decomposition parameters.

pub mod adf;

use chrono::TimeDelta;
use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::{Panel, SplitSpec};
use crate::decomposition::{decompose, moving_average_trend, DecompConfig};
use crate::error::{Error, Result};

pub use adf::{adf_test, critical_value, mackinnon_p_value, schwert_lags, AdfResult};

/// Kernel sizes searched by default.
pub const DEFAULT_KERNELS: [usize; 3] = [10, 25, 50];
/// Survivors kept per kernel after ranking periods by seasonality ratio.
pub const PERIODS_PER_KERNEL: usize = 3;
const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub kernel_sizes: Vec<usize>,
    pub periods: Vec<usize>,
    /// Window length for the seasonality (ACF) statistic.
    pub window_length: usize,
    /// Window length for the stationarity (ADF) statistic.
    pub stationarity_window: usize,
}

impl CandidateGrid {
    pub fn new(kernel_sizes: Vec<usize>, periods: Vec<usize>, window_length: usize) -> Self {
        Self {
            kernel_sizes,
            periods,
            window_length,
            stationarity_window: 720,
        }
    }

    /// Periods that are natural for the sampling interval, restricted to
    /// those shorter than `window_length`.
    pub fn periods_for_granularity(granularity: Option<TimeDelta>, window_length: usize) -> Vec<usize> {
        let minutes = granularity.map(|g| g.num_minutes()).unwrap_or(60);
        let periods: &[usize] = match minutes {
            m if m <= 10 => &[6, 36, 72, 144],
            m if m <= 15 => &[4, 7, 24, 48, 96],
            m if m <= 30 => &[12, 24, 48, 96],
            m if m <= 60 => &[12, 24, 48, 168],
            m if m <= 24 * 60 => &[5, 7, 14, 30],
            _ => &[4, 13, 26, 52],
        };
        periods.iter().copied().filter(|&p| p < window_length).collect()
    }

    pub fn for_panel(panel: &Panel, window_length: usize) -> Self {
        Self::new(
            DEFAULT_KERNELS.to_vec(),
            Self::periods_for_granularity(panel.granularity(), window_length),
            window_length,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_sizes.is_empty() || self.periods.is_empty() {
            return Err(Error::Eda("candidate grid is empty".into()));
        }
        if let Some(k) = self.kernel_sizes.iter().find(|&&k| k < 2 || k >= self.window_length) {
            return Err(Error::Eda(format!(
                "kernel {k} must lie in [2, {})",
                self.window_length
            )));
        }
        if let Some(p) = self.periods.iter().find(|&&p| p < 2 || p >= self.window_length) {
            return Err(Error::Eda(format!(
                "period {p} must lie in [2, {})",
                self.window_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaOptions {
    /// `use_seasonality` iff the winning seasonality ratio reaches this.
    pub seasonality_threshold: f64,
    /// Shift flagged when trend means differ by more than this many train stds.
    pub shift_threshold: f64,
    /// ADF level: 0.01, 0.05 or 0.10.
    pub significance: f64,
    /// Split used to compare the train and test portions for shift.
    pub split: SplitSpec,
}

impl Default for EdaOptions {
    fn default() -> Self {
        Self {
            seasonality_threshold: 0.5,
            shift_threshold: 0.5,
            significance: 0.05,
            split: SplitSpec::STANDARD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub kernel_size: usize,
    pub period: usize,
    pub seasonality_ratio: f64,
    /// Only computed for the periods that survive the seasonality ranking.
    pub stationarity_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub forecastability: f64,
    pub trend_slope: f64,
    pub seasonality_ratio: f64,
    pub stationarity_ratio: f64,
    pub kernel_size: usize,
    pub period: usize,
    pub use_seasonality: bool,
    pub use_instance_norm: bool,
    #[serde(default)]
    pub candidates: Vec<CandidateScore>,
}

/// One minus the normalized spectral entropy over the positive-frequency
/// bins `1..=floor(n/2)`.
pub fn forecastability(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Eda(format!("forecastability needs >= 4 points, got {n}")));
    }
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = n / 2;
    let power: Vec<f64> = buf[1..=k].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    // Leakage from rounding in an exactly flat series.
    if total <= 0.0 || peak <= 1e-24 * n as f64 * series.iter().map(|v| v * v).sum::<f64>() {
        return Ok(0.0);
    }
    let entropy: f64 = power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    Ok((1.0 - entropy / (k as f64).ln()).clamp(0.0, 1.0))
}

/// OLS slope against the index, divided by the mean absolute value.
pub fn trend_slope(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Eda(format!("trend slope needs >= 2 points, got {n}")));
    }
    let x = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { i as f64 });
    let y = DVector::from_column_slice(series);
    let beta = (x.transpose() * &x)
        .cholesky()
        .ok_or_else(|| Error::Eda("singular trend regression".into()))?
        .solve(&(x.transpose() * y));
    let slope = beta[1];
    let scale = series.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    Ok(if scale > 0.0 { slope / scale } else { slope })
}

/// Sample autocorrelation at `lag`; zero for a flat sequence.
pub fn autocorrelation(x: ArrayView1<'_, f64>, lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let mean = x.sum() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum();
    num / denom
}

fn window_starts(len: usize, window_length: usize) -> Result<impl Iterator<Item = usize>> {
    if window_length == 0 || len < window_length {
        return Err(Error::Eda(format!(
            "series of length {len} holds no window of length {window_length}"
        )));
    }
    Ok((0..len / window_length).map(move |w| w * window_length))
}

/// Seasonality ratio of each period for one kernel, sharing the trend pass.
fn seasonal_ratios(
    values: ArrayView2<'_, f64>,
    window_length: usize,
    kernel: usize,
    periods: &[usize],
) -> Result<Vec<f64>> {
    if kernel >= window_length {
        return Err(Error::Eda(format!("kernel {kernel} >= window length {window_length}")));
    }
    if let Some(p) = periods.iter().find(|&&p| p >= window_length) {
        return Err(Error::Eda(format!("period {p} >= window length {window_length}")));
    }
    let bound = 1.96 / (window_length as f64).sqrt();
    let mut hits = vec![0usize; periods.len()];
    let mut total = 0usize;
    for start in window_starts(values.nrows(), window_length)? {
        let window = values.slice(s![start..start + window_length, ..]);
        let detrended = &window - &moving_average_trend(window, kernel);
        for column in detrended.columns() {
            total += 1;
            for (hit, &p) in hits.iter_mut().zip(periods) {
                if autocorrelation(column, p) > bound {
                    *hit += 1;
                }
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / total as f64).collect())
}

/// Fraction of non-overlapping windows × features whose detrended series
/// has a significant autocorrelation at lag `period`.
pub fn acf_seasonal_ratio(panel: &Panel, window_length: usize, kernel: usize, period: usize) -> Result<f64> {
    Ok(seasonal_ratios(panel.values.view(), window_length, kernel, &[period])?[0])
}

/// Stationary fraction and per-window p-values (window-major, then feature).
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityResult {
    pub ratio: f64,
    pub p_values: Vec<f64>,
}

/// ADF over every column of every non-overlapping window of `values`,
/// optionally on the decomposition residual.
pub fn adf_window_ratio(
    values: ArrayView2<'_, f64>,
    window_length: usize,
    residual_of: Option<DecompConfig>,
    significance: f64,
) -> Result<StationarityResult> {
    if window_length < 20 {
        return Err(Error::Eda(format!("ADF windows need >= 20 points, got {window_length}")));
    }
    let mut p_values = Vec::new();
    let mut stationary = 0usize;
    for start in window_starts(values.nrows(), window_length)? {
        let window = values.slice(s![start..start + window_length, ..]);
        let series: Array2<f64> = match &residual_of {
            Some(config) => decompose(window, config)?.residual,
            None => window.to_owned(),
        };
        for column in series.columns() {
            let column: Vec<f64> = column.to_vec();
            match adf_test(&column, None) {
                Ok(r) => {
                    if r.statistic < critical_value(significance, r.nobs)? {
                        stationary += 1;
                    }
                    p_values.push(r.p_value);
                }
                Err(e) if adf::is_degenerate(&e) => {
                    stationary += 1;
                    p_values.push(0.0);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(StationarityResult {
        ratio: stationary as f64 / p_values.len() as f64,
        p_values,
    })
}

/// Stationarity of the residual after decomposing with `(kernel, period)`.
pub fn adf_stationary_ratio(
    panel: &Panel,
    window_length: usize,
    kernel: usize,
    period: usize,
    significance: f64,
) -> Result<StationarityResult> {
    adf_window_ratio(
        panel.values.view(),
        window_length,
        Some(DecompConfig::new(kernel, period, true)),
        significance,
    )
}

/// True if the mean trend level of any feature moves by more than
/// `threshold` train standard deviations between the two panels.
pub fn detect_distribution_shift(train: &Panel, test: &Panel, kernel: usize, threshold: f64) -> Result<bool> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Eda("distribution shift needs nonempty panels".into()));
    }
    if train.n_features() != test.n_features() {
        return Err(Error::Eda("train and test feature counts differ".into()));
    }
    let t_train = moving_average_trend(train.values.view(), kernel);
    let t_test = moving_average_trend(test.values.view(), kernel);
    for j in 0..train.n_features() {
        let col = train.values.column(j);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let gap = (t_train.column(j).sum() / n - t_test.column(j).sum() / test.len() as f64).abs();
        if gap > threshold * std {
            return Ok(true);
        }
    }
    Ok(false)
}

fn feature_average(panel: &Panel, stat: fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut sum = 0.0;
    for j in 0..panel.n_features() {
        sum += stat(&panel.column(j))?;
    }
    Ok(sum / panel.n_features() as f64)
}

/// Feature-averaged forecastability over the full series.
pub fn panel_forecastability(panel: &Panel) -> Result<f64> {
    feature_average(panel, forecastability)
}

/// Feature-averaged magnitude-adjusted trend slope.
pub fn panel_trend_slope(panel: &Panel) -> Result<f64> {
    feature_average(panel, trend_slope)
}

/// Statistics for a fixed `(kernel, period)` without searching the grid.
pub fn describe(
    panel: &Panel,
    kernel: usize,
    period: usize,
    window_length: usize,
    stationarity_window: usize,
    options: &EdaOptions,
) -> Result<EdaReport> {
    let seasonality_ratio = acf_seasonal_ratio(panel, window_length, kernel, period)?;
    let stationarity = adf_stationary_ratio(panel, stationarity_window, kernel, period, options.significance)?;
    Ok(EdaReport {
        forecastability: panel_forecastability(panel)?,
        trend_slope: panel_trend_slope(panel)?,
        seasonality_ratio,
        stationarity_ratio: stationarity.ratio,
        kernel_size: kernel,
        period,
        use_seasonality: seasonality_ratio >= options.seasonality_threshold,
        use_instance_norm: shift_between_splits(panel, kernel, options)?,
        candidates: Vec::new(),
    })
}

fn shift_between_splits(panel: &Panel, kernel: usize, options: &EdaOptions) -> Result<bool> {
    let (n_train, _, n_test) = options.split.sizes(panel.len());
    if n_train == 0 || n_test == 0 {
        return Ok(false);
    }
    detect_distribution_shift(
        &panel.slice_rows(0, n_train),
        &panel.slice_rows(panel.len() - n_test, panel.len()),
        kernel,
        options.shift_threshold,
    )
}

// Positive when `a` has more windows with a lower p-value than `b`.
fn lower_p_balance(a: &[f64], b: &[f64]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => 1,
            Some(std::cmp::Ordering::Greater) => -1,
            _ => 0,
        })
        .sum()
}

/// Ranks periods per kernel by seasonality, keeps the top three, then
/// picks the survivor whose residual is most often stationary.
pub fn select_parameters(panel: &Panel, grid: &CandidateGrid, options: &EdaOptions) -> Result<EdaReport> {
    grid.validate()?;
    let mut candidates = Vec::new();
    let mut survivors = Vec::new();
    for &kernel in &grid.kernel_sizes {
        let ratios = seasonal_ratios(panel.values.view(), grid.window_length, kernel, &grid.periods)?;
        let mut ranked: Vec<(usize, f64)> = grid.periods.iter().copied().zip(ratios).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        // A period with no seasonal window is only kept if nothing else is.
        let any_seasonal = ranked.iter().any(|&(_, r)| r > 0.0);
        for (rank, &(period, ratio)) in ranked.iter().enumerate() {
            if rank < PERIODS_PER_KERNEL && (ratio > 0.0 || !any_seasonal) {
                survivors.push(candidates.len());
            }
            candidates.push(CandidateScore {
                kernel_size: kernel,
                period,
                seasonality_ratio: ratio,
                stationarity_ratio: None,
            });
        }
    }

    let mut best: Option<(usize, StationarityResult)> = None;
    for idx in survivors {
        let c = candidates[idx];
        let result = adf_stationary_ratio(
            panel,
            grid.stationarity_window,
            c.kernel_size,
            c.period,
            options.significance,
        )?;
        candidates[idx].stationarity_ratio = Some(result.ratio);
        let better = match &best {
            None => true,
            Some((_, incumbent)) => {
                if (result.ratio - incumbent.ratio).abs() <= TIE_TOLERANCE {
                    lower_p_balance(&result.p_values, &incumbent.p_values) > 0
                } else {
                    result.ratio > incumbent.ratio
                }
            }
        };
        if better {
            best = Some((idx, result));
        }
    }
    let (winner, stationarity) = best.ok_or_else(|| Error::Eda("no surviving candidates".into()))?;
    let chosen = candidates[winner];

    let use_instance_norm = shift_between_splits(panel, chosen.kernel_size, options)?;

    Ok(EdaReport {
        forecastability: panel_forecastability(panel)?,
        trend_slope: panel_trend_slope(panel)?,
        seasonality_ratio: chosen.seasonality_ratio,
        stationarity_ratio: stationarity.ratio,
        kernel_size: chosen.kernel_size,
        period: chosen.period,
        use_seasonality: chosen.seasonality_ratio >= options.seasonality_threshold,
        use_instance_norm,
        candidates,
    })
}
