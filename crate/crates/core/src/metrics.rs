//! Forecast error metrics and the last-value baseline.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Windows;
use crate::error::{Error, Result};

/// Targets closer to zero than this are skipped by `mape_paper`.
pub const MAPE_TARGET_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalResult {
    pub mse: f64,
    pub mae: f64,
    /// Mean of `|(y - ŷ) / y|` over elements with `|y| >= 1e-8`.
    pub mape_paper: f64,
    pub n_windows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsoluteErrors {
    pub mae: f64,
    pub mape_paper: f64,
}

fn check_shapes(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::Metric(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Metric("empty input".into()));
    }
    Ok(())
}

pub fn mse(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (t - p).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Standard MAE together with the relative-error variant.
pub fn mae(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<AbsoluteErrors> {
    check_shapes(pred, target)?;
    let mut acc = MetricAccumulator::default();
    acc.add(pred, target);
    Ok(AbsoluteErrors {
        mae: acc.abs_sum / acc.count as f64,
        mape_paper: acc.mape(),
    })
}

/// Running sums over many windows; the reduction order is the insertion
/// order, so results are reproducible.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    sq_sum: f64,
    abs_sum: f64,
    rel_sum: f64,
    rel_count: usize,
    count: usize,
    windows: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) {
        for (p, t) in pred.iter().zip(target.iter()) {
            let err = t - p;
            self.sq_sum += err * err;
            self.abs_sum += err.abs();
            if t.abs() >= MAPE_TARGET_FLOOR {
                self.rel_sum += (err / t).abs();
                self.rel_count += 1;
            }
        }
        self.count += pred.len();
        self.windows += 1;
    }

    fn mape(&self) -> f64 {
        if self.rel_count == 0 {
            0.0
        } else {
            self.rel_sum / self.rel_count as f64
        }
    }

    pub fn finish(&self) -> Result<EvalResult> {
        if self.count == 0 {
            return Err(Error::Metric("no windows evaluated".into()));
        }
        let n = self.count as f64;
        Ok(EvalResult {
            mse: self.sq_sum / n,
            mae: self.abs_sum / n,
            mape_paper: self.mape(),
            n_windows: self.windows,
        })
    }
}

/// Repeats the last observed row across the horizon.
pub fn naive_last_value_baseline(x: ArrayView2<'_, f64>, pred_len: usize) -> Array2<f64> {
    let last = x.row(x.nrows() - 1);
    Array2::from_shape_fn((pred_len, x.ncols()), |(_, j)| last[j])
}

pub fn evaluate_naive<W: Windows + ?Sized>(windows: &W) -> Result<EvalResult> {
    let mut acc = MetricAccumulator::default();
    for i in 0..windows.len() {
        let y = windows.y(i);
        let pred = naive_last_value_baseline(windows.x(i), y.nrows());
        acc.add(pred.view(), y);
    }
    acc.finish()
}
