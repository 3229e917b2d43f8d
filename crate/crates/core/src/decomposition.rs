//! Additive trend / seasonality / residual decomposition of one window.
//!
//! The trend is a replicate-padded moving average, the seasonality is the
//! per-phase mean of the detrended series tiled back to window length, and
//! the residual is whatever remains, so `trend + seasonality + residual`
//! reproduces the input up to rounding.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompConfig {
    pub kernel_size: usize,
    pub period: usize,
    pub extract_seasonality: bool,
}

impl DecompConfig {
    pub fn new(kernel_size: usize, period: usize, extract_seasonality: bool) -> Self {
        Self {
            kernel_size,
            period,
            extract_seasonality,
        }
    }

    pub fn validate(&self, window_len: usize) -> Result<()> {
        if self.kernel_size < 2 {
            return Err(Error::Decomp(format!(
                "kernel size must be >= 2, got {}",
                self.kernel_size
            )));
        }
        if self.period < 2 {
            return Err(Error::Decomp(format!(
                "period must be >= 2, got {}",
                self.period
            )));
        }
        if self.extract_seasonality && self.period > window_len {
            return Err(Error::Decomp(format!(
                "period {} exceeds window length {window_len}",
                self.period
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedWindow {
    pub trend: Array2<f64>,
    /// All zeros when seasonality is not extracted.
    pub seasonality: Array2<f64>,
    pub residual: Array2<f64>,
    pub config: DecompConfig,
}

impl DecomposedWindow {
    pub fn reconstruct(&self) -> Array2<f64> {
        &self.trend + &self.seasonality + &self.residual
    }
}

/// Pads the front with `ceil((k-1)/2)` copies of the first row and the
/// back with `floor((k-1)/2)` copies of the last row.
pub fn pad_replicate(x: ArrayView2<'_, f64>, kernel: usize) -> Array2<f64> {
    let (len, n_features) = x.dim();
    assert!(len >= 1, "cannot pad an empty window");
    let extra = kernel.saturating_sub(1);
    let front = extra.div_ceil(2);
    let back = extra / 2;
    let mut out = Array2::zeros((len + extra, n_features));
    for i in 0..front {
        out.row_mut(i).assign(&x.row(0));
    }
    out.slice_mut(s![front..front + len, ..]).assign(&x);
    for i in 0..back {
        out.row_mut(front + len + i).assign(&x.row(len - 1));
    }
    out
}

/// Stride-1 average pooling over the padded input; output length equals
/// the input length.
pub fn moving_average_trend(x: ArrayView2<'_, f64>, kernel: usize) -> Array2<f64> {
    let kernel = kernel.max(1);
    let padded = pad_replicate(x, kernel);
    let (len, n_features) = x.dim();
    let mut trend = Array2::zeros((len, n_features));
    let scale = 1.0 / kernel as f64;
    let mut prefix = vec![0.0; padded.nrows() + 1];
    for j in 0..n_features {
        let col = padded.column(j);
        // Offsets from the first value keep constant windows exact.
        let base = col[0];
        for (i, v) in col.iter().enumerate() {
            prefix[i + 1] = prefix[i] + (v - base);
        }
        for i in 0..len {
            trend[[i, j]] = base + (prefix[i + kernel] - prefix[i]) * scale;
        }
    }
    trend
}

/// Fragment `i` is the mean of detrended rows `i, i+P, i+2P, ...` that
/// fall inside the window.
pub fn seasonal_fragments(detrended: ArrayView2<'_, f64>, period: usize) -> Array2<f64> {
    let (len, n_features) = detrended.dim();
    assert!(period >= 1 && period <= len, "period must be in [1, L]");
    let mut fragments = Array2::zeros((period, n_features));
    for i in 0..period {
        let rows = detrended.slice(s![i..;period, ..]);
        let m = rows.nrows() as f64;
        fragments
            .row_mut(i)
            .assign(&(rows.sum_axis(Axis(0)) / m));
    }
    fragments
}

/// Repeats the fragments until `len` rows are filled.
pub fn tile_seasonality(fragments: ArrayView2<'_, f64>, len: usize) -> Array2<f64> {
    let period = fragments.nrows();
    assert!(period >= 1, "need at least one fragment");
    let mut out = Array2::zeros((len, fragments.ncols()));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row.assign(&fragments.row(i % period));
    }
    out
}

pub fn decompose(x: ArrayView2<'_, f64>, config: &DecompConfig) -> Result<DecomposedWindow> {
    let len = x.nrows();
    if len == 0 {
        return Err(Error::Decomp("empty window".into()));
    }
    config.validate(len)?;
    let trend = moving_average_trend(x, config.kernel_size);
    let detrended = &x - &trend;
    let seasonality = if config.extract_seasonality {
        let fragments = seasonal_fragments(detrended.view(), config.period);
        tile_seasonality(fragments.view(), len)
    } else {
        Array2::zeros(x.raw_dim())
    };
    let residual = detrended - &seasonality;
    Ok(DecomposedWindow {
        trend,
        seasonality,
        residual,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Array2<f64> {
        Array1::from(v.to_vec()).insert_axis(Axis(1))
    }

    #[test]
    fn padding_rules() {
        let x = col(&[1.0, 2.0, 3.0]);
        assert_eq!(pad_replicate(x.view(), 3), col(&[1.0, 1.0, 2.0, 3.0, 3.0]));
        assert_eq!(pad_replicate(x.view(), 1), x);
        let single = col(&[5.0]);
        assert_eq!(pad_replicate(single.view(), 4), col(&[5.0; 4]));
        // even kernel: front-heavy
        assert_eq!(
            pad_replicate(x.view(), 4),
            col(&[1.0, 1.0, 1.0, 2.0, 3.0, 3.0])
        );
    }

    #[test]
    fn moving_average_hand_values() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let t = moving_average_trend(x.view(), 3);
        let expected = [4.0 / 3.0, 2.0, 3.0, 11.0 / 3.0];
        for (a, b) in t.column(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_average_constant_and_ramp_interior() {
        let c = Array2::from_elem((20, 2), 3.25);
        assert_eq!(moving_average_trend(c.view(), 7), c);
        for k in 2..9usize {
            let len = 30;
            let ramp = col(&(0..len).map(|i| i as f64).collect::<Vec<_>>());
            let t = moving_average_trend(ramp.view(), k);
            let lo = (k - 1).div_ceil(2);
            let hi = len - 1 - (k - 1) / 2;
            // even kernels average a window centered half a step early
            let shift = if k % 2 == 0 { -0.5 } else { 0.0 };
            for i in lo..=hi {
                assert!((t[[i, 0]] - (i as f64 + shift)).abs() < 1e-12, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn fragments_handle_uneven_counts() {
        let d = col(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(seasonal_fragments(d.view(), 3), col(&[2.5, 3.5, 4.5]));
        let d = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(seasonal_fragments(d.view(), 3), col(&[2.5, 3.5, 3.0]));
        let periodic = col(&[1.0, -2.0, 0.5, 1.0, -2.0, 0.5, 1.0]);
        assert_eq!(seasonal_fragments(periodic.view(), 3), col(&[1.0, -2.0, 0.5]));
    }

    #[test]
    fn tiling() {
        let f = array![[1.0], [2.0]];
        assert_eq!(tile_seasonality(f.view(), 5), col(&[1.0, 2.0, 1.0, 2.0, 1.0]));
        assert_eq!(tile_seasonality(f.view(), 2), f);
    }

    #[test]
    fn constant_window_has_no_seasonality_or_residual() {
        let x = Array2::from_elem((24, 3), -1.5);
        for extract in [true, false] {
            let d = decompose(x.view(), &DecompConfig::new(5, 6, extract)).unwrap();
            assert_eq!(d.trend, x);
            assert!(d.seasonality.iter().all(|&v| v == 0.0));
            assert!(d.residual.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn no_seasonality_means_residual_is_detrended() {
        let x = col(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let d = decompose(x.view(), &DecompConfig::new(3, 2, false)).unwrap();
        assert!(d.seasonality.iter().all(|&v| v == 0.0));
        assert_eq!(d.residual, &x - &d.trend);
    }

    #[test]
    fn period_longer_than_window_is_rejected() {
        let x = Array2::zeros((10, 1));
        assert!(matches!(
            decompose(x.view(), &DecompConfig::new(3, 11, true)),
            Err(Error::Decomp(_))
        ));
        assert!(decompose(x.view(), &DecompConfig::new(3, 11, false)).is_ok());
        assert!(decompose(x.view(), &DecompConfig::new(1, 4, false)).is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_and_periodicity(
            len in 4usize..60,
            f in 1usize..4,
            kernel in 2usize..12,
            period_seed in 0usize..100,
            extract in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let period = 2 + period_seed % (len - 1);
            let mut state = seed | 1;
            let x = Array2::from_shape_fn((len, f), |_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 10_000) as f64 / 100.0 - 50.0
            });
            let d = decompose(x.view(), &DecompConfig::new(kernel, period, extract)).unwrap();
            let err = (&d.reconstruct() - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(err < 1e-9);
            for i in 0..len.saturating_sub(period) {
                prop_assert_eq!(d.seasonality.row(i), d.seasonality.row(i + period));
            }
            // adding a constant shifts only the trend
            let shifted = x.mapv(|v| v + 7.5);
            let ds = decompose(shifted.view(), &DecompConfig::new(kernel, period, extract)).unwrap();
            let dt = (&ds.trend - &d.trend).iter().fold(0.0f64, |m, v| m.max((v - 7.5).abs()));
            prop_assert!(dt < 1e-9);
            let dr = (&ds.residual - &d.residual).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(dr < 1e-9);
        }
    }
}
