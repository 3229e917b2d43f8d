//! Augmented Dickey-Fuller unit-root test, constant-only regression.
//!
//! `Δy_t = α + γ y_{t-1} + Σ_{i=1..p} θ_i Δy_{t-i} + e_t`; the statistic is
//! the t-ratio of `γ`. P-values use MacKinnon's (1994) response-surface
//! approximation and critical values MacKinnon's (2010) finite-sample
//! polynomials.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub nobs: usize,
}

/// Schwert's rule: `floor(12 · (n/100)^{1/4})`.
pub fn schwert_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

// Constant-only, one-variable coefficients.
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const TAU_SMALLP: [f64; 3] = [2.1659, 1.4412, 0.038269];
const TAU_LARGEP: [f64; 4] = [1.7339, 0.93202 * 1e-1, -0.12745 * 1e-1, -0.010368 * 1e-2];

/// Approximate p-value of an ADF statistic (constant, no trend).
pub fn mackinnon_p_value(statistic: f64) -> f64 {
    if statistic.is_nan() {
        return f64::NAN;
    }
    if statistic > TAU_MAX {
        return 1.0;
    }
    if statistic < TAU_MIN {
        return 0.0;
    }
    let coefs: &[f64] = if statistic <= TAU_STAR {
        &TAU_SMALLP
    } else {
        &TAU_LARGEP
    };
    let poly = coefs.iter().rev().fold(0.0, |acc, c| acc * statistic + c);
    standard_normal_cdf(poly)
}

/// Finite-sample critical value at the 1%, 5% or 10% level.
pub fn critical_value(significance: f64, nobs: usize) -> Result<f64> {
    let coefs = if (significance - 0.01).abs() < 1e-12 {
        [-3.43035, -6.5393, -16.786, -79.433]
    } else if (significance - 0.05).abs() < 1e-12 {
        [-2.86154, -2.8903, -4.234, -40.040]
    } else if (significance - 0.10).abs() < 1e-12 {
        [-2.56677, -1.5384, -2.809, 0.0]
    } else {
        return Err(Error::Eda(format!(
            "no ADF critical values for significance {significance}; use 0.01, 0.05 or 0.10"
        )));
    };
    let inv = 1.0 / nobs as f64;
    Ok(coefs[0] + coefs[1] * inv + coefs[2] * inv * inv + coefs[3] * inv * inv * inv)
}

fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Error for series the regression cannot handle (constant, collinear).
pub fn is_degenerate(err: &Error) -> bool {
    matches!(err, Error::Eda(msg) if msg.starts_with("degenerate"))
}

/// Runs the test with `lags` augmentation terms (Schwert's rule if `None`).
pub fn adf_test(series: &[f64], lags: Option<usize>) -> Result<AdfResult> {
    let n = series.len();
    let p = lags.unwrap_or_else(|| schwert_lags(n));
    let k = p + 2;
    if n < p + 2 || n - p - 1 <= k {
        return Err(Error::Eda(format!(
            "series of length {n} too short for ADF with {p} lags"
        )));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::Eda("degenerate: constant series".into()));
    }
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = n - p - 1;
    // Row r models Δy at diff index p + r.
    let x = DMatrix::from_fn(nobs, k, |r, c| {
        let t = p + r;
        match c {
            0 => series[t],
            1 => 1.0,
            lag => diff[t - (lag - 1)],
        }
    });
    let y = DVector::from_fn(nobs, |r, _| diff[p + r]);
    let xtx = x.transpose() * &x;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eda("degenerate: singular design matrix".into()))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &beta;
    let dof = (nobs - k) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let xtx_inv = chol.inverse();
    let se = (sigma2 * xtx_inv[(0, 0)]).sqrt();
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::Eda("degenerate: zero standard error".into()));
    }
    let statistic = beta[0] / se;
    Ok(AdfResult {
        statistic,
        p_value: mackinnon_p_value(statistic),
        lags: p,
        nobs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_rule() {
        assert_eq!(schwert_lags(100), 12);
        assert_eq!(schwert_lags(720), 19);
        assert_eq!(schwert_lags(336), 16);
        assert_eq!(schwert_lags(104), 12);
    }

    #[test]
    fn five_percent_point() {
        // The asymptotic 5% critical value maps to p ≈ 0.05.
        assert!((mackinnon_p_value(-2.86154) - 0.05).abs() < 2e-3);
        assert_eq!(mackinnon_p_value(-30.0), 0.0);
        assert_eq!(mackinnon_p_value(3.0), 1.0);
        let mut last = 0.0;
        for i in 0..200 {
            let p = mackinnon_p_value(-18.0 + i as f64 * 0.1);
            assert!(p >= last - 1e-7);
            last = p;
        }
    }

    #[test]
    fn critical_values_match_table() {
        assert!((critical_value(0.05, 185).unwrap() - -2.8772932777920364).abs() < 1e-12);
        assert!(critical_value(0.2, 100).is_err());
    }

    #[test]
    fn normal_cdf() {
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((standard_normal_cdf(1.959963985) - 0.975).abs() < 1e-6);
        assert!((standard_normal_cdf(-1.644853627) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let err = adf_test(&[3.0; 50], Some(2)).unwrap_err();
        assert!(is_degenerate(&err));
        assert!(adf_test(&[1.0, 2.0, 3.0], None).is_err());
    }
}
