//! Seeded synthetic panels: linear trend + sinusoid + noise, with an
//! optional level shift over the final fifth of the series.

use chrono::{NaiveDate, TimeDelta};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Panel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub length: usize,
    pub n_features: usize,
    pub amplitude: f64,
    pub period: f64,
    /// Added per step.
    pub trend_slope: f64,
    pub noise_std: f64,
    /// Added to every row from `shift_start` of the way through.
    pub level_shift: f64,
    pub shift_start: f64,
    /// Minutes between rows.
    pub interval_minutes: i64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length: 2000,
            n_features: 3,
            amplitude: 1.0,
            period: 24.0,
            trend_slope: 0.0,
            noise_std: 0.1,
            level_shift: 0.0,
            shift_start: 0.8,
            interval_minutes: 60,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Rejects series too short for four look-back + horizon spans.
    pub fn check_length(&self, seq_len: usize, pred_len: usize) -> Result<()> {
        if self.length < 4 * (seq_len + pred_len) {
            return Err(Error::Config(format!(
                "synthetic length {} < 4·(L+H) = {}",
                self.length,
                4 * (seq_len + pred_len)
            )));
        }
        Ok(())
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Panel> {
    if spec.length < 4 || spec.n_features == 0 {
        return Err(Error::Config("synthetic panel needs >= 4 rows and >= 1 feature".into()));
    }
    if !(spec.period > 0.0) || !(spec.noise_std >= 0.0) || spec.interval_minutes <= 0 {
        return Err(Error::Config("period and interval must be positive, noise nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let shift_row = (spec.length as f64 * spec.shift_start).floor() as usize;
    let f = spec.n_features;
    let mut values = Array2::zeros((spec.length, f));
    for t in 0..spec.length {
        for j in 0..f {
            let phase = 2.0 * std::f64::consts::PI * j as f64 / f as f64;
            let angle = 2.0 * std::f64::consts::PI * t as f64 / spec.period + phase;
            let mut v = spec.trend_slope * t as f64 + spec.amplitude * angle.sin();
            if spec.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            if t >= shift_row {
                v += spec.level_shift;
            }
            values[[t, j]] = v;
        }
    }
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let step = TimeDelta::minutes(spec.interval_minutes);
    let timestamps = (0..spec.length).map(|i| t0 + step * i as i32).collect();
    let names = (0..f).map(|j| format!("x{j}")).collect();
    Panel::new(timestamps, values, names)
}
