#![allow(dead_code)]

use dnode_core::data::{WindowSet, Windows};
use dnode_core::node::{ComponentParams, ModelParams};
use dnode_core::pipeline::Pipeline;
use dnode_core::training::{backward, batch_loss, Probes, RegWeights};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `exp(A)·z0` by summing the Taylor series until terms vanish.
pub fn expm_apply(a: &Array2<f64>, z0: &Array1<f64>) -> Array1<f64> {
    let mut term = z0.clone();
    let mut sum = z0.clone();
    for k in 1..200 {
        term = a.dot(&term) / k as f64;
        sum = &sum + &term;
        if term.iter().all(|v| v.abs() < 1e-18) {
            break;
        }
    }
    sum
}

/// Random square matrix rescaled to Frobenius norm `norm` (bounds the spectral norm).
pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, norm: f64) -> Array2<f64> {
    let m = Array2::from_shape_fn((n, n), |_| r.random_range(-1.0..1.0));
    let f = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    m * (norm / f)
}

pub fn ode_only(w: Array2<f64>) -> ComponentParams {
    let n = w.nrows();
    ComponentParams::new(Some(w), Array2::zeros((1, n)), Array1::zeros(1)).unwrap()
}

pub fn randomize(model: &mut ModelParams, r: &mut ChaCha8Rng, scale: f64) {
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = r.random_range(-scale..scale);
        }
    }
}

pub fn random_series(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut level = vec![0.0; cols];
    Array2::from_shape_fn((rows, cols), |(_, j)| {
        level[j] += r.random_range(-1.0..1.0);
        level[j] + r.random_range(-0.5..0.5)
    })
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`; the denominator is floored at `floor`.
pub fn gradient_check(
    pipeline: &Pipeline,
    model: &ModelParams,
    windows: &WindowSet,
    reg: RegWeights,
    seeds: &[u64],
    h: f64,
    floor: f64,
) -> f64 {
    let idx: Vec<usize> = (0..windows.len()).collect();
    let probes = Probes::new(pipeline, seeds.iter().copied());
    let (_, grads) = backward(pipeline, model, windows, &idx, reg, &probes).unwrap();
    let analytic: Vec<f64> = grads.0.tensors().into_iter().flatten().copied().collect();
    let loss_at = |m: &ModelParams| batch_loss(pipeline, m, windows, &idx, reg, &probes).unwrap().loss;
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let n_tensors = model.tensors().len();
    for t in 0..n_tensors {
        let len = model.tensors()[t].len();
        for i in 0..len {
            let mut plus = model.clone();
            plus.tensors_mut()[t][i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[t][i] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let g = analytic[flat];
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(floor);
            worst = worst.max(rel);
            flat += 1;
        }
    }
    worst
}

#[derive(Deserialize)]
pub struct AdfFixture {
    pub name: String,
    pub series: Vec<f64>,
    pub lags: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub nobs: usize,
    pub crit_5pct: f64,
}

pub fn adf_fixtures() -> Vec<AdfFixture> {
    let text = include_str!("../data/adf_fixtures.json");
    serde_json::from_str(text).unwrap()
}

#[derive(Deserialize)]
pub struct AdfWindow {
    pub kind: String,
    pub series: Vec<f64>,
    pub statistic: f64,
    pub reject_5pct: bool,
}

#[derive(Deserialize)]
pub struct AdfWindows {
    pub kernel: usize,
    pub period: usize,
    pub windows: Vec<AdfWindow>,
}

pub fn adf_windows() -> AdfWindows {
    serde_json::from_str(include_str!("../data/adf_windows.json")).unwrap()
}
