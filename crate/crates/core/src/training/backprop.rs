//! Exact gradients of the discretized forward pass.
//!
//! Decomposition and normalization statistics depend only on inputs and
//! are treated as constants. The chain that is differentiated is
//! flow (unrolled solver) → decoder → DENORM scale → sum.

use ndarray::{Array1, Array2, Axis};

use crate::data::Windows;
use crate::error::{Error, Result};
use crate::node::{
    decode_batch, draw_probe, integrate_backward, integrate_taped, jacobian_norm,
    jacobian_norm_grad, ModelParams, Tape, TrajectoryStats,
};
use crate::pipeline::{Batch, Flow, Pipeline};

use super::RegWeights;

/// Gradient tensors with exactly the layout of the model they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle(pub ModelParams);

impl GradientBundle {
    pub fn all_finite(&self) -> bool {
        self.0.all_finite()
    }
}

/// Hutchinson probes for one forward pass: one `ε` per component, drawn
/// from the recorded seed. `None` for components without an ODE.
#[derive(Debug, Clone, Default)]
pub struct Probes {
    pub seeds: Vec<Option<u64>>,
    vectors: Vec<Option<Array1<f64>>>,
}

impl Probes {
    pub fn new(pipeline: &Pipeline, seeds: impl IntoIterator<Item = u64>) -> Self {
        let mut seeds = seeds.into_iter();
        let is_node = matches!(pipeline.flow, Flow::Node { .. });
        let mut out = Probes::default();
        for _ in pipeline.components() {
            let seed = if is_node { seeds.next() } else { None };
            out.vectors.push(seed.map(|s| draw_probe(s, pipeline.seq_len)));
            out.seeds.push(seed);
        }
        out
    }

    pub fn none(pipeline: &Pipeline) -> Self {
        Self::new(pipeline, std::iter::empty())
    }

    fn get(&self, c: usize) -> Option<&Array1<f64>> {
        self.vectors.get(c).and_then(Option::as_ref)
    }
}

/// Result of one batched forward (and optionally backward) pass.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Regularized loss averaged over the batch's windows.
    pub loss: f64,
    pub mse: f64,
    pub stats: Vec<TrajectoryStats>,
    pub grads: Option<GradientBundle>,
}

struct ComponentPass {
    z: Array2<f64>,
    tape: Option<Tape>,
}

/// Regularized MSE for one window: mean squared error over all `H·F`
/// elements plus `λ_k·kinetic + λ_j·jacobian` for each component.
pub fn loss(
    pred: &Array2<f64>,
    target: &Array2<f64>,
    stats: &[TrajectoryStats],
    lambda_k: f64,
    lambda_j: f64,
) -> Result<f64> {
    let mse = crate::metrics::mse(pred.view(), target.view())?;
    let reg: f64 = stats
        .iter()
        .map(|s| lambda_k * s.kinetic + lambda_j * s.jacobian)
        .sum();
    Ok(mse + reg)
}

fn stack_targets<W: Windows + ?Sized>(windows: &W, indices: &[usize]) -> Array2<f64> {
    let views: Vec<_> = indices.iter().map(|&i| windows.y(i)).collect();
    ndarray::concatenate(Axis(1), &views).expect("targets share a shape")
}

pub(crate) fn run_batch(
    pipeline: &Pipeline,
    model: &ModelParams,
    batch: &Batch,
    target: &Array2<f64>,
    reg: RegWeights,
    probes: &Probes,
    want_grad: bool,
) -> Result<BatchOutcome> {
    let cols = target.ncols();
    let mut pred = batch.base.clone();
    let mut passes = Vec::with_capacity(model.components.len());
    let mut stats = Vec::with_capacity(model.components.len());
    for (c, comp) in model.components.iter().enumerate() {
        let input = &batch.inputs[c];
        let mut stat = TrajectoryStats {
            eps_seed: probes.seeds.get(c).copied().flatten().unwrap_or(0),
            ..Default::default()
        };
        let pass = match (pipeline.flow, &comp.params.w) {
            (Flow::Node { solver }, Some(w)) => {
                let (z, tape) = integrate_taped(w, input.view(), &solver, want_grad)?;
                stat.kinetic = tape.kinetic();
                if let Some(eps) = probes.get(c) {
                    stat.jacobian = jacobian_norm(w, eps);
                }
                ComponentPass { z, tape: Some(tape) }
            }
            (Flow::Direct, Some(w)) => ComponentPass {
                z: w.dot(input),
                tape: None,
            },
            (Flow::Identity, _) => ComponentPass {
                z: input.clone(),
                tape: None,
            },
            (_, None) => return Err(Error::Config("component has no flow weight".into())),
        };
        let decoded = decode_batch(&comp.params, pass.z.view());
        match &batch.scales[c] {
            Some(scale) => pred += &(&decoded * scale),
            None => pred += &decoded,
        }
        passes.push(pass);
        stats.push(stat);
    }

    let diff = &pred - target;
    let n = diff.len() as f64;
    let mse = diff.iter().map(|v| v * v).sum::<f64>() / n;
    let reg_total: f64 = stats
        .iter()
        .map(|s| reg.lambda_k * s.kinetic + reg.lambda_j * s.jacobian)
        .sum();
    let loss = mse + reg_total;
    if !loss.is_finite() {
        return Err(Error::Numerics("non-finite loss".into()));
    }
    if !want_grad {
        return Ok(BatchOutcome {
            loss,
            mse,
            stats,
            grads: None,
        });
    }

    let d_pred = diff * (2.0 / n);
    let mut grads = model.zeros_like();
    for (c, comp) in model.components.iter().enumerate() {
        let pass = &passes[c];
        let d_dec = match &batch.scales[c] {
            Some(scale) => &d_pred * scale,
            None => d_pred.clone(),
        };
        let g = &mut grads.components[c].params;
        g.dec_w = d_dec.dot(&pass.z.t());
        g.dec_b = d_dec.sum_axis(Axis(1));
        let d_z = comp.params.dec_w.t().dot(&d_dec);
        match (pipeline.flow, &comp.params.w) {
            (Flow::Node { .. }, Some(w)) => {
                let tape = pass.tape.as_ref().expect("recorded");
                let kinetic_coef = reg.lambda_k / (tape.n_evals().max(1) * cols) as f64;
                let (mut d_w, _) = integrate_backward(w, tape, d_z, kinetic_coef);
                if let Some(eps) = probes.get(c) {
                    if reg.lambda_j != 0.0 {
                        d_w.scaled_add(reg.lambda_j, &jacobian_norm_grad(w, eps));
                    }
                }
                g.w = Some(d_w);
            }
            (Flow::Direct, Some(_)) => {
                g.w = Some(d_z.dot(&batch.inputs[c].t()));
            }
            _ => {}
        }
    }
    let grads = GradientBundle(grads);
    if !grads.all_finite() {
        return Err(Error::Numerics("non-finite gradient".into()));
    }
    Ok(BatchOutcome {
        loss,
        mse,
        stats,
        grads: Some(grads),
    })
}

/// Loss and exact gradient over the windows at `indices` (mean over
/// windows).
pub fn backward<W: Windows + ?Sized>(
    pipeline: &Pipeline,
    model: &ModelParams,
    windows: &W,
    indices: &[usize],
    reg: RegWeights,
    probes: &Probes,
) -> Result<(f64, GradientBundle)> {
    let batch = pipeline.batch(windows, indices)?;
    let target = stack_targets(windows, indices);
    let out = run_batch(pipeline, model, &batch, &target, reg, probes, true)?;
    Ok((out.loss, out.grads.expect("gradient requested")))
}

/// Forward-only counterpart of [`backward`].
pub fn batch_loss<W: Windows + ?Sized>(
    pipeline: &Pipeline,
    model: &ModelParams,
    windows: &W,
    indices: &[usize],
    reg: RegWeights,
    probes: &Probes,
) -> Result<BatchOutcome> {
    let batch = pipeline.batch(windows, indices)?;
    let target = stack_targets(windows, indices);
    run_batch(pipeline, model, &batch, &target, reg, probes, false)
}
