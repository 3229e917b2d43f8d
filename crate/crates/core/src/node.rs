//! Linear neural ODE block: `dz/dt = W z` integrated over `[0, T]` with a
//! fixed-step explicit solver, followed by an `L → H` decoding layer.
//!
//! Every feature column of a component is integrated through the same
//! `W`, so a batch of windows is handled as one `L × N` matrix.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    #[default]
    Euler,
    Rk4,
}

impl SolverMethod {
    pub fn evals_per_step(self) -> usize {
        match self {
            SolverMethod::Euler => 1,
            SolverMethod::Rk4 => 4,
        }
    }
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(SolverMethod::Euler),
            "rk4" => Ok(SolverMethod::Rk4),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub n_steps: usize,
    pub terminal_time: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Euler,
            n_steps: 2,
            terminal_time: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn new(method: SolverMethod, n_steps: usize) -> Self {
        Self {
            method,
            n_steps,
            terminal_time: 1.0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.terminal_time / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.step_size();
        if self.n_steps == 0 || !(s > 0.0 && s <= 1.0) {
            return Err(Error::Config(format!(
                "step size {s} outside (0, 1] (n_steps = {}, T = {})",
                self.n_steps, self.terminal_time
            )));
        }
        Ok(())
    }
}

/// Regularizer measurements collected along one integration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryStats {
    /// Mean of `||f(z)||²` over evaluation points and columns.
    pub kinetic: f64,
    /// Mean of `||εᵀ ∇f||` over evaluation points.
    pub jacobian: f64,
    pub eps_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    /// The undecomposed window.
    Whole,
    Trend,
    Seasonality,
    Residual,
}

impl ComponentKind {
    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Whole => "whole",
            ComponentKind::Trend => "trend",
            ComponentKind::Seasonality => "seasonality",
            ComponentKind::Residual => "residual",
        }
    }
}

/// Weights for one component: the ODE (or direct) map `w` when the
/// pipeline uses one, and the decoder `dec_w · z + dec_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub w: Option<Array2<f64>>,
    pub dec_w: Array2<f64>,
    pub dec_b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInit {
    None,
    Zeros,
    Identity,
}

impl ComponentParams {
    pub fn new(w: Option<Array2<f64>>, dec_w: Array2<f64>, dec_b: Array1<f64>) -> Result<Self> {
        let params = Self { w, dec_w, dec_b };
        params.validate()?;
        Ok(params)
    }

    /// Decoder entries are drawn uniformly from `±1/√L`, the bias is zero.
    pub fn init<R: Rng>(seq_len: usize, pred_len: usize, w: WeightInit, rng: &mut R) -> Self {
        let bound = 1.0 / (seq_len as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let dec_w = Array2::from_shape_fn((pred_len, seq_len), |_| rng.sample(dist));
        let w = match w {
            WeightInit::None => None,
            WeightInit::Zeros => Some(Array2::zeros((seq_len, seq_len))),
            WeightInit::Identity => Some(Array2::eye(seq_len)),
        };
        Self {
            w,
            dec_w,
            dec_b: Array1::zeros(pred_len),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.dec_w.ncols()
    }

    pub fn pred_len(&self) -> usize {
        self.dec_w.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, l) = self.dec_w.dim();
        if self.dec_b.len() != h {
            return Err(Error::Config(format!(
                "decoder bias has {} entries for {h} outputs",
                self.dec_b.len()
            )));
        }
        if let Some(w) = &self.w {
            if w.dim() != (l, l) {
                return Err(Error::Config(format!(
                    "ODE weight is {:?}, expected ({l}, {l})",
                    w.dim()
                )));
            }
        }
        if !self.all_finite() {
            return Err(Error::Numerics("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().flat_map(|w| w.iter()).all(|v| v.is_finite())
            && self.dec_w.iter().all(|v| v.is_finite())
            && self.dec_b.iter().all(|v| v.is_finite())
    }

    pub fn count(&self) -> usize {
        self.w.as_ref().map_or(0, |w| w.len()) + self.dec_w.len() + self.dec_b.len()
    }

    fn ode_weight(&self) -> Result<&Array2<f64>> {
        self.w
            .as_ref()
            .ok_or_else(|| Error::Config("component has no ODE weight".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub kind: ComponentKind,
    pub params: ComponentParams,
}

/// Parameters of every component the pipeline forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub components: Vec<Component>,
}

impl ModelParams {
    pub fn get(&self, kind: ComponentKind) -> Option<&ComponentParams> {
        self.components
            .iter()
            .find(|c| c.kind == kind)
            .map(|c| &c.params)
    }

    pub fn trend(&self) -> Option<&ComponentParams> {
        self.get(ComponentKind::Trend)
    }

    pub fn seasonality(&self) -> Option<&ComponentParams> {
        self.get(ComponentKind::Seasonality)
    }

    pub fn residual(&self) -> Option<&ComponentParams> {
        self.get(ComponentKind::Residual)
    }

    pub fn all_finite(&self) -> bool {
        self.components.iter().all(|c| c.params.all_finite())
    }

    /// Same structure with every entry zero.
    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Every parameter tensor as a flat slice, in a fixed order
    /// (component order, then `w`, `dec_w`, `dec_b`).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for c in &self.components {
            if let Some(w) = &c.params.w {
                out.push(w.as_slice().expect("standard layout"));
            }
            out.push(c.params.dec_w.as_slice().expect("standard layout"));
            out.push(c.params.dec_b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for c in &mut self.components {
            if let Some(w) = &mut c.params.w {
                out.push(w.as_slice_mut().expect("standard layout"));
            }
            out.push(c.params.dec_w.as_slice_mut().expect("standard layout"));
            out.push(c.params.dec_b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

pub fn count_parameters(model: &ModelParams) -> usize {
    model.components.iter().map(|c| c.params.count()).sum()
}

/// `f(z) = W z`; autonomous, so no time argument.
pub fn ode_fn(params: &ComponentParams, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let w = params.ode_weight()?;
    if z.len() != w.ncols() {
        return Err(Error::Config(format!(
            "state has {} entries, W is {:?}",
            z.len(),
            w.dim()
        )));
    }
    Ok(w.dot(&z))
}

pub fn decode(params: &ComponentParams, z_t: ArrayView1<'_, f64>) -> Array1<f64> {
    params.dec_w.dot(&z_t) + &params.dec_b
}

/// Batched decoder: every column of `z_t` (L × N) maps to a column of the
/// H × N result.
pub fn decode_batch(params: &ComponentParams, z_t: ArrayView2<'_, f64>) -> Array2<f64> {
    params.dec_w.dot(&z_t) + &params.dec_b.view().insert_axis(Axis(1))
}

/// Hutchinson probe `ε ~ N(0, I)` of length `dim`, reproducible from `seed`.
pub fn draw_probe(seed: u64, dim: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(dim, |_| rng.sample(StandardNormal))
}

/// One evaluation `k = W u` along the trajectory.
#[derive(Debug, Clone)]
pub(crate) struct StageEval {
    pub input: Array2<f64>,
    pub output: Array2<f64>,
}

/// Recorded forward pass, enough to backpropagate through the solver.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    pub solver: SolverConfig,
    /// Empty unless recording was requested.
    pub evals: Vec<StageEval>,
    sq_sum: f64,
    n_evals: usize,
    cols: usize,
}

impl Tape {
    /// Mean of `||f(z)||²` over evaluation points and columns.
    pub fn kinetic(&self) -> f64 {
        self.sq_sum / (self.n_evals.max(1) * self.cols.max(1)) as f64
    }

    pub fn n_evals(&self) -> usize {
        self.n_evals
    }
}

fn ensure_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerics(format!("non-finite value in {what}")))
    }
}

/// Integrates every column of `z0` from 0 to the terminal time.
pub(crate) fn integrate_taped(
    w: &Array2<f64>,
    z0: ArrayView2<'_, f64>,
    solver: &SolverConfig,
    record: bool,
) -> Result<(Array2<f64>, Tape)> {
    solver.validate()?;
    let s = solver.step_size();
    let mut tape = Tape {
        solver: *solver,
        evals: Vec::new(),
        sq_sum: 0.0,
        n_evals: 0,
        cols: z0.ncols(),
    };
    let eval = |u: Array2<f64>, tape: &mut Tape| -> Array2<f64> {
        let k = w.dot(&u);
        tape.n_evals += 1;
        tape.sq_sum += k.iter().map(|v| v * v).sum::<f64>();
        if record {
            tape.evals.push(StageEval {
                input: u,
                output: k.clone(),
            });
        }
        k
    };
    let mut z = z0.to_owned();
    for _ in 0..solver.n_steps {
        match solver.method {
            SolverMethod::Euler => {
                let k = eval(z.clone(), &mut tape);
                z.scaled_add(s, &k);
            }
            SolverMethod::Rk4 => {
                let k1 = eval(z.clone(), &mut tape);
                let k2 = eval(&z + &(&k1 * (s / 2.0)), &mut tape);
                let k3 = eval(&z + &(&k2 * (s / 2.0)), &mut tape);
                let k4 = eval(&z + &(&k3 * s), &mut tape);
                z.scaled_add(s / 6.0, &k1);
                z.scaled_add(s / 3.0, &k2);
                z.scaled_add(s / 3.0, &k3);
                z.scaled_add(s / 6.0, &k4);
            }
        }
        ensure_finite(&z, "ODE state")?;
    }
    Ok((z, tape))
}

/// Reverse pass through [`integrate_taped`]. `d_out` is the adjoint of the
/// terminal state; `kinetic_coef` is the loss weight on the summed squared
/// stage outputs. Returns `(dW, dz0)`.
pub(crate) fn integrate_backward(
    w: &Array2<f64>,
    tape: &Tape,
    d_out: Array2<f64>,
    kinetic_coef: f64,
) -> (Array2<f64>, Array2<f64>) {
    let s = tape.solver.step_size();
    let per_step = tape.solver.method.evals_per_step();
    let mut d_w = Array2::zeros(w.raw_dim());
    let mut d_z = d_out;
    let wt = w.t();
    for step in tape.evals.chunks(per_step).rev() {
        match tape.solver.method {
            SolverMethod::Euler => {
                let e = &step[0];
                let mut d_k = &d_z * s;
                d_k.scaled_add(2.0 * kinetic_coef, &e.output);
                d_w += &d_k.dot(&e.input.t());
                d_z += &wt.dot(&d_k);
            }
            SolverMethod::Rk4 => {
                let weights = [s / 6.0, s / 3.0, s / 3.0, s / 6.0];
                // How stage i+1's input depends on stage i's output.
                let feed = [s / 2.0, s / 2.0, s];
                let mut d_next_input: Option<Array2<f64>> = None;
                let d_z_in = d_z.clone();
                for i in (0..4).rev() {
                    let e = &step[i];
                    let mut d_k = &d_z_in * weights[i];
                    d_k.scaled_add(2.0 * kinetic_coef, &e.output);
                    if let Some(d_u) = &d_next_input {
                        d_k.scaled_add(feed[i], d_u);
                    }
                    d_w += &d_k.dot(&e.input.t());
                    let d_u = wt.dot(&d_k);
                    d_z += &d_u;
                    d_next_input = Some(d_u);
                }
            }
        }
    }
    (d_w, d_z)
}

/// `||Wᵀ ε||`, the directional Jacobian norm of a linear vector field.
pub(crate) fn jacobian_norm(w: &Array2<f64>, probe: &Array1<f64>) -> f64 {
    w.t().dot(probe).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gradient of [`jacobian_norm`] with respect to `W` (zero at the kink).
pub(crate) fn jacobian_norm_grad(w: &Array2<f64>, probe: &Array1<f64>) -> Array2<f64> {
    let v = w.t().dot(probe);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Array2::zeros(w.raw_dim());
    }
    let col = probe.view().insert_axis(Axis(1));
    let row = (v / norm).insert_axis(Axis(0));
    col.dot(&row)
}

/// Integrates an `L × N` block of states and reports trajectory statistics.
pub fn integrate(
    params: &ComponentParams,
    z0: ArrayView2<'_, f64>,
    solver: &SolverConfig,
    eps_seed: u64,
) -> Result<(Array2<f64>, TrajectoryStats)> {
    let w = params.ode_weight()?;
    if z0.nrows() != w.ncols() {
        return Err(Error::Config(format!(
            "state has {} rows, W is {:?}",
            z0.nrows(),
            w.dim()
        )));
    }
    let (z, tape) = integrate_taped(w, z0, solver, false)?;
    let kinetic = tape.kinetic();
    let probe = draw_probe(eps_seed, w.nrows());
    Ok((
        z,
        TrajectoryStats {
            kinetic,
            jacobian: jacobian_norm(w, &probe),
            eps_seed,
        },
    ))
}

fn integrate_vector(
    params: &ComponentParams,
    z0: ArrayView1<'_, f64>,
    method: SolverMethod,
    n_steps: usize,
    eps_seed: u64,
) -> Result<(Array1<f64>, TrajectoryStats)> {
    let solver = SolverConfig::new(method, n_steps);
    let (z, stats) = integrate(params, z0.insert_axis(Axis(1)), &solver, eps_seed)?;
    Ok((z.remove_axis(Axis(1)), stats))
}

/// Explicit Euler: `z ← z + s·f(z)`, `n_steps` times with `s = 1/n_steps`.
pub fn euler_integrate(
    params: &ComponentParams,
    z0: ArrayView1<'_, f64>,
    n_steps: usize,
    eps_seed: u64,
) -> Result<(Array1<f64>, TrajectoryStats)> {
    integrate_vector(params, z0, SolverMethod::Euler, n_steps, eps_seed)
}

/// Classical four-stage Runge-Kutta over `[0, 1]`.
pub fn rk4_integrate(
    params: &ComponentParams,
    z0: ArrayView1<'_, f64>,
    n_steps: usize,
    eps_seed: u64,
) -> Result<(Array1<f64>, TrajectoryStats)> {
    integrate_vector(params, z0, SolverMethod::Rk4, n_steps, eps_seed)
}

/// Integrates each feature column of an `L × F` component and decodes it
/// to `H × F`.
pub fn forward_component(
    params: &ComponentParams,
    component: ArrayView2<'_, f64>,
    solver: &SolverConfig,
    eps_seed: u64,
) -> Result<(Array2<f64>, TrajectoryStats)> {
    let (z_t, stats) = integrate(params, component, solver, eps_seed)?;
    Ok((decode_batch(params, z_t.view()), stats))
}

const CHECKPOINT_FORMAT: &str = "dnode-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentRecord {
    kind: ComponentKind,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    components: Vec<ComponentRecord>,
}

fn tensor2(name: &str, m: &Array2<f64>) -> TensorRecord {
    TensorRecord {
        name: name.into(),
        shape: vec![m.nrows(), m.ncols()],
        values: m.iter().copied().collect(),
    }
}

impl TensorRecord {
    fn matrix(&self) -> Result<Array2<f64>> {
        match self.shape.as_slice() {
            [r, c] => Array2::from_shape_vec((*r, *c), self.values.clone())
                .map_err(|e| Error::Config(format!("tensor {}: {e}", self.name))),
            other => Err(Error::Config(format!(
                "tensor {} has shape {other:?}, expected 2-D",
                self.name
            ))),
        }
    }

    fn vector(&self) -> Result<Array1<f64>> {
        match self.shape.as_slice() {
            [n] if *n == self.values.len() => Ok(Array1::from(self.values.clone())),
            other => Err(Error::Config(format!(
                "tensor {} has shape {other:?} with {} values",
                self.name,
                self.values.len()
            ))),
        }
    }
}

impl ModelParams {
    /// JSON manifest: component → named tensors with shape and row-major
    /// values. Floats are written shortest-roundtrip, so loading restores
    /// every bit.
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let components = self
            .components
            .iter()
            .map(|c| {
                let mut tensors = Vec::new();
                if let Some(w) = &c.params.w {
                    tensors.push(tensor2("w", w));
                }
                tensors.push(tensor2("dec_w", &c.params.dec_w));
                tensors.push(TensorRecord {
                    name: "dec_b".into(),
                    shape: vec![c.params.dec_b.len()],
                    values: c.params.dec_b.to_vec(),
                });
                ComponentRecord {
                    kind: c.kind,
                    tensors,
                }
            })
            .collect();
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            components,
        };
        Ok(serde_json::to_string(&manifest)?)
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(json)?;
        if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                manifest.format, manifest.version
            )));
        }
        let mut components = Vec::new();
        for record in manifest.components {
            let find = |name: &str| record.tensors.iter().find(|t| t.name == name);
            let w = find("w").map(TensorRecord::matrix).transpose()?;
            let dec_w = find("dec_w")
                .ok_or_else(|| Error::Config("checkpoint component lacks dec_w".into()))?
                .matrix()?;
            let dec_b = find("dec_b")
                .ok_or_else(|| Error::Config("checkpoint component lacks dec_b".into()))?
                .vector()?;
            components.push(Component {
                kind: record.kind,
                params: ComponentParams::new(w, dec_w, dec_b)?,
            });
        }
        Ok(ModelParams { components })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&json)
    }
}
