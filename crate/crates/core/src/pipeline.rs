//! Assembly of the forecasting blocks for each model variant.
//!
//! A pipeline turns a look-back window into per-component inputs (after
//! optional decomposition and normalization), runs each component through
//! its flow and decoder, undoes the normalization and sums the results.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Windows;
use crate::decomposition::{decompose, DecompConfig};
use crate::error::{Error, Result};
use crate::instnorm::{normalize_along, NormAxis, NormState, DEFAULT_EPS_FLOOR};
use crate::node::{
    decode_batch, integrate_taped, Component, ComponentKind, ComponentParams, ModelParams,
    SolverConfig, WeightInit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Decomposition, optional normalization, one linear ODE per component.
    LtsfDnode,
    /// One `L → H` linear map on the raw window.
    Linear,
    /// Trend/residual decomposition, linear map per component.
    LinearTr,
    /// Trend/seasonality/residual decomposition, linear map per component.
    LinearTsr,
    /// Linear map on the window minus its last value.
    Nlinear,
    NoDcmp,
    NoNorm,
    /// Full pipeline with the ODE replaced by a direct `L × L` map.
    NoNode,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::LtsfDnode,
        Variant::Linear,
        Variant::LinearTr,
        Variant::LinearTsr,
        Variant::Nlinear,
        Variant::NoDcmp,
        Variant::NoNorm,
        Variant::NoNode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LtsfDnode => "ltsf_dnode",
            Variant::Linear => "linear",
            Variant::LinearTr => "linear_tr",
            Variant::LinearTsr => "linear_tsr",
            Variant::Nlinear => "nlinear",
            Variant::NoDcmp => "no_dcmp",
            Variant::NoNorm => "no_norm",
            Variant::NoNode => "no_node",
        }
    }

    pub fn decomposes(self) -> bool {
        !matches!(self, Variant::Linear | Variant::Nlinear | Variant::NoDcmp)
    }

    /// Whether the variant may apply instance normalization at all.
    pub fn may_normalize(self) -> bool {
        matches!(self, Variant::LtsfDnode | Variant::NoDcmp | Variant::NoNode)
    }

    pub fn uses_node(self) -> bool {
        matches!(self, Variant::LtsfDnode | Variant::NoDcmp | Variant::NoNorm)
    }

    /// `Some(flag)` when the variant fixes seasonality extraction.
    pub fn forced_seasonality(self) -> Option<bool> {
        match self {
            Variant::LinearTr => Some(false),
            Variant::LinearTsr => Some(true),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSettings {
    pub axis: NormAxis,
    pub eps_floor: f64,
}

impl Default for NormSettings {
    fn default() -> Self {
        Self {
            axis: NormAxis::Feature,
            eps_floor: DEFAULT_EPS_FLOOR,
        }
    }
}

/// How a component's state is carried from look-back to decoder input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Flow {
    Node { solver: SolverConfig },
    Direct,
    Identity,
}

/// One stage of the pipeline, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "block")]
pub enum Block {
    SubtractLast,
    Decompose { config: DecompConfig },
    Normalize { components: Vec<ComponentKind>, axis: NormAxis },
    Node { components: Vec<ComponentKind>, solver: SolverConfig },
    DirectMap { components: Vec<ComponentKind> },
    Decode { components: Vec<ComponentKind> },
    Denormalize { components: Vec<ComponentKind> },
    Recompose,
    AddLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub variant: Variant,
    pub seq_len: usize,
    pub pred_len: usize,
    pub decomposition: Option<DecompConfig>,
    pub normalization: Option<NormSettings>,
    pub flow: Flow,
    pub subtract_last: bool,
}

/// Per-window inputs after decomposition and normalization.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub inputs: Vec<Array2<f64>>,
    /// Horizon-length normalization state, per component.
    pub states: Vec<Option<NormState>>,
    pub offset: Option<Array1<f64>>,
}

/// A batch of windows laid out column-wise: window `b`, feature `j` is
/// column `b·F + j` of every matrix.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub inputs: Vec<Array2<f64>>,
    /// DENORM scale `σ` per component, `H × N`.
    pub scales: Vec<Option<Array2<f64>>>,
    /// Everything added after decoding: DENORM shifts plus the NLinear offset.
    pub base: Array2<f64>,
}

impl Pipeline {
    pub fn new(
        variant: Variant,
        seq_len: usize,
        pred_len: usize,
        decomposition: Option<DecompConfig>,
        normalization: Option<NormSettings>,
        solver: SolverConfig,
    ) -> Result<Self> {
        if seq_len == 0 || pred_len == 0 {
            return Err(Error::Config("look-back and horizon must be >= 1".into()));
        }
        if variant.decomposes() != decomposition.is_some() {
            return Err(Error::Config(format!(
                "variant {variant} {} decomposition",
                if variant.decomposes() { "requires" } else { "forbids" }
            )));
        }
        if normalization.is_some() && !variant.may_normalize() {
            return Err(Error::Config(format!(
                "variant {variant} does not use instance normalization"
            )));
        }
        if let (Some(forced), Some(d)) = (variant.forced_seasonality(), &decomposition) {
            if d.extract_seasonality != forced {
                return Err(Error::Config(format!(
                    "variant {variant} requires extract_seasonality = {forced}"
                )));
            }
        }
        if let Some(d) = &decomposition {
            d.validate(seq_len)?;
        }
        let flow = if variant.uses_node() {
            solver.validate()?;
            Flow::Node { solver }
        } else if variant == Variant::NoNode {
            Flow::Direct
        } else {
            Flow::Identity
        };
        Ok(Self {
            variant,
            seq_len,
            pred_len,
            decomposition,
            normalization,
            flow,
            subtract_last: variant == Variant::Nlinear,
        })
    }

    pub fn components(&self) -> Vec<ComponentKind> {
        match &self.decomposition {
            None => vec![ComponentKind::Whole],
            Some(d) if d.extract_seasonality => vec![
                ComponentKind::Trend,
                ComponentKind::Seasonality,
                ComponentKind::Residual,
            ],
            Some(_) => vec![ComponentKind::Trend, ComponentKind::Residual],
        }
    }

    /// Components passed through NORM/DENORM; seasonality never is.
    pub fn normalized_components(&self) -> Vec<ComponentKind> {
        if self.normalization.is_none() {
            return Vec::new();
        }
        self.components()
            .into_iter()
            .filter(|k| *k != ComponentKind::Seasonality)
            .collect()
    }

    pub fn blocks(&self) -> Vec<Block> {
        let components = self.components();
        let normalized = self.normalized_components();
        let mut blocks = Vec::new();
        if self.subtract_last {
            blocks.push(Block::SubtractLast);
        }
        if let Some(config) = self.decomposition {
            blocks.push(Block::Decompose { config });
        }
        if let Some(settings) = &self.normalization {
            blocks.push(Block::Normalize {
                components: normalized.clone(),
                axis: settings.axis,
            });
        }
        match self.flow {
            Flow::Node { solver } => blocks.push(Block::Node {
                components: components.clone(),
                solver,
            }),
            Flow::Direct => blocks.push(Block::DirectMap {
                components: components.clone(),
            }),
            Flow::Identity => {}
        }
        blocks.push(Block::Decode {
            components: components.clone(),
        });
        if !normalized.is_empty() {
            blocks.push(Block::Denormalize {
                components: normalized,
            });
        }
        if components.len() > 1 {
            blocks.push(Block::Recompose);
        }
        if self.subtract_last {
            blocks.push(Block::AddLast);
        }
        blocks
    }

    pub fn init_model<R: Rng>(&self, rng: &mut R) -> ModelParams {
        let w = match self.flow {
            Flow::Node { .. } => WeightInit::Zeros,
            Flow::Direct => WeightInit::Identity,
            Flow::Identity => WeightInit::None,
        };
        ModelParams {
            components: self
                .components()
                .into_iter()
                .map(|kind| Component {
                    kind,
                    params: ComponentParams::init(self.seq_len, self.pred_len, w, rng),
                })
                .collect(),
        }
    }

    pub fn check_model(&self, model: &ModelParams) -> Result<()> {
        let kinds: Vec<_> = model.components.iter().map(|c| c.kind).collect();
        if kinds != self.components() {
            return Err(Error::Config(format!(
                "model components {kinds:?} do not match pipeline {:?}",
                self.components()
            )));
        }
        let needs_w = !matches!(self.flow, Flow::Identity);
        for c in &model.components {
            c.params.validate()?;
            if c.params.seq_len() != self.seq_len || c.params.pred_len() != self.pred_len {
                return Err(Error::Config(format!(
                    "{} decoder is {:?}, pipeline is {} → {}",
                    c.kind.name(),
                    c.params.dec_w.dim(),
                    self.seq_len,
                    self.pred_len
                )));
            }
            if c.params.w.is_some() != needs_w {
                return Err(Error::Config(format!(
                    "{} weight presence does not match flow {:?}",
                    c.kind.name(),
                    self.flow
                )));
            }
        }
        Ok(())
    }

    pub fn prepare(&self, x: ArrayView2<'_, f64>) -> Result<PreparedWindow> {
        if x.nrows() != self.seq_len {
            return Err(Error::Config(format!(
                "window has {} rows, pipeline expects {}",
                x.nrows(),
                self.seq_len
            )));
        }
        let (x, offset) = if self.subtract_last {
            let last = x.row(self.seq_len - 1).to_owned();
            (&x - &last, Some(last))
        } else {
            (x.to_owned(), None)
        };
        let raw: Vec<(ComponentKind, Array2<f64>)> = match &self.decomposition {
            None => vec![(ComponentKind::Whole, x)],
            Some(config) => {
                let d = decompose(x.view(), config)?;
                let mut parts = vec![(ComponentKind::Trend, d.trend)];
                if config.extract_seasonality {
                    parts.push((ComponentKind::Seasonality, d.seasonality));
                }
                parts.push((ComponentKind::Residual, d.residual));
                parts
            }
        };
        let mut inputs = Vec::with_capacity(raw.len());
        let mut states = Vec::with_capacity(raw.len());
        for (kind, comp) in raw {
            match &self.normalization {
                Some(settings) if kind != ComponentKind::Seasonality => {
                    let (normed, state) =
                        normalize_along(comp.view(), settings.axis, settings.eps_floor);
                    inputs.push(normed);
                    states.push(Some(state.for_horizon(self.pred_len)));
                }
                _ => {
                    inputs.push(comp);
                    states.push(None);
                }
            }
        }
        Ok(PreparedWindow {
            inputs,
            states,
            offset,
        })
    }

    pub(crate) fn batch<W: Windows + ?Sized>(&self, windows: &W, indices: &[usize]) -> Result<Batch> {
        let n_windows = indices.len();
        let n_features = match indices.first() {
            Some(&i) => windows.x(i).ncols(),
            None => return Err(Error::Config("empty batch".into())),
        };
        let cols = n_windows * n_features;
        let n_comp = self.components().len();
        let mut inputs = vec![Array2::zeros((self.seq_len, cols)); n_comp];
        let mut scales: Vec<Option<Array2<f64>>> = self
            .components()
            .iter()
            .map(|k| {
                self.normalized_components()
                    .contains(k)
                    .then(|| Array2::zeros((self.pred_len, cols)))
            })
            .collect();
        let mut base = Array2::zeros((self.pred_len, cols));
        for (b, &i) in indices.iter().enumerate() {
            let prepared = self.prepare(windows.x(i))?;
            let span = s![.., b * n_features..(b + 1) * n_features];
            for (c, input) in prepared.inputs.iter().enumerate() {
                inputs[c].slice_mut(span).assign(input);
                if let (Some(state), Some(scale)) = (&prepared.states[c], scales[c].as_mut()) {
                    let (sigma, mu) = state.affine(self.pred_len, n_features);
                    scale.slice_mut(span).assign(&sigma);
                    let mut base_block = base.slice_mut(span);
                    base_block += &mu;
                }
            }
            if let Some(offset) = &prepared.offset {
                let mut base_block = base.slice_mut(span);
                base_block += &offset.view().insert_axis(Axis(0));
            }
        }
        Ok(Batch {
            inputs,
            scales,
            base,
        })
    }

    /// Runs the flow of one component on a batch of columns.
    pub(crate) fn flow_forward(
        &self,
        params: &ComponentParams,
        input: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        match (self.flow, &params.w) {
            (Flow::Identity, _) => Ok(input.clone()),
            (Flow::Direct, Some(w)) => Ok(w.dot(input)),
            (Flow::Node { solver }, Some(w)) => {
                Ok(integrate_taped(w, input.view(), &solver, false)?.0)
            }
            (_, None) => Err(Error::Config("component has no flow weight".into())),
        }
    }

    /// Forecast for a batch, `H × (B·F)`.
    pub(crate) fn predict_batch(&self, model: &ModelParams, batch: &Batch) -> Result<Array2<f64>> {
        let mut out = batch.base.clone();
        for (c, comp) in model.components.iter().enumerate() {
            let z = self.flow_forward(&comp.params, &batch.inputs[c])?;
            let decoded = decode_batch(&comp.params, z.view());
            match &batch.scales[c] {
                Some(scale) => out += &(&decoded * scale),
                None => out += &decoded,
            }
        }
        Ok(out)
    }

    /// Forecast `H × F` for one look-back window.
    pub fn predict(&self, model: &ModelParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let windows = [crate::data::WindowPair {
            x: x.to_owned(),
            y: Array2::zeros((self.pred_len, x.ncols())),
            start_index: 0,
        }];
        let batch = self.batch(&windows[..], &[0])?;
        self.predict_batch(model, &batch)
    }
}

/// Splits a column-batched `H × (B·F)` matrix back into per-window blocks.
pub(crate) fn window_block(m: &Array2<f64>, b: usize, n_features: usize) -> ArrayView2<'_, f64> {
    m.slice(s![.., b * n_features..(b + 1) * n_features])
}
