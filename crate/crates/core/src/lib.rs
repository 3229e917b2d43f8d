//! Long-term time series forecasting with data-driven decomposition,
//! per-timestep instance normalization and linear neural ODEs.
//!
//! The forecasting path for one look-back window is
//! decompose → normalize → integrate → decode → denormalize → recompose,
//! with each stage switched on or off by [`pipeline::Pipeline`]. Training
//! backpropagates through the unrolled fixed-step solver.

pub mod data;
pub mod decomposition;
pub mod eda;
pub mod error;
pub mod harness;
pub mod instnorm;
pub mod metrics;
pub mod node;
pub mod pipeline;
pub mod training;

pub use data::{Panel, SplitSpec, WindowPair, WindowSet, Windows};
pub use decomposition::{decompose, DecompConfig, DecomposedWindow};
pub use eda::{CandidateGrid, EdaOptions, EdaReport};
pub use error::{Error, Result};
pub use instnorm::{NormAxis, NormState};
pub use metrics::EvalResult;
pub use node::{
    ComponentKind, ComponentParams, ModelParams, SolverConfig, SolverMethod, TrajectoryStats,
};
pub use pipeline::{Pipeline, Variant};
pub use training::{TrainConfig, TrainReport};
