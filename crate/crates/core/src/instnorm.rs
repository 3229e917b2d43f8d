//! Instance normalization with exact inversion.
//!
//! The default axis standardizes every timestep across its features
//! (`mu_i`, `sigma_i` over `j = 1..F`). `NormAxis::Time` standardizes each
//! feature over the window instead.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormAxis {
    /// One mean/std per timestep, taken over features.
    #[default]
    Feature,
    /// One mean/std per feature, taken over timesteps.
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    pub axis: NormAxis,
    /// Per-timestep statistics for `Feature`, per-feature for `Time`.
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NormState {
    /// Statistics for a `horizon`-row forecast of the window this state was
    /// captured from. Per-timestep statistics carry the last look-back
    /// step forward; per-feature statistics apply unchanged.
    pub fn for_horizon(&self, horizon: usize) -> NormState {
        match self.axis {
            NormAxis::Feature => {
                let mu = *self.mu.last().expect("state has at least one row");
                let sigma = *self.sigma.last().expect("state has at least one row");
                NormState {
                    axis: NormAxis::Feature,
                    mu: vec![mu; horizon],
                    sigma: vec![sigma; horizon],
                }
            }
            NormAxis::Time => self.clone(),
        }
    }

    /// `sigma` and `mu` broadcast to an `rows × cols` matrix.
    pub fn affine(&self, rows: usize, cols: usize) -> (Array2<f64>, Array2<f64>) {
        match self.axis {
            NormAxis::Feature => (
                Array2::from_shape_fn((rows, cols), |(i, _)| self.sigma[i]),
                Array2::from_shape_fn((rows, cols), |(i, _)| self.mu[i]),
            ),
            NormAxis::Time => (
                Array2::from_shape_fn((rows, cols), |(_, j)| self.sigma[j]),
                Array2::from_shape_fn((rows, cols), |(_, j)| self.mu[j]),
            ),
        }
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        let expected = match self.axis {
            NormAxis::Feature => rows,
            NormAxis::Time => cols,
        };
        if self.mu.len() != expected || self.sigma.len() != expected {
            return Err(Error::Norm(format!(
                "state holds {} statistics, matrix is {rows}x{cols} ({:?} axis)",
                self.mu.len(),
                self.axis
            )));
        }
        Ok(())
    }
}

/// Normalizes each row across features, flooring the std at `eps_floor`.
pub fn normalize(c: ArrayView2<'_, f64>, eps_floor: f64) -> (Array2<f64>, NormState) {
    normalize_along(c, NormAxis::Feature, eps_floor)
}

pub fn normalize_along(
    c: ArrayView2<'_, f64>,
    axis: NormAxis,
    eps_floor: f64,
) -> (Array2<f64>, NormState) {
    // Feature axis reduces along columns (Axis(1)) to one value per row.
    let reduce = match axis {
        NormAxis::Feature => Axis(1),
        NormAxis::Time => Axis(0),
    };
    let count = c.len_of(reduce) as f64;
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    for lane in c.lanes(reduce) {
        let m = lane.sum() / count;
        let var = lane.iter().map(|v| (v - m).powi(2)).sum::<f64>() / count;
        mu.push(m);
        sigma.push(var.sqrt().max(eps_floor));
    }
    let state = NormState { axis, mu, sigma };
    let (scale, shift) = state.affine(c.nrows(), c.ncols());
    let normalized = (&c - &shift) / &scale;
    (normalized, state)
}

pub fn denormalize(c_tilde: ArrayView2<'_, f64>, state: &NormState) -> Result<Array2<f64>> {
    state.check_shape(c_tilde.nrows(), c_tilde.ncols())?;
    let (scale, shift) = state.affine(c_tilde.nrows(), c_tilde.ncols());
    Ok(&c_tilde * &scale + &shift)
}
