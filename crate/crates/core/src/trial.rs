//! Trial solutions that satisfy the initial condition by construction.
//!
//! A candidate solution is `y(t) = ψ₀ + g(t) · W_out · h̃(t)` with `g(t₀) = 0`,
//! so `y(t₀) = ψ₀` for every readout. Stacking the grid gives
//! `Y = Ψ₀ + S W_outᵀ` with `S = G ∘ H`, and by the product rule
//! `Ẏ = Ṡ W_outᵀ` with `Ṡ = Ġ ∘ H + G ∘ Ḣ`.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::StateTrajectory;

/// A pair `(g, ġ)` with `g(0) = 0`. Trial bases evaluate it at `t - t₀`.
pub trait TrialFunction: Send + Sync {
    fn g(&self, t: f64) -> f64;
    fn g_dot(&self, t: f64) -> f64;
}

/// `g(t) = 1 - e^{-t}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpDecay;

impl TrialFunction for ExpDecay {
    fn g(&self, t: f64) -> f64 {
        -(-t).exp_m1()
    }

    fn g_dot(&self, t: f64) -> f64 {
        (-t).exp()
    }
}

/// `(g(t), ġ(t))` for the default trial function.
pub fn g_of_t(t: f64) -> (f64, f64) {
    (ExpDecay.g(t), ExpDecay.g_dot(t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialBasis {
    pub times: Vec<f64>,
    pub dt: f64,
    /// K × (M + 1), `S = G ∘ H`.
    pub s_mat: DMatrix<f64>,
    /// K × (M + 1), `Ṡ = Ġ ∘ H + G ∘ Ḣ`.
    pub s_dot: DMatrix<f64>,
    pub g_vals: Vec<f64>,
    pub g_dot_vals: Vec<f64>,
}

impl TrialBasis {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.s_mat.ncols()
    }

    /// Restrict to a contiguous block of grid rows. The trial function is not
    /// re-anchored, so IC exactness holds only if `rows` starts at 0.
    pub fn rows(&self, rows: Range<usize>) -> TrialBasis {
        let n = rows.len();
        TrialBasis {
            times: self.times[rows.clone()].to_vec(),
            dt: self.dt,
            s_mat: self.s_mat.rows(rows.start, n).into_owned(),
            s_dot: self.s_dot.rows(rows.start, n).into_owned(),
            g_vals: self.g_vals[rows.clone()].to_vec(),
            g_dot_vals: self.g_dot_vals[rows].to_vec(),
        }
    }
}

/// Build `S` and `Ṡ` with the default trial function anchored at the first
/// grid point.
pub fn build_basis(traj: &StateTrajectory) -> TrialBasis {
    build_basis_with(traj, &ExpDecay)
}

pub fn build_basis_with(traj: &StateTrajectory, trial: &dyn TrialFunction) -> TrialBasis {
    let t0 = traj.t_start();
    let k = traj.len();
    let cols = traj.n_features();
    let g_vals: Vec<f64> = traj.times.iter().map(|&t| trial.g(t - t0)).collect();
    let g_dot_vals: Vec<f64> = traj.times.iter().map(|&t| trial.g_dot(t - t0)).collect();

    let mut s_mat = DMatrix::zeros(k, cols);
    let mut s_dot = DMatrix::zeros(k, cols);
    for j in 0..cols {
        for n in 0..k {
            let h = traj.states[(n, j)];
            s_mat[(n, j)] = g_vals[n] * h;
            s_dot[(n, j)] = g_dot_vals[n] * h + g_vals[n] * traj.state_derivs[(n, j)];
        }
    }
    TrialBasis { times: traj.times.clone(), dt: traj.dt, s_mat, s_dot, g_vals, g_dot_vals }
}

/// Output-layer weights, one row per output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights(pub DMatrix<f64>);

impl ReadoutWeights {
    pub fn zeros(outputs: usize, features: usize) -> Self {
        Self(DMatrix::zeros(outputs, features))
    }

    pub fn from_row(row: &[f64]) -> Self {
        Self(DMatrix::from_row_slice(1, row.len(), row))
    }

    pub fn outputs(&self) -> usize {
        self.0.nrows()
    }

    pub fn features(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.0.row(r).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// `y = Ψ₀ + S Wᵀ` and `ẏ = Ṡ Wᵀ`, each K × R.
pub fn evaluate(basis: &TrialBasis, w: &ReadoutWeights, psi0: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if w.features() != basis.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "readout has {} features, basis has {}",
            w.features(),
            basis.n_features()
        )));
    }
    if psi0.len() != w.outputs() {
        return Err(Error::DimensionMismatch(format!(
            "{} initial values for {} outputs",
            psi0.len(),
            w.outputs()
        )));
    }
    let wt = w.0.transpose();
    let mut y = &basis.s_mat * &wt;
    let y_dot = &basis.s_dot * &wt;
    for (r, &p) in psi0.iter().enumerate() {
        y.column_mut(r).add_scalar_mut(p);
    }
    Ok((y, y_dot))
}
