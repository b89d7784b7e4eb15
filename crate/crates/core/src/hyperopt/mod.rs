//! Hyperparameter search.
//!
//! The objective for a candidate set of hyperparameters averages log residual
//! losses over cross-validation windows and a fixed bundle of initial
//! conditions:
//!
//! ```text
//! (1 / nm) Σ_cv Σ_ic [β log L_train + (1 − β) log L_val]
//! ```
//!
//! Each window is a random run of consecutive grid points. Its first part
//! trains the readout and the part right after it validates. The reservoir is
//! propagated once over the whole range so that every window keeps the true
//! initial condition.

pub mod gp;
pub mod turbo;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernoulli::{linearized_characteristic, BernoulliOde};
use crate::error::{Error, Result};
use crate::gd::{random_weights, residuals, train, GdConfig, ResidualProblem};
use crate::linear::{characteristic_matrices, LinearOde, RidgeFactor};
use crate::reservoir::{build_reservoir, propagate, HyperParams};
use crate::system::OdeSystem;
use crate::trial::{build_basis, ReadoutWeights, TrialBasis};

pub use turbo::{minimize, Evaluation, TrustRegion, TurboConfig, TurboResult, SENTINEL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

/// One searched hyperparameter. Bounds are in natural units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub scale: Scale,
}

/// Names accepted in a [`SearchSpace`].
pub const KNOWN_DIMS: [&str; 12] = [
    "dt",
    "n_nodes",
    "connectivity",
    "spectral_radius",
    "regularization",
    "leaking_rate",
    "bias",
    "enet_alpha",
    "enet_strength",
    "spike_threshold",
    "gamma",
    "gamma_cyclic",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("search space is empty".into()));
        }
        for d in &self.dims {
            if !KNOWN_DIMS.contains(&d.name.as_str()) {
                return Err(Error::Config(format!("unknown hyperparameter '{}'", d.name)));
            }
            if !(d.low < d.high) {
                return Err(Error::Config(format!("{}: low {} is not below high {}", d.name, d.low, d.high)));
            }
            if d.scale == Scale::Log10 && d.low <= 0.0 {
                return Err(Error::Config(format!("{}: log-scaled bounds must be positive", d.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Map a unit-cube point to natural units.
    pub fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(u)
            .map(|(d, &u)| match d.scale {
                Scale::Linear => d.low + u * (d.high - d.low),
                Scale::Log10 => 10f64.powf(d.low.log10() + u * (d.high.log10() - d.low.log10())),
            })
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(x)
            .map(|(d, &x)| match d.scale {
                Scale::Linear => (x - d.low) / (d.high - d.low),
                Scale::Log10 => (x.log10() - d.low.log10()) / (d.high.log10() - d.low.log10()),
            })
            .collect()
    }

    /// Overwrite the searched fields of `hp` and `gd` with `x` (natural
    /// units). `n_nodes` is rounded to the nearest integer.
    pub fn apply(&self, x: &[f64], hp: &HyperParams, gd: &GdConfig) -> (HyperParams, GdConfig) {
        let (mut hp, mut gd) = (hp.clone(), gd.clone());
        for (d, &v) in self.dims.iter().zip(x) {
            match d.name.as_str() {
                "dt" => hp.dt = v,
                "n_nodes" => hp.n_nodes = v.round().max(1.0) as usize,
                "connectivity" => hp.connectivity = v,
                "spectral_radius" => hp.spectral_radius = v,
                "regularization" => hp.regularization = v,
                "leaking_rate" => hp.leaking_rate = v,
                "bias" => hp.bias = v,
                "enet_alpha" => gd.enet_alpha = v,
                "enet_strength" => gd.enet_strength = v,
                "spike_threshold" => gd.spike_threshold = v,
                "gamma" => gd.gamma = v,
                "gamma_cyclic" => gd.gamma_cyclic = Some(v),
                _ => {}
            }
        }
        (hp, gd)
    }
}

fn default_val_split() -> f64 {
    0.3
}

fn default_beta() -> f64 {
    0.5
}

fn default_cv_samples() -> usize {
    2
}

fn default_batch() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub n_init: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub max_evals: usize,
    /// Window length in grid points; `None` uses two thirds of the grid.
    #[serde(default)]
    pub subsequence_length: Option<usize>,
    #[serde(default = "default_val_split")]
    pub val_split: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Initial conditions evaluated for every candidate, one vector each.
    pub ic_bundle: Vec<Vec<f64>>,
    #[serde(default = "default_cv_samples")]
    pub cv_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_evals == 0 {
            return bad("max_evals must be positive".into());
        }
        if self.max_evals < self.n_init {
            return bad(format!("max_evals {} is below n_init {}", self.max_evals, self.n_init));
        }
        if self.n_init == 0 || self.batch_size == 0 || self.cv_samples == 0 {
            return bad("n_init, batch_size and cv_samples must be positive".into());
        }
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return bad(format!("val_split {} not in (0, 1)", self.val_split));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} not in [0, 1]", self.beta));
        }
        if self.ic_bundle.is_empty() {
            return bad("ic_bundle is empty".into());
        }
        Ok(())
    }

    pub fn turbo(&self) -> TurboConfig {
        TurboConfig {
            n_init: self.n_init,
            batch_size: self.batch_size,
            max_evals: self.max_evals,
            seed: self.seed,
            ..TurboConfig::default()
        }
    }
}

/// `(1/(nm)) Σ [β log L_train + (1 − β) log L_val]` over `(L_train, L_val)`
/// pairs, or [`SENTINEL`] if any loss is not a positive finite number.
pub fn combine_losses(pairs: &[(f64, f64)], beta: f64) -> f64 {
    if pairs.is_empty() {
        return SENTINEL;
    }
    let mut sum = 0.0;
    for &(lt, lv) in pairs {
        if !(lt.is_finite() && lv.is_finite() && lt > 0.0 && lv > 0.0) {
            return SENTINEL;
        }
        sum += beta * lt.ln() + (1.0 - beta) * lv.ln();
    }
    let v = sum / pairs.len() as f64;
    if v.is_finite() { v } else { SENTINEL }
}

/// A problem whose readout can be trained on one set of grid rows and
/// scored on another.
#[derive(Clone, Debug)]
pub enum CvProblem {
    Linear(LinearOde),
    Bernoulli(BernoulliOde),
    System(OdeSystem),
}

impl CvProblem {
    pub fn t_range(&self) -> (f64, f64) {
        match self {
            CvProblem::Linear(o) => o.t_range,
            CvProblem::Bernoulli(o) => o.t_range,
            CvProblem::System(s) => s.t_range,
        }
    }
}

fn mean_square(problem: &dyn ResidualProblem, basis: &TrialBasis, w: &ReadoutWeights) -> Result<f64> {
    let r = residuals(problem, basis, w)?;
    Ok(r.norm_squared() / r.nrows().max(1) as f64)
}

/// `(L_train, L_val)` for one IC on one window.
fn window_losses(
    problem: &CvProblem,
    basis: &TrialBasis,
    train_rows: Range<usize>,
    val_rows: Range<usize>,
    ic: &[f64],
    hp: &HyperParams,
    gd: &GdConfig,
) -> Result<(f64, f64)> {
    let tb = basis.rows(train_rows);
    let vb = basis.rows(val_rows);
    match problem {
        CvProblem::Linear(ode) => {
            let psi0 = ic[0];
            let cm = characteristic_matrices(ode, &tb, psi0)?;
            let factor = RidgeFactor::new(&cm.d_h, hp.regularization)?;
            let w = factor.solve(&-cm.d_h.tr_mul(&cm.d_0))?;
            let r_train = &cm.d_h * &w + &cm.d_0;
            let cv = characteristic_matrices(ode, &vb, psi0)?;
            let r_val = &cv.d_h * &w + &cv.d_0;
            Ok((r_train.norm_squared() / r_train.len() as f64, r_val.norm_squared() / r_val.len() as f64))
        }
        CvProblem::Bernoulli(ode) => {
            let psi0 = ic[0];
            let cm = linearized_characteristic(ode, &tb, psi0)?;
            let factor = RidgeFactor::new(&cm.d_h, hp.regularization)?;
            let w0 = ReadoutWeights::from_row(factor.solve(&-cm.d_h.tr_mul(&cm.d_0))?.as_slice());
            let p_train = crate::bernoulli::residual_problem(ode, &tb, psi0)?;
            let p_val = crate::bernoulli::residual_problem(ode, &vb, psi0)?;
            let cfg = GdConfig { enet_alpha: 0.0, enet_strength: hp.regularization, ..gd.clone() };
            let (w, _) = train(&p_train, &tb, &w0, &cfg)?;
            Ok((mean_square(&p_train, &tb, &w)?, mean_square(&p_val, &vb, &w)?))
        }
        CvProblem::System(sys) => {
            let sys = sys.with_ic(ic.to_vec())?;
            let w0 = random_weights(sys.dim(), basis.n_features(), gd.seed);
            let (w, _) = train(&sys, &tb, &w0, gd)?;
            Ok((mean_square(&sys, &tb, &w)?, mean_square(&sys, &vb, &w)?))
        }
    }
}

/// Train/validation row ranges for each cross-validation sample. Windows
/// depend only on the grid length and `cfg.seed`.
pub fn cv_windows(k: usize, cfg: &BoConfig) -> Result<Vec<(Range<usize>, Range<usize>)>> {
    let len = cfg.subsequence_length.unwrap_or(2 * k / 3).min(k);
    let n_train = ((1.0 - cfg.val_split) * len as f64).round() as usize;
    if n_train < 2 || len - n_train < 1 {
        return Err(Error::Config(format!("window of {len} points is too short to split")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    Ok((0..cfg.cv_samples)
        .map(|_| {
            let s = rng.random_range(0..=k - len);
            (s..s + n_train, s + n_train..s + len)
        })
        .collect())
}

/// Cross-validated log-loss for one hyperparameter set. Failures of any kind
/// give [`SENTINEL`].
pub fn bo_objective(problem: &CvProblem, hp: &HyperParams, gd: &GdConfig, cfg: &BoConfig) -> f64 {
    let run = || -> Result<f64> {
        let res = build_reservoir(hp)?;
        let (t0, t1) = problem.t_range();
        let basis = build_basis(&propagate(&res, t0, t1)?);
        let mut pairs = Vec::new();
        for (tr, va) in cv_windows(basis.len(), cfg)? {
            for ic in &cfg.ic_bundle {
                pairs.push(window_losses(problem, &basis, tr.clone(), va.clone(), ic, hp, gd)?);
            }
        }
        Ok(combine_losses(&pairs, cfg.beta))
    };
    match run() {
        Ok(v) => v,
        Err(e) => {
            log::debug!("objective failed: {e}");
            SENTINEL
        }
    }
}

/// One row of the optimization history, in natural units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub eval: usize,
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub names: Vec<String>,
    pub best_values: Vec<f64>,
    pub best_objective: f64,
    pub best_hyper: HyperParams,
    pub best_gd: GdConfig,
    pub history: Vec<HistoryRow>,
}

/// Search `space` for the hyperparameters minimizing [`bo_objective`],
/// starting from `base_hp` / `base_gd` for the fields not searched.
pub fn optimize(
    space: &SearchSpace,
    problem: &CvProblem,
    base_hp: &HyperParams,
    base_gd: &GdConfig,
    cfg: &BoConfig,
) -> Result<OptimizeResult> {
    space.validate()?;
    cfg.validate()?;
    let f = |u: &[f64]| {
        let (hp, gd) = space.apply(&space.to_natural(u), base_hp, base_gd);
        if hp.validate().is_err() || gd.validate().is_err() {
            return SENTINEL;
        }
        bo_objective(problem, &hp, &gd, cfg)
    };
    let res = minimize(space.len(), &f, &cfg.turbo());
    let history: Vec<HistoryRow> = res
        .history
        .iter()
        .map(|e| HistoryRow { eval: e.index, values: space.to_natural(&e.x), objective: e.y })
        .collect();
    let best = &history[res.best_index];
    let (best_hyper, best_gd) = space.apply(&best.values, base_hp, base_gd);
    Ok(OptimizeResult {
        names: space.dims.iter().map(|d| d.name.clone()).collect(),
        best_values: best.values.clone(),
        best_objective: best.objective,
        best_hyper,
        best_gd,
        history,
    })
}
