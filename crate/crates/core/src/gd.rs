//! Gradient-descent training of the readout layer.
//!
//! The readout enters the trial solution linearly, so for residuals
//! `r_i(t, y, ẏ)` the gradient of `Σ_n Σ_i r_i²` with respect to row `r` of
//! the weights is
//!
//! ```text
//! Σ_n Σ_i 2 r_i (∂r_i/∂y_r · S[n,·] + ∂r_i/∂ẏ_r · Ṡ[n,·])
//! ```
//!
//! which reduces to two matrix products per epoch. The trainer minimizes the
//! per-grid-point objective `J = (Σ r² + reg) / K`, so learning rates and spike
//! thresholds do not depend on the grid length.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{evaluate, ReadoutWeights, TrialBasis};

/// Residual values and their partial derivatives at one grid point.
#[derive(Clone, Debug)]
pub struct ResidualEval {
    outputs: usize,
    pub r: Vec<f64>,
    /// Row-major `equations × outputs`.
    pub dr_dy: Vec<f64>,
    /// Row-major `equations × outputs`.
    pub dr_dydot: Vec<f64>,
}

impl ResidualEval {
    pub fn new(equations: usize, outputs: usize) -> Self {
        Self {
            outputs,
            r: vec![0.0; equations],
            dr_dy: vec![0.0; equations * outputs],
            dr_dydot: vec![0.0; equations * outputs],
        }
    }

    pub fn clear(&mut self) {
        self.r.fill(0.0);
        self.dr_dy.fill(0.0);
        self.dr_dydot.fill(0.0);
    }

    #[inline]
    pub fn set(&mut self, eq: usize, r: f64) {
        self.r[eq] = r;
    }

    #[inline]
    pub fn set_dy(&mut self, eq: usize, output: usize, v: f64) {
        self.dr_dy[eq * self.outputs + output] = v;
    }

    #[inline]
    pub fn set_dydot(&mut self, eq: usize, output: usize, v: f64) {
        self.dr_dydot[eq * self.outputs + output] = v;
    }
}

/// A set of residual equations whose squared sum is minimized over the grid.
pub trait ResidualProblem: Sync {
    /// Number of readout rows.
    fn outputs(&self) -> usize;
    /// Number of residual equations, penalty terms included.
    fn equations(&self) -> usize;
    /// Initial values, one per output.
    fn psi0(&self) -> &[f64];
    /// Fill `out` with residuals and partials at grid point `n`, time `t`.
    fn eval(&self, n: usize, t: f64, y: &[f64], y_dot: &[f64], out: &mut ResidualEval);
}

/// Elastic-net penalty `ω (ρ ‖w‖₁ + (1 − ρ) ‖w‖₂²)` over every weight
/// except the bias column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElasticNet {
    /// ρ, the L1 share.
    pub alpha: f64,
    /// ω, the overall strength.
    pub strength: f64,
}

impl ElasticNet {
    pub fn none() -> Self {
        Self { alpha: 0.0, strength: 0.0 }
    }

    pub fn ridge(lambda: f64) -> Self {
        Self { alpha: 0.0, strength: lambda }
    }

    pub fn value(&self, w: &DMatrix<f64>) -> f64 {
        if self.strength == 0.0 {
            return 0.0;
        }
        let body = w.columns(1, w.ncols().saturating_sub(1));
        let l1: f64 = body.iter().map(|v| v.abs()).sum();
        let l2: f64 = body.iter().map(|v| v * v).sum();
        self.strength * (self.alpha * l1 + (1.0 - self.alpha) * l2)
    }

    /// Adds the (sub)gradient to `grad`; the L1 part uses `sign(0) = 0`.
    pub fn add_gradient(&self, w: &DMatrix<f64>, grad: &mut DMatrix<f64>) {
        if self.strength == 0.0 || w.ncols() < 2 {
            return;
        }
        let cols = w.ncols() - 1;
        for (g, &v) in grad.columns_mut(1, cols).iter_mut().zip(w.columns(1, cols).iter()) {
            let sign = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            *g += self.strength * (self.alpha * sign + 2.0 * (1.0 - self.alpha) * v);
        }
    }
}

/// Residuals of `problem` on every grid row: `K × equations`.
pub fn residuals(problem: &dyn ResidualProblem, basis: &TrialBasis, w: &ReadoutWeights) -> Result<DMatrix<f64>> {
    let (y, y_dot) = evaluate(basis, w, problem.psi0())?;
    let outputs = problem.outputs();
    let mut out = ResidualEval::new(problem.equations(), outputs);
    let mut res = DMatrix::zeros(basis.len(), problem.equations());
    let mut yn = vec![0.0; outputs];
    let mut ydn = vec![0.0; outputs];
    for n in 0..basis.len() {
        for r in 0..outputs {
            yn[r] = y[(n, r)];
            ydn[r] = y_dot[(n, r)];
        }
        out.clear();
        problem.eval(n, basis.times[n], &yn, &ydn, &mut out);
        for (i, &v) in out.r.iter().enumerate() {
            res[(n, i)] = v;
        }
    }
    Ok(res)
}

/// `L = Σ_n Σ_i r_i² + reg(w)` and its gradient with respect to `w`.
pub fn loss_and_grad(
    problem: &dyn ResidualProblem,
    basis: &TrialBasis,
    w: &ReadoutWeights,
    reg: &ElasticNet,
) -> Result<(f64, DMatrix<f64>)> {
    let outputs = problem.outputs();
    if w.outputs() != outputs {
        return Err(Error::DimensionMismatch(format!("{} readout rows for {outputs} outputs", w.outputs())));
    }
    let (y, y_dot) = evaluate(basis, w, problem.psi0())?;
    let k = basis.len();
    let eqs = problem.equations();
    let mut out = ResidualEval::new(eqs, outputs);
    let mut coef_y = DMatrix::zeros(k, outputs);
    let mut coef_yd = DMatrix::zeros(k, outputs);
    let mut yn = vec![0.0; outputs];
    let mut ydn = vec![0.0; outputs];
    let mut loss = 0.0;
    for n in 0..k {
        for r in 0..outputs {
            yn[r] = y[(n, r)];
            ydn[r] = y_dot[(n, r)];
        }
        out.clear();
        problem.eval(n, basis.times[n], &yn, &ydn, &mut out);
        for i in 0..eqs {
            let ri = out.r[i];
            loss += ri * ri;
            for r in 0..outputs {
                coef_y[(n, r)] += 2.0 * ri * out.dr_dy[i * outputs + r];
                coef_yd[(n, r)] += 2.0 * ri * out.dr_dydot[i * outputs + r];
            }
        }
    }
    loss += reg.value(&w.0);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut grad = (basis.s_mat.tr_mul(&coef_y) + basis.s_dot.tr_mul(&coef_yd)).transpose();
    reg.add_gradient(&w.0, &mut grad);
    Ok((loss, grad))
}

/// Basis rows stored contiguously, `S[n,·]` followed by `Ṡ[n,·]`, so that one
/// pass over the grid computes the outputs, the residuals and the gradient.
struct RowMajorBasis {
    features: usize,
    data: Vec<f64>,
}

impl RowMajorBasis {
    fn new(basis: &TrialBasis) -> Self {
        let f = basis.n_features();
        let mut data = Vec::with_capacity(2 * f * basis.len());
        for n in 0..basis.len() {
            data.extend(basis.s_mat.row(n).iter());
            data.extend(basis.s_dot.row(n).iter());
        }
        Self { features: f, data }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Same value as [`objective`], computed in a single sweep over the rows.
fn fused_objective(
    problem: &dyn ResidualProblem,
    times: &[f64],
    rows: &RowMajorBasis,
    w: &ReadoutWeights,
    reg: &ElasticNet,
) -> Result<(f64, DMatrix<f64>)> {
    let f = rows.features;
    let outputs = problem.outputs();
    let eqs = problem.equations();
    let psi0 = problem.psi0();
    let wt: Vec<Vec<f64>> = (0..outputs).map(|r| w.0.row(r).iter().copied().collect()).collect();
    let mut grad_rows = vec![vec![0.0; f]; outputs];
    let mut out = ResidualEval::new(eqs, outputs);
    let mut yn = vec![0.0; outputs];
    let mut ydn = vec![0.0; outputs];
    let mut loss = 0.0;
    for (n, chunk) in rows.data.chunks_exact(2 * f).enumerate() {
        let (s, sd) = chunk.split_at(f);
        for r in 0..outputs {
            yn[r] = psi0[r] + dot(s, &wt[r]);
            ydn[r] = dot(sd, &wt[r]);
        }
        out.clear();
        problem.eval(n, times[n], &yn, &ydn, &mut out);
        for r in 0..outputs {
            let (mut cy, mut cyd) = (0.0, 0.0);
            for i in 0..eqs {
                cy += 2.0 * out.r[i] * out.dr_dy[i * outputs + r];
                cyd += 2.0 * out.r[i] * out.dr_dydot[i * outputs + r];
            }
            if cy != 0.0 {
                axpy(cy, s, &mut grad_rows[r]);
            }
            if cyd != 0.0 {
                axpy(cyd, sd, &mut grad_rows[r]);
            }
        }
        loss += out.r.iter().map(|v| v * v).sum::<f64>();
    }
    loss += reg.value(&w.0);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut grad = DMatrix::from_fn(outputs, f, |r, j| grad_rows[r][j]);
    reg.add_gradient(&w.0, &mut grad);
    let k = times.len() as f64;
    Ok((loss / k, grad / k))
}

fn default_cyclic_cap() -> usize {
    5000
}

fn default_cyclic_period() -> usize {
    200
}

fn default_cyclic_low() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    0.1
}

fn default_spike() -> f64 {
    0.1
}

/// Update rule applied to the full-batch gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `w ← w − lr·g`, with optional heavy-ball momentum.
    #[default]
    Gd,
    /// Per-coordinate adaptive steps with bias-corrected moment estimates
    /// (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn default_lr() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// A loss increase larger than this between consecutive epochs is a spike.
    #[serde(default = "default_spike", alias = "spikethreshold")]
    pub spike_threshold: f64,
    /// Learning-rate factor applied on each spike.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Per-epoch amplitude decay of the cyclic schedule; `None` disables it.
    #[serde(default)]
    pub gamma_cyclic: Option<f64>,
    #[serde(default = "default_cyclic_cap")]
    pub cyclic_cap_epochs: usize,
    #[serde(default = "default_cyclic_period")]
    pub cyclic_period: usize,
    /// Lower cyclic bound as a fraction of the base rate.
    #[serde(default = "default_cyclic_low")]
    pub cyclic_low_factor: f64,
    /// ρ
    #[serde(default)]
    pub enet_alpha: f64,
    /// ω
    #[serde(default)]
    pub enet_strength: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    /// Heavy-ball momentum for [`Optimizer::Gd`]; 0 is plain gradient descent.
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: default_lr(),
            spike_threshold: default_spike(),
            gamma: default_gamma(),
            gamma_cyclic: None,
            cyclic_cap_epochs: default_cyclic_cap(),
            cyclic_period: default_cyclic_period(),
            cyclic_low_factor: default_cyclic_low(),
            enet_alpha: 0.0,
            enet_strength: 0.0,
            optimizer: Optimizer::Gd,
            momentum: 0.0,
            seed: 0,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.spike_threshold > 0.0) {
            return bad(format!("spike_threshold {} must be positive", self.spike_threshold));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} not in (0, 1)", self.gamma));
        }
        if let Some(g) = self.gamma_cyclic {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("gamma_cyclic {g} not in (0, 1)"));
            }
        }
        if self.cyclic_period < 2 {
            return bad("cyclic_period must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.enet_alpha) {
            return bad(format!("enet_alpha {} not in [0, 1]", self.enet_alpha));
        }
        if !(self.enet_strength >= 0.0) {
            return bad(format!("enet_strength {} must be nonnegative", self.enet_strength));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} not in [0, 1)", self.momentum));
        }
        Ok(())
    }

    pub fn elastic_net(&self) -> ElasticNet {
        ElasticNet { alpha: self.enet_alpha, strength: self.enet_strength }
    }

    /// Bernoulli training settings, with Adam updates.
    pub fn bernoulli() -> Self {
        Self {
            epochs: 30000,
            learning_rate: 0.01,
            spike_threshold: 0.25,
            optimizer: Optimizer::Adam,
            ..Self::default()
        }
    }

    /// Nonlinear-oscillator training settings, with Adam updates.
    pub fn nonlinear_oscillator() -> Self {
        Self {
            epochs: 50000,
            learning_rate: 0.01,
            spike_threshold: 0.43705281615257263,
            gamma: 0.09469877928495407,
            gamma_cyclic: Some(0.999860422666841),
            enet_alpha: 0.2082211971282959,
            enet_strength: 0.118459548397668,
            optimizer: Optimizer::Adam,
            ..Self::default()
        }
    }
}

/// Learning-rate schedule: spike-triggered decay, optionally modulated by an
/// exponential-range cyclic policy during the first `cyclic_cap_epochs`.
#[derive(Clone, Debug)]
pub struct LrScheduler {
    base: f64,
    gamma: f64,
    spike_threshold: f64,
    cyclic: Option<f64>,
    cap: usize,
    period: usize,
    low_factor: f64,
    prev_loss: Option<f64>,
    spikes: usize,
}

impl LrScheduler {
    pub fn new(cfg: &GdConfig) -> Self {
        Self {
            base: cfg.learning_rate,
            gamma: cfg.gamma,
            spike_threshold: cfg.spike_threshold,
            cyclic: cfg.gamma_cyclic,
            cap: cfg.cyclic_cap_epochs,
            period: cfg.cyclic_period,
            low_factor: cfg.cyclic_low_factor,
            prev_loss: None,
            spikes: 0,
        }
    }

    /// Record the loss of `epoch` and return the rate for the step that follows.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> f64 {
        if let Some(prev) = self.prev_loss {
            if !loss.is_finite() || loss - prev > self.spike_threshold {
                self.base *= self.gamma;
                self.spikes += 1;
            }
        }
        if loss.is_finite() {
            self.prev_loss = Some(loss);
        }
        self.rate(epoch)
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        match self.cyclic {
            Some(g) if epoch < self.cap => {
                let half = (self.period / 2) as f64;
                let e = epoch as f64;
                let cycle = (1.0 + e / (2.0 * half)).floor();
                let x = (e / half - 2.0 * cycle + 1.0).abs();
                let tri = (1.0 - x).max(0.0);
                let low = self.low_factor * self.base;
                low + (self.base - low) * tri * g.powf(e)
            }
            _ => self.base,
        }
    }

    pub fn base_rate(&self) -> f64 {
        self.base
    }

    pub fn spikes(&self) -> usize {
        self.spikes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Per-grid-point objective before each step; the last entry is the loss
    /// after the final step.
    pub loss_per_epoch: Vec<f64>,
    pub lr_per_epoch: Vec<f64>,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub final_lr: f64,
    pub spikes: usize,
}

impl TrainTrace {
    pub fn initial_loss(&self) -> f64 {
        self.loss_per_epoch[0]
    }
}

/// Entries i.i.d. normal(0, 0.01²).
pub fn random_weights(outputs: usize, features: usize, seed: u64) -> ReadoutWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    ReadoutWeights(DMatrix::from_fn(outputs, features, |_, _| normal.sample(&mut rng)))
}

/// Per-grid-point objective and gradient used by the trainer.
pub fn objective(
    problem: &dyn ResidualProblem,
    basis: &TrialBasis,
    w: &ReadoutWeights,
    reg: &ElasticNet,
) -> Result<(f64, DMatrix<f64>)> {
    let (loss, grad) = loss_and_grad(problem, basis, w, reg)?;
    let k = basis.len() as f64;
    Ok((loss / k, grad / k))
}

/// Full-batch gradient descent from `w_init`. Returns the weights with the
/// lowest observed objective.
pub fn train(
    problem: &dyn ResidualProblem,
    basis: &TrialBasis,
    w_init: &ReadoutWeights,
    cfg: &GdConfig,
) -> Result<(ReadoutWeights, TrainTrace)> {
    cfg.validate()?;
    let reg = cfg.elastic_net();
    let mut sched = LrScheduler::new(cfg);
    let rows = RowMajorBasis::new(basis);
    if w_init.outputs() != problem.outputs() || w_init.features() != basis.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "initial readout is {}×{}, expected {}×{}",
            w_init.outputs(),
            w_init.features(),
            problem.outputs(),
            basis.n_features()
        )));
    }
    let mut w = w_init.clone();
    let mut velocity: DMatrix<f64> = DMatrix::zeros(w.outputs(), w.features());
    let mut second: DMatrix<f64> = DMatrix::zeros(w.outputs(), w.features());
    let mut adam_steps = 0;
    let mut best_w = w.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut rates = Vec::with_capacity(cfg.epochs + 1);
    let mut lr = cfg.learning_rate;

    for epoch in 0..=cfg.epochs {
        let (loss, grad) = match fused_objective(problem, &basis.times, &rows, &w, &reg) {
            Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => (l, Some(g)),
            Ok(_) | Err(Error::NonFiniteLoss) => (f64::INFINITY, None),
            Err(e) => return Err(e),
        };
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_epoch = epoch;
            best_w = w.clone();
        }
        lr = sched.observe(epoch, loss);
        rates.push(lr);
        if epoch == cfg.epochs {
            break;
        }
        match grad {
            Some(g) => match cfg.optimizer {
                Optimizer::Gd => {
                    velocity = velocity * cfg.momentum - g * lr;
                    w.0 += &velocity;
                }
                Optimizer::Adam => {
                    adam_steps += 1;
                    let c1 = 1.0 - ADAM_B1.powi(adam_steps);
                    let c2 = 1.0 - ADAM_B2.powi(adam_steps);
                    for ((wi, (m, v)), gi) in w.0.iter_mut().zip(velocity.iter_mut().zip(second.iter_mut())).zip(g.iter()) {
                        *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * gi;
                        *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * gi * gi;
                        *wi -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    }
                }
            },
            None => {
                // Diverged: restart from the best point with the reduced rate.
                w = best_w.clone();
                velocity.fill(0.0);
                second.fill(0.0);
                adam_steps = 0;
            }
        }
    }

    if !best_loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let trace = TrainTrace {
        loss_per_epoch: losses,
        lr_per_epoch: rates,
        best_loss,
        best_epoch,
        final_lr: lr,
        spikes: sched.spikes(),
    };
    Ok((best_w, trace))
}

/// Residual `D_H w + D₀` as a [`ResidualProblem`]; used to check the trainer
/// against the closed form.
pub struct AffineResidual {
    /// Row `n` gives `∂r/∂ẏ` and `∂r/∂y` at grid point `n`.
    pub a1: Vec<f64>,
    pub a0: Vec<f64>,
    pub force: Vec<f64>,
    pub psi0: [f64; 1],
}

impl ResidualProblem for AffineResidual {
    fn outputs(&self) -> usize {
        1
    }

    fn equations(&self) -> usize {
        1
    }

    fn psi0(&self) -> &[f64] {
        &self.psi0
    }

    fn eval(&self, n: usize, _t: f64, y: &[f64], y_dot: &[f64], out: &mut ResidualEval) {
        out.set(0, self.a1[n] * y_dot[0] + self.a0[n] * y[0] - self.force[n]);
        out.set_dy(0, 0, self.a0[n]);
        out.set_dydot(0, 0, self.a1[n]);
    }
}
