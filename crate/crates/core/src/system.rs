//! Systems of first-order ODEs `ẏ = F(t, y)` solved with one readout row per
//! component, all sharing the same reservoir basis.
//!
//! The residual of component `i` is `ẏᵢ − Fᵢ(t, y)`. When a Hamiltonian is
//! attached, the energy drift `E − 𝓗(y)` enters the loss as one more squared
//! residual, where `E = 𝓗(y(0))`.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gd::{loss_and_grad, random_weights, residuals, train, ElasticNet, GdConfig, ResidualEval, ResidualProblem, TrainTrace};
use crate::integrate::VectorField;
use crate::linear::{IcSolution, SolveResult, SolveTiming};
use crate::reservoir::{propagate, Reservoir};
use crate::trial::{build_basis, evaluate, ReadoutWeights, TrialBasis};

/// Explicit dynamics with an analytic Jacobian.
pub trait Dynamics: VectorField {
    /// Row-major `dim × dim`, entry `(i, j)` is `∂Fᵢ/∂y_j`.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut [f64]);
}

pub trait Hamiltonian: Send + Sync {
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64], grad: &mut [f64]);
}

/// `𝓗 = p²/2 + x²/2 + x⁴/4`, equations `ẋ = p`, `ṗ = −x − x³`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NonlinearOscillator;

/// `𝓗 = (x² + p²)/2`, equations `ẋ = p`, `ṗ = −x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HarmonicOscillator;

impl VectorField for NonlinearOscillator {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0] - y[0].powi(3);
    }
}

impl Dynamics for NonlinearOscillator {
    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut [f64]) {
        jac.copy_from_slice(&[0.0, 1.0, -1.0 - 3.0 * y[0] * y[0], 0.0]);
    }
}

impl Hamiltonian for NonlinearOscillator {
    fn value(&self, y: &[f64]) -> f64 {
        let (x, p) = (y[0], y[1]);
        0.5 * p * p + 0.5 * x * x + 0.25 * x.powi(4)
    }

    fn gradient(&self, y: &[f64], grad: &mut [f64]) {
        grad[0] = y[0] + y[0].powi(3);
        grad[1] = y[1];
    }
}

impl VectorField for HarmonicOscillator {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }
}

impl Dynamics for HarmonicOscillator {
    fn jacobian(&self, _t: f64, _y: &[f64], jac: &mut [f64]) {
        jac.copy_from_slice(&[0.0, 1.0, -1.0, 0.0]);
    }
}

impl Hamiltonian for HarmonicOscillator {
    fn value(&self, y: &[f64]) -> f64 {
        0.5 * (y[0] * y[0] + y[1] * y[1])
    }

    fn gradient(&self, y: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(&y[..2]);
    }
}

/// Named systems available from configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    NonlinearOscillator,
    HarmonicOscillator,
}

/// Energy function together with the level fixed by the initial condition.
#[derive(Clone)]
pub struct HamiltonianSpec {
    pub h: Arc<dyn Hamiltonian>,
    pub energy: f64,
    /// Multiplier on the squared energy drift.
    pub weight: f64,
}

impl HamiltonianSpec {
    pub fn new(h: Arc<dyn Hamiltonian>, ic: &[f64]) -> Self {
        let energy = h.value(ic);
        Self { h, energy, weight: 1.0 }
    }
}

#[derive(Clone)]
pub struct OdeSystem {
    pub dynamics: Arc<dyn Dynamics>,
    pub hamiltonian: Option<HamiltonianSpec>,
    pub ic: Vec<f64>,
    pub t_range: (f64, f64),
}

impl std::fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeSystem")
            .field("dim", &self.dim())
            .field("energy", &self.hamiltonian.as_ref().map(|h| h.energy))
            .field("ic", &self.ic)
            .field("t_range", &self.t_range)
            .finish()
    }
}

impl OdeSystem {
    /// Checks dimensions and spot-checks the Jacobian and Hamiltonian
    /// gradient against central differences.
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        hamiltonian: Option<Arc<dyn Hamiltonian>>,
        ic: Vec<f64>,
        t_range: (f64, f64),
    ) -> Result<Self> {
        let d = dynamics.dim();
        if d == 0 || ic.len() != d {
            return Err(Error::DimensionMismatch(format!("{} initial values for a {d}-d system", ic.len())));
        }
        let sys = Self { hamiltonian: hamiltonian.map(|h| HamiltonianSpec::new(h, &ic)), dynamics, ic, t_range };
        sys.check_partials()?;
        Ok(sys)
    }

    pub fn from_kind(kind: SystemKind, ic: Vec<f64>, t_range: (f64, f64), with_energy: bool) -> Result<Self> {
        match kind {
            SystemKind::NonlinearOscillator => {
                let h: Option<Arc<dyn Hamiltonian>> = with_energy.then(|| Arc::new(NonlinearOscillator) as _);
                Self::new(Arc::new(NonlinearOscillator), h, ic, t_range)
            }
            SystemKind::HarmonicOscillator => {
                let h: Option<Arc<dyn Hamiltonian>> = with_energy.then(|| Arc::new(HarmonicOscillator) as _);
                Self::new(Arc::new(HarmonicOscillator), h, ic, t_range)
            }
        }
    }

    /// Same system and Hamiltonian with a different initial condition.
    pub fn with_ic(&self, ic: Vec<f64>) -> Result<Self> {
        if ic.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} initial values for a {}-d system", ic.len(), self.dim())));
        }
        let hamiltonian = self.hamiltonian.as_ref().map(|s| HamiltonianSpec { energy: s.h.value(&ic), ..s.clone() });
        Ok(Self { dynamics: self.dynamics.clone(), hamiltonian, ic, t_range: self.t_range })
    }

    pub fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    fn check_partials(&self) -> Result<()> {
        let d = self.dim();
        let h = 1e-6;
        let t = self.t_range.0;
        let mut points = vec![self.ic.clone()];
        points.push(self.ic.iter().enumerate().map(|(i, v)| v + 0.1 * (i as f64 + 1.0)).collect());
        let (mut jac, mut f_plus, mut f_minus, mut grad) = (vec![0.0; d * d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        for y in points {
            self.dynamics.jacobian(t, &y, &mut jac);
            if let Some(hs) = &self.hamiltonian {
                hs.h.gradient(&y, &mut grad);
            }
            for j in 0..d {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                self.dynamics.rhs(t, &yp, &mut f_plus);
                self.dynamics.rhs(t, &ym, &mut f_minus);
                for i in 0..d {
                    let fd = (f_plus[i] - f_minus[i]) / (2.0 * h);
                    if (fd - jac[i * d + j]).abs() > 1e-5 * (1.0 + fd.abs()) {
                        return Err(Error::Config(format!("Jacobian entry ({i}, {j}) disagrees with differences")));
                    }
                }
                if let Some(hs) = &self.hamiltonian {
                    let fd = (hs.h.value(&yp) - hs.h.value(&ym)) / (2.0 * h);
                    if (fd - grad[j]).abs() > 1e-5 * (1.0 + fd.abs()) {
                        return Err(Error::Config(format!("Hamiltonian gradient entry {j} disagrees with differences")));
                    }
                }
            }
        }
        Ok(())
    }
}

impl ResidualProblem for OdeSystem {
    fn outputs(&self) -> usize {
        self.dim()
    }

    fn equations(&self) -> usize {
        self.dim() + usize::from(self.hamiltonian.is_some())
    }

    fn psi0(&self) -> &[f64] {
        &self.ic
    }

    fn eval(&self, _n: usize, t: f64, y: &[f64], y_dot: &[f64], out: &mut ResidualEval) {
        let d = self.dim();
        let mut stack = [0.0; 32];
        let mut heap = Vec::new();
        let work: &mut [f64] = if d * d + 2 * d <= stack.len() {
            &mut stack[..d * d + 2 * d]
        } else {
            heap.resize(d * d + 2 * d, 0.0);
            &mut heap
        };
        let (f, rest) = work.split_at_mut(d);
        let (jac, g) = rest.split_at_mut(d * d);
        self.dynamics.rhs(t, y, f);
        self.dynamics.jacobian(t, y, jac);
        for i in 0..d {
            out.set(i, y_dot[i] - f[i]);
            out.set_dydot(i, i, 1.0);
            for j in 0..d {
                out.set_dy(i, j, -jac[i * d + j]);
            }
        }
        if let Some(hs) = &self.hamiltonian {
            let s = hs.weight.sqrt();
            hs.h.gradient(y, g);
            out.set(d, s * (hs.energy - hs.h.value(y)));
            for j in 0..d {
                out.set_dy(d, j, -s * g[j]);
            }
        }
    }
}

/// `Σₙ [Σᵢ rᵢ² + (E − 𝓗)²] + reg(w)` and its gradient.
pub fn system_loss(
    sys: &OdeSystem,
    basis: &TrialBasis,
    w: &ReadoutWeights,
    reg: &ElasticNet,
) -> Result<(f64, nalgebra::DMatrix<f64>)> {
    loss_and_grad(sys, basis, w, reg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSolution {
    pub result: SolveResult,
    /// One per IC.
    pub traces: Vec<TrainTrace>,
    /// `|E − 𝓗(yₙ)|` per IC; empty without a Hamiltonian.
    pub energy_violation: Vec<Vec<f64>>,
}

fn solve_one(sys: &OdeSystem, basis: &TrialBasis, cfg: &GdConfig, seed: u64) -> Result<(IcSolution, TrainTrace, Vec<f64>)> {
    let w0 = random_weights(sys.dim(), basis.n_features(), seed);
    let (w, trace) = train(sys, basis, &w0, cfg)?;
    let (y, y_dot) = evaluate(basis, &w, &sys.ic)?;
    let r = residuals(sys, basis, &w)?;
    let residual = (0..sys.dim()).map(|i| r.column(i).iter().copied().collect()).collect();
    let violation = match &sys.hamiltonian {
        Some(hs) => (0..basis.len())
            .map(|n| {
                let yn: Vec<f64> = y.row(n).iter().copied().collect();
                (hs.energy - hs.h.value(&yn)).abs()
            })
            .collect(),
        None => Vec::new(),
    };
    Ok((IcSolution::from_matrices(sys.ic.clone(), &y, &y_dot, residual, w), trace, violation))
}

/// Train one readout for `sys.ic`.
pub fn solve_system(sys: &OdeSystem, res: &Reservoir, cfg: &GdConfig) -> Result<SystemSolution> {
    solve_system_bundle(sys, std::slice::from_ref(&sys.ic), res, cfg)
}

/// Train one readout per initial condition on a shared basis. IC `i` starts
/// from random weights seeded with `cfg.seed + i`.
pub fn solve_system_bundle(sys: &OdeSystem, ics: &[Vec<f64>], res: &Reservoir, cfg: &GdConfig) -> Result<SystemSolution> {
    let start = Instant::now();
    if ics.is_empty() {
        return Err(Error::Config("no initial conditions given".into()));
    }
    cfg.validate()?;
    let systems: Vec<OdeSystem> = ics.iter().map(|ic| sys.with_ic(ic.clone())).collect::<Result<_>>()?;
    let traj = propagate(res, sys.t_range.0, sys.t_range.1)?;
    let basis = build_basis(&traj);
    let run = |i: usize| solve_one(&systems[i], &basis, cfg, cfg.seed.wrapping_add(i as u64));

    let first = run(0)?;
    let declare_secs = start.elapsed().as_secs_f64();
    let fit_start = Instant::now();
    let rest: Vec<_> = (1..systems.len()).into_par_iter().map(run).collect::<Result<_>>()?;
    let fit_secs = if rest.is_empty() { 0.0 } else { fit_start.elapsed().as_secs_f64() };

    let mut solutions = Vec::with_capacity(systems.len());
    let mut traces = Vec::with_capacity(systems.len());
    let mut energy_violation = Vec::with_capacity(systems.len());
    for (s, t, v) in std::iter::once(first).chain(rest) {
        solutions.push(s);
        traces.push(t);
        if !v.is_empty() {
            energy_violation.push(v);
        }
    }
    Ok(SystemSolution {
        result: SolveResult { times: basis.times.clone(), solutions, timing: SolveTiming { declare_secs, fit_secs } },
        traces,
        energy_violation,
    })
}
