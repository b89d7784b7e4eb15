//! Bernoulli-type ODEs `a₁ẏ + a₀y + q y² = f`.
//!
//! Writing `y = ψ₀ + S w`, the residual is
//!
//! ```text
//! r = A₁Ṡw + A₀(Ψ₀ + Sw) + Q(Ψ₀ + Sw)² − F
//!   = (D_H + 2QΨ₀S) w + (D₀ + QΨ₀²) + Q(Sw)²
//! ```
//!
//! For small readouts the last term is dropped, leaving a ridge problem in
//! the modified matrices
//!
//! ```text
//! D̃_H[n,·] = D_H[n,·] + 2 q(tₙ) ψ₀ S[n,·]
//! D̃₀[n]    = D₀[n] + q(tₙ) ψ₀²
//! ```
//!
//! whose solution seeds gradient descent on the full residual.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::Coeff;
use crate::error::{Error, Result};
use crate::gd::{random_weights, residuals, train, GdConfig, ResidualEval, ResidualProblem, TrainTrace};
use crate::integrate::VectorField;
use crate::linear::{sample_a1, state_matrix, CharMatrices, IcSolution, RidgeFactor, SolveResult, SolveTiming};
use crate::reservoir::{propagate, Reservoir};
use crate::trial::{build_basis, evaluate, ReadoutWeights, TrialBasis};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BernoulliOde {
    pub a1: Coeff,
    pub a0: Coeff,
    pub q: Coeff,
    pub force: Coeff,
    pub psi0_list: Vec<f64>,
    pub t_range: (f64, f64),
}

impl BernoulliOde {
    /// `ẏ + y + y²/2 = 0`
    pub fn logistic(psi0_list: Vec<f64>, t_end: f64) -> Self {
        Self {
            a1: 1.0.into(),
            a0: 1.0.into(),
            q: 0.5.into(),
            force: 0.0.into(),
            psi0_list,
            t_range: (0.0, t_end),
        }
    }

    pub fn residual(&self, t: f64, y: f64, y_dot: f64) -> f64 {
        self.a1.eval(t) * y_dot + self.a0.eval(t) * y + self.q.eval(t) * y * y - self.force.eval(t)
    }
}

impl VectorField for BernoulliOde {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let y = y[0];
        dy[0] = (self.force.eval(t) - self.a0.eval(t) * y - self.q.eval(t) * y * y) / self.a1.eval(t);
    }
}

/// Exact solution of `ẏ + y + q y² = 0` for constant `q`, valid while the
/// denominator stays away from zero.
pub fn logistic_exact(q: f64, psi0: f64, t: f64) -> f64 {
    if psi0 == 0.0 {
        return 0.0;
    }
    1.0 / ((1.0 / psi0 + q) * t.exp() - q)
}

/// Coefficients sampled on the basis grid.
struct Sampled {
    a1: Vec<f64>,
    a0: Vec<f64>,
    q: Vec<f64>,
    force: Vec<f64>,
}

impl Sampled {
    fn new(ode: &BernoulliOde, times: &[f64]) -> Result<Self> {
        Ok(Self {
            a1: sample_a1(&ode.a1, times)?,
            a0: ode.a0.sample(times),
            q: ode.q.sample(times),
            force: ode.force.sample(times),
        })
    }
}

pub fn linearized_characteristic(ode: &BernoulliOde, basis: &TrialBasis, psi0: f64) -> Result<CharMatrices> {
    let c = Sampled::new(ode, &basis.times)?;
    Ok(linearized_from(&c, basis, psi0))
}

fn linearized_from(c: &Sampled, basis: &TrialBasis, psi0: f64) -> CharMatrices {
    let mut d_h = state_matrix(&c.a1, &c.a0, basis);
    for n in 0..basis.len() {
        let k = 2.0 * c.q[n] * psi0;
        if k != 0.0 {
            for j in 0..d_h.ncols() {
                d_h[(n, j)] += k * basis.s_mat[(n, j)];
            }
        }
    }
    let d_0 = DVector::from_fn(basis.len(), |n, _| c.a0[n] * psi0 - c.force[n] + c.q[n] * psi0 * psi0);
    CharMatrices { d_h, d_0 }
}

/// Ridge solution of the linearized residual.
pub fn linearized_weights(ode: &BernoulliOde, basis: &TrialBasis, psi0: f64, lambda: f64) -> Result<ReadoutWeights> {
    let cm = linearized_characteristic(ode, basis, psi0)?;
    crate::linear::closed_form_weights(&cm, lambda)
}

/// Full nonlinear residual for one initial condition on a fixed grid.
pub struct BernoulliResidual {
    c: Arc<Sampled>,
    psi0: [f64; 1],
}

/// Residual of `ode` for the initial value `psi0`, sampled on `basis`.
pub fn residual_problem(ode: &BernoulliOde, basis: &TrialBasis, psi0: f64) -> Result<BernoulliResidual> {
    Ok(BernoulliResidual { c: Arc::new(Sampled::new(ode, &basis.times)?), psi0: [psi0] })
}

impl ResidualProblem for BernoulliResidual {
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
        let c = &self.c;
        let y = y[0];
        out.set(0, c.a1[n] * y_dot[0] + c.a0[n] * y + c.q[n] * y * y - c.force[n]);
        out.set_dy(0, 0, c.a0[n] + 2.0 * c.q[n] * y);
        out.set_dydot(0, 0, c.a1[n]);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Linearized closed form, no gradient descent.
    Linearized,
    /// Gradient descent from small random weights.
    Random,
    /// Gradient descent from the linearized closed form.
    #[default]
    LinearizedThenGd,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BernoulliSolution {
    pub result: SolveResult,
    /// One per IC; empty for [`InitStrategy::Linearized`].
    pub traces: Vec<TrainTrace>,
}

fn solve_one(
    c: &Arc<Sampled>,
    basis: &TrialBasis,
    psi0: f64,
    lambda: f64,
    cfg: &GdConfig,
    init: InitStrategy,
    seed: u64,
) -> Result<(IcSolution, Option<TrainTrace>)> {
    let problem = BernoulliResidual { c: c.clone(), psi0: [psi0] };
    let linearized = || -> Result<ReadoutWeights> {
        let cm = linearized_from(c, basis, psi0);
        let factor = RidgeFactor::new(&cm.d_h, lambda)?;
        Ok(ReadoutWeights::from_row(factor.solve(&-cm.d_h.tr_mul(&cm.d_0))?.as_slice()))
    };
    let (w, trace) = match init {
        InitStrategy::Linearized => (linearized()?, None),
        InitStrategy::Random | InitStrategy::LinearizedThenGd => {
            let w0 = if init == InitStrategy::Random {
                random_weights(1, basis.n_features(), seed)
            } else {
                linearized()?
            };
            let cfg = GdConfig { enet_alpha: 0.0, enet_strength: lambda, ..cfg.clone() };
            let (w, tr) = train(&problem, basis, &w0, &cfg)?;
            (w, Some(tr))
        }
    };
    let (y, y_dot) = evaluate(basis, &w, &[psi0])?;
    let r = residuals(&problem, basis, &w)?;
    let residual = r.column(0).iter().copied().collect();
    Ok((IcSolution::from_matrices(vec![psi0], &y, &y_dot, vec![residual], w), trace))
}

/// Propagate once, then solve each IC. Gradient descent uses the ridge
/// strength of the reservoir as an L2 penalty so that the linearized start is
/// the exact optimum when `q ≡ 0`. Random starts for IC `i` use seed
/// `cfg.seed + i`.
pub fn solve_bernoulli(
    ode: &BernoulliOde,
    res: &Reservoir,
    cfg: &GdConfig,
    init: InitStrategy,
) -> Result<BernoulliSolution> {
    let start = Instant::now();
    if ode.psi0_list.is_empty() {
        return Err(Error::Config("no initial conditions given".into()));
    }
    cfg.validate()?;
    let traj = propagate(res, ode.t_range.0, ode.t_range.1)?;
    let basis = build_basis(&traj);
    let c = Arc::new(Sampled::new(ode, &basis.times)?);
    let lambda = res.hyper().regularization;
    let run = |i: usize| solve_one(&c, &basis, ode.psi0_list[i], lambda, cfg, init, cfg.seed.wrapping_add(i as u64));

    let first = run(0)?;
    let declare_secs = start.elapsed().as_secs_f64();
    let fit_start = Instant::now();
    let rest: Vec<_> = (1..ode.psi0_list.len()).into_par_iter().map(run).collect::<Result<_>>()?;
    let fit_secs = if rest.is_empty() { 0.0 } else { fit_start.elapsed().as_secs_f64() };

    let (solutions, traces): (Vec<_>, Vec<_>) = std::iter::once(first).chain(rest).unzip();
    Ok(BernoulliSolution {
        result: SolveResult { times: basis.times.clone(), solutions, timing: SolveTiming { declare_secs, fit_secs } },
        traces: traces.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{characteristic_matrices, closed_form_weights, LinearOde};
    use crate::reservoir::{build_reservoir, HyperParams};

    fn basis() -> TrialBasis {
        let hp = HyperParams {
            n_nodes: 30,
            connectivity: 0.3,
            spectral_radius: 0.9,
            leaking_rate: 0.5,
            bias: 0.2,
            dt: 0.05,
            regularization: 1e-3,
            random_seed: 3,
            ..HyperParams::simple_population()
        };
        let res = build_reservoir(&hp).unwrap();
        build_basis(&propagate(&res, 0.0, 3.0).unwrap())
    }

    #[test]
    fn zero_q_reduces_to_linear() {
        let b = basis();
        let lin = LinearOde::driven_population(vec![1.5], 3.0);
        let ber = BernoulliOde { q: 0.0.into(), ..BernoulliOde::logistic(vec![1.5], 3.0) };
        let ber = BernoulliOde { force: Coeff::sin(), ..ber };
        let w_lin = closed_form_weights(&characteristic_matrices(&lin, &b, 1.5).unwrap(), 1e-3).unwrap();
        let w_ber = linearized_weights(&ber, &b, 1.5, 1e-3).unwrap();
        assert!((&w_lin.0 - &w_ber.0).norm() <= 1e-12 * w_lin.norm());
    }

    #[test]
    fn zero_psi0_leaves_matrices_unchanged() {
        let b = basis();
        let ode = BernoulliOde::logistic(vec![0.0], 3.0);
        let lin = LinearOde { a1: 1.0.into(), a0: 1.0.into(), force: 0.0.into(), psi0_list: vec![0.0], t_range: (0.0, 3.0) };
        assert_eq!(linearized_characteristic(&ode, &b, 0.0).unwrap(), characteristic_matrices(&lin, &b, 0.0).unwrap());
    }

    #[test]
    fn linearized_rows() {
        let b = basis();
        let ode = BernoulliOde::logistic(vec![2.0], 3.0);
        let cm = linearized_characteristic(&ode, &b, 2.0).unwrap();
        let n = 17;
        for j in 0..b.n_features() {
            let expected = b.s_dot[(n, j)] + b.s_mat[(n, j)] + 2.0 * 0.5 * 2.0 * b.s_mat[(n, j)];
            assert!((cm.d_h[(n, j)] - expected).abs() < 1e-14);
        }
        assert_eq!(cm.d_0[n], 2.0 + 0.5 * 4.0);
    }

    #[test]
    fn residual_partials_match_differences() {
        let b = basis();
        let p = residual_problem(&BernoulliOde::logistic(vec![1.0], 3.0), &b, 1.0).unwrap();
        let mut out = ResidualEval::new(1, 1);
        let (y, yd, h) = (0.7, -0.3, 1e-6);
        p.eval(4, 0.2, &[y], &[yd], &mut out);
        let (dy, dyd) = (out.dr_dy[0], out.dr_dydot[0]);
        let r = |y: f64, yd: f64| {
            let mut o = ResidualEval::new(1, 1);
            p.eval(4, 0.2, &[y], &[yd], &mut o);
            o.r[0]
        };
        assert!((dy - (r(y + h, yd) - r(y - h, yd)) / (2.0 * h)).abs() < 1e-8);
        assert!((dyd - (r(y, yd + h) - r(y, yd - h)) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn exact_logistic_solves_the_equation() {
        let (q, psi0, t, h) = (0.5, 1.3, 0.8, 1e-5);
        let y = logistic_exact(q, psi0, t);
        let yd = (logistic_exact(q, psi0, t + h) - logistic_exact(q, psi0, t - h)) / (2.0 * h);
        assert!((yd + y + q * y * y).abs() < 1e-8);
        assert_eq!(logistic_exact(q, psi0, 0.0), psi0);
        assert_eq!(logistic_exact(q, -2.0, 3.0), -2.0);
    }

    #[test]
    fn linearized_only_skips_training() {
        let hp = HyperParams { n_nodes: 20, dt: 0.05, regularization: 1e-3, ..HyperParams::simple_population() };
        let res = build_reservoir(&hp).unwrap();
        let ode = BernoulliOde::logistic(vec![0.5, 1.0], 2.0);
        let sol = solve_bernoulli(&ode, &res, &GdConfig { epochs: 10, ..GdConfig::default() }, InitStrategy::Linearized).unwrap();
        assert!(sol.traces.is_empty());
        assert_eq!(sol.result.solutions.len(), 2);
        assert_eq!(res.propagation_count(), 1);
    }
}
