//! Closed-form readout for linear first-order ODEs
//! `a₁(t) ẏ + a₀(t) y = f(t)`.
//!
//! With the trial solution `Y = Ψ₀ + S w`, the residual is affine in `w`:
//!
//! ```text
//! A₁Ẏ + A₀Y − F = D_H w + D₀,   D_H = A₁Ṡ + A₀S,   D₀ = A₀Ψ₀ − F
//! ```
//!
//! where the coefficient vectors scale rows. Minimizing
//! `‖D_H w + D₀‖² + λ‖w‖²` gives `w = −(D_Hᵀ D_H + λ I)⁻¹ D_Hᵀ D₀`.
//! The bias weight `w₀` is left out of the penalty, so `I` here has a zero in
//! its first diagonal slot.
//! `D_H` does not depend on `ψ₀`, so one factorization serves every initial
//! condition, and since the weights are affine in `ψ₀` every further IC costs
//! a pass over the grid.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::coeff::Coeff;
use crate::error::{Error, Result};
use crate::integrate::VectorField;
use crate::reservoir::{propagate, Reservoir};
use crate::trial::{build_basis, evaluate, ReadoutWeights, TrialBasis};

/// Condition estimate above which a solve is logged as suspect.
pub const CONDITION_WARN: f64 = 1e14;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearOde {
    pub a1: Coeff,
    pub a0: Coeff,
    pub force: Coeff,
    pub psi0_list: Vec<f64>,
    pub t_range: (f64, f64),
}

impl LinearOde {
    /// `ẏ + y = 0`
    pub fn simple_population(psi0_list: Vec<f64>, t_end: f64) -> Self {
        Self { a1: 1.0.into(), a0: 1.0.into(), force: 0.0.into(), psi0_list, t_range: (0.0, t_end) }
    }

    /// `ẏ + y = sin t`
    pub fn driven_population(psi0_list: Vec<f64>, t_end: f64) -> Self {
        Self { a1: 1.0.into(), a0: 1.0.into(), force: Coeff::sin(), psi0_list, t_range: (0.0, t_end) }
    }

    /// `ẏ + t² y = sin t`
    pub fn time_dependent(psi0_list: Vec<f64>, t_end: f64) -> Self {
        Self {
            a1: 1.0.into(),
            a0: Coeff::Poly(vec![0.0, 0.0, 1.0]),
            force: Coeff::sin(),
            psi0_list,
            t_range: (0.0, t_end),
        }
    }

    pub fn residual(&self, t: f64, y: f64, y_dot: f64) -> f64 {
        self.a1.eval(t) * y_dot + self.a0.eval(t) * y - self.force.eval(t)
    }
}

impl VectorField for LinearOde {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = (self.force.eval(t) - self.a0.eval(t) * y[0]) / self.a1.eval(t);
    }
}

/// Exact solution of `ẏ + y = sin t`, `y(0) = ψ₀`.
pub fn driven_population_exact(psi0: f64, t: f64) -> f64 {
    (-t).exp() * (psi0 + 0.5) + 0.5 * (t.sin() - t.cos())
}

/// Exact solution of `ẏ + y = 0`, `y(0) = ψ₀`.
pub fn simple_population_exact(psi0: f64, t: f64) -> f64 {
    psi0 * (-t).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharMatrices {
    /// K × (M + 1)
    pub d_h: DMatrix<f64>,
    /// K
    pub d_0: DVector<f64>,
}

pub(crate) fn sample_a1(a1: &Coeff, times: &[f64]) -> Result<Vec<f64>> {
    let vals = a1.sample(times);
    if let Some(n) = vals.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::SingularCoefficient { t: times[n] });
    }
    Ok(vals)
}

/// `D_H = A₁Ṡ + A₀S` (row scalings).
pub(crate) fn state_matrix(a1: &[f64], a0: &[f64], basis: &TrialBasis) -> DMatrix<f64> {
    let mut d_h = basis.s_dot.clone();
    for j in 0..d_h.ncols() {
        let mut col = d_h.column_mut(j);
        let s = basis.s_mat.column(j);
        for n in 0..col.len() {
            col[n] = a1[n] * col[n] + a0[n] * s[n];
        }
    }
    d_h
}

pub fn characteristic_matrices(ode: &LinearOde, basis: &TrialBasis, psi0: f64) -> Result<CharMatrices> {
    let a1 = sample_a1(&ode.a1, &basis.times)?;
    let a0 = ode.a0.sample(&basis.times);
    let force = ode.force.sample(&basis.times);
    let d_h = state_matrix(&a1, &a0, basis);
    let d_0 = DVector::from_iterator(basis.len(), a0.iter().zip(&force).map(|(a, f)| a * psi0 - f));
    Ok(CharMatrices { d_h, d_0 })
}

/// Factorization of `D_Hᵀ D_H + λ I₀`, reusable across right-hand sides.
pub struct RidgeFactor {
    kind: FactorKind,
}

enum FactorKind {
    Cholesky(Cholesky<f64, Dyn>),
    Svd(nalgebra::SVD<f64, Dyn, Dyn>),
}

impl RidgeFactor {
    pub fn new(d_h: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidHyperParam { name: "regularization", reason: format!("{lambda} < 0") });
        }
        let mut gram = d_h.transpose() * d_h;
        for i in 1..gram.nrows() {
            gram[(i, i)] += lambda;
        }
        Self::from_gram(gram)
    }

    pub fn from_gram(gram: DMatrix<f64>) -> Result<Self> {
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned("Gram matrix has non-finite entries".into()));
        }
        if let Some(chol) = Cholesky::new(gram.clone()) {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d.abs()), hi.max(d.abs())));
            let cond = (hi / lo).powi(2);
            if cond > CONDITION_WARN {
                log::warn!("ridge Gram matrix condition estimate {cond:.3e}");
            }
            if lo > 0.0 && cond.is_finite() {
                return Ok(Self { kind: FactorKind::Cholesky(chol) });
            }
        }
        log::warn!("ridge Gram matrix is not numerically positive definite; using SVD");
        let svd = gram.svd(true, true);
        if svd.singular_values.iter().all(|&s| s == 0.0) {
            return Err(Error::IllConditioned("Gram matrix is zero".into()));
        }
        Ok(Self { kind: FactorKind::Svd(svd) })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let x = match &self.kind {
            FactorKind::Cholesky(c) => c.solve(rhs),
            FactorKind::Svd(svd) => {
                let tol = svd.singular_values.max() * f64::EPSILON * svd.singular_values.len() as f64;
                svd.solve(rhs, tol).map_err(|e| Error::IllConditioned(e.to_string()))?
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned("ridge solve produced non-finite weights".into()));
        }
        Ok(x)
    }
}

/// `w = −(D_Hᵀ D_H + λ I)⁻¹ D_Hᵀ D₀`
pub fn closed_form_weights(cm: &CharMatrices, lambda: f64) -> Result<ReadoutWeights> {
    let factor = RidgeFactor::new(&cm.d_h, lambda)?;
    let rhs = -(cm.d_h.tr_mul(&cm.d_0));
    let w = factor.solve(&rhs)?;
    Ok(ReadoutWeights::from_row(w.as_slice()))
}

/// Solution for one initial condition on the solve grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcSolution {
    pub psi0: Vec<f64>,
    /// K × R, column per output.
    pub y: Vec<Vec<f64>>,
    pub y_dot: Vec<Vec<f64>>,
    /// K × number of residual equations.
    pub residual: Vec<Vec<f64>>,
    pub weights: ReadoutWeights,
}

impl IcSolution {
    pub(crate) fn from_matrices(
        psi0: Vec<f64>,
        y: &DMatrix<f64>,
        y_dot: &DMatrix<f64>,
        residual: Vec<Vec<f64>>,
        weights: ReadoutWeights,
    ) -> Self {
        let cols = |m: &DMatrix<f64>| (0..m.ncols()).map(|c| m.column(c).iter().copied().collect()).collect();
        Self { psi0, y: cols(y), y_dot: cols(y_dot), residual, weights }
    }

    /// Scalar output series (output 0).
    pub fn y0(&self) -> &[f64] {
        &self.y[0]
    }

    pub fn residual_rms(&self) -> f64 {
        let (sum, count) = self
            .residual
            .iter()
            .flat_map(|r| r.iter())
            .fold((0.0, 0usize), |(s, c), &v| (s + v * v, c + 1));
        (sum / count.max(1) as f64).sqrt()
    }
}

/// Wall-clock split: `declare` covers propagation, basis, factorization and
/// the first IC; `fit` covers every additional IC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTiming {
    pub declare_secs: f64,
    pub fit_secs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    pub times: Vec<f64>,
    pub solutions: Vec<IcSolution>,
    pub timing: SolveTiming,
}

impl SolveResult {
    /// RMSR over ICs of the first residual equation.
    pub fn rmsr(&self) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self.solutions.iter().map(|s| s.residual[0].clone()).collect();
        rmsr(&rows)
    }
}

/// Root-mean-square residual across initial conditions, per grid point.
pub fn rmsr(residual_per_ic: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = residual_per_ic.first() else {
        return Vec::new();
    };
    let l = residual_per_ic.len() as f64;
    (0..first.len())
        .map(|n| (residual_per_ic.iter().map(|r| r[n] * r[n]).sum::<f64>() / l).sqrt())
        .collect()
}

/// Propagate once, then solve every IC in `ode.psi0_list` against the shared
/// basis.
pub fn solve_linear(ode: &LinearOde, res: &Reservoir) -> Result<SolveResult> {
    let start = Instant::now();
    if ode.psi0_list.is_empty() {
        return Err(Error::Config("no initial conditions given".into()));
    }
    let traj = propagate(res, ode.t_range.0, ode.t_range.1)?;
    let basis = build_basis(&traj);
    solve_linear_on_basis(ode, &basis, res.hyper().regularization, start)
}

pub(crate) fn solve_linear_on_basis(
    ode: &LinearOde,
    basis: &TrialBasis,
    lambda: f64,
    start: Instant,
) -> Result<SolveResult> {
    let times = &basis.times;
    let a1 = sample_a1(&ode.a1, times)?;
    let a0 = ode.a0.sample(times);
    let force = ode.force.sample(times);
    let d_h = state_matrix(&a1, &a0, basis);
    let factor = RidgeFactor::new(&d_h, lambda)?;
    // w(ψ₀) = ψ₀ w_a + w_f with w_a = −G⁻¹ D_Hᵀ a₀ and w_f = G⁻¹ D_Hᵀ f, so
    // each IC is a combination of two precomputed curves.
    let w_a = -factor.solve(&d_h.tr_mul(&DVector::from_column_slice(&a0)))?;
    let w_f = factor.solve(&d_h.tr_mul(&DVector::from_column_slice(&force)))?;
    let (ya, yda) = evaluate(basis, &ReadoutWeights::from_row(w_a.as_slice()), &[0.0])?;
    let (yf, ydf) = evaluate(basis, &ReadoutWeights::from_row(w_f.as_slice()), &[0.0])?;
    let k = basis.len();

    let mut solutions = Vec::with_capacity(ode.psi0_list.len());
    let mut declare_secs = 0.0;
    let mut fit_start = Instant::now();
    for (i, &psi0) in ode.psi0_list.iter().enumerate() {
        let w = ReadoutWeights::from_row((&w_a * psi0 + &w_f).as_slice());
        let mut y = Vec::with_capacity(k);
        let mut y_dot = Vec::with_capacity(k);
        let mut residual = Vec::with_capacity(k);
        for n in 0..k {
            let yn = psi0 * (1.0 + ya[n]) + yf[n];
            let ydn = psi0 * yda[n] + ydf[n];
            y.push(yn);
            y_dot.push(ydn);
            residual.push(a1[n] * ydn + a0[n] * yn - force[n]);
        }
        solutions.push(IcSolution { psi0: vec![psi0], y: vec![y], y_dot: vec![y_dot], residual: vec![residual], weights: w });
        if i == 0 {
            declare_secs = start.elapsed().as_secs_f64();
            fit_start = Instant::now();
        }
    }
    let fit_secs = if ode.psi0_list.len() > 1 { fit_start.elapsed().as_secs_f64() } else { 0.0 };
    Ok(SolveResult { times: times.clone(), solutions, timing: SolveTiming { declare_secs, fit_secs } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{build_reservoir, Activation, HyperParams};

    fn small_hp(seed: u64) -> HyperParams {
        HyperParams {
            n_nodes: 40,
            connectivity: 0.5,
            spectral_radius: 0.9,
            leaking_rate: 0.3,
            bias: 0.5,
            dt: 0.02,
            regularization: 1e-6,
            activation: Activation::Tanh,
            random_seed: seed,
            n_transient: 0,
        }
    }

    fn basis(seed: u64) -> TrialBasis {
        let res = build_reservoir(&small_hp(seed)).unwrap();
        build_basis(&propagate(&res, 0.0, 2.0).unwrap())
    }

    #[test]
    fn pure_derivative_equation() {
        let b = basis(1);
        let ode = LinearOde { a1: 1.0.into(), a0: 0.0.into(), force: 0.0.into(), psi0_list: vec![], t_range: (0.0, 2.0) };
        let cm = characteristic_matrices(&ode, &b, 3.7).unwrap();
        assert_eq!(cm.d_h, b.s_dot);
        assert!(cm.d_0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn driven_d0() {
        let b = basis(2);
        let ode = LinearOde::driven_population(vec![1.0], 2.0);
        let cm = characteristic_matrices(&ode, &b, 1.0).unwrap();
        for (n, &t) in b.times.iter().enumerate() {
            assert!((cm.d_0[n] - (1.0 - t.sin())).abs() < 1e-15);
        }
    }

    #[test]
    fn time_dependent_rows() {
        let b = basis(3);
        let ode = LinearOde::time_dependent(vec![1.0], 2.0);
        let cm = characteristic_matrices(&ode, &b, 1.0).unwrap();
        for (n, &t) in b.times.iter().enumerate() {
            for j in 0..b.n_features() {
                let expected = b.s_dot[(n, j)] + t * t * b.s_mat[(n, j)];
                assert!((cm.d_h[(n, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_coefficient() {
        let b = basis(4);
        let ode = LinearOde { a1: Coeff::Poly(vec![-1.0, 1.0]), a0: 1.0.into(), force: 0.0.into(), psi0_list: vec![], t_range: (0.0, 2.0) };
        assert!(matches!(characteristic_matrices(&ode, &b, 0.0), Err(Error::SingularCoefficient { .. })));
    }

    #[test]
    fn homogeneous_rhs_gives_zero_weights() {
        let cm = CharMatrices { d_h: DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 * 0.1 + 1.0), d_0: DVector::zeros(6) };
        let w = closed_form_weights(&cm, 0.1).unwrap();
        assert!(w.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heavy_ridge_shrinks() {
        let cm = CharMatrices {
            d_h: DMatrix::from_fn(10, 4, |i, j| ((i + 2 * j) as f64).sin()),
            d_0: DVector::from_fn(10, |i, _| (i as f64).cos()),
        };
        let w = closed_form_weights(&cm, 1e12).unwrap();
        let body = w.0.columns(1, 3).norm();
        assert!(body <= 1e-10);
        // bias alone is the unpenalized least-squares fit on column 0
        let c0 = cm.d_h.column(0);
        assert!((w.0[0] + c0.dot(&cm.d_0) / c0.norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn zero_lambda_rank_deficient_falls_back() {
        // Duplicate column: the Gram matrix is singular.
        let d_h = DMatrix::from_fn(5, 2, |i, _| i as f64 + 1.0);
        let cm = CharMatrices { d_h, d_0: DVector::from_element(5, 1.0) };
        let w = closed_form_weights(&cm, 0.0).unwrap();
        // Minimum-norm solution splits the weight evenly: 2w·Σx² = −Σx.
        assert!((w.0[(0, 0)] - w.0[(0, 1)]).abs() < 1e-10);
        assert!((w.0[(0, 0)] + 15.0 / 110.0).abs() < 1e-10);
    }

    #[test]
    fn rmsr_cases() {
        assert_eq!(rmsr(&[vec![0.0, 0.0]]), vec![0.0, 0.0]);
        assert_eq!(rmsr(&[vec![-2.5, 2.5]]), vec![2.5, 2.5]);
        let r = rmsr(&[vec![3.0], vec![4.0]]);
        assert!((r[0] - (12.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_solution_is_exact() {
        let res = build_reservoir(&small_hp(5)).unwrap();
        let ode = LinearOde::simple_population(vec![0.0], 2.0);
        let out = solve_linear(&ode, &res).unwrap();
        assert!(out.solutions[0].residual_rms() <= 1e-6);
        assert!(out.solutions[0].y0().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_propagation_for_many_ics() {
        let res = build_reservoir(&small_hp(6)).unwrap();
        let ode = LinearOde::driven_population(vec![-1.0, 0.0, 1.0, 2.0], 2.0);
        let out = solve_linear(&ode, &res).unwrap();
        assert_eq!(res.propagation_count(), 1);
        for s in &out.solutions {
            assert_eq!(s.y0()[0], s.psi0[0]);
        }
    }

    #[test]
    fn shared_factor_matches_per_ic_solve() {
        let res = build_reservoir(&HyperParams { regularization: 1e-2, ..small_hp(7) }).unwrap();
        let ode = LinearOde::time_dependent(vec![-2.0, 3.0], 2.0);
        let out = solve_linear(&ode, &res).unwrap();
        let b = build_basis(&propagate(&res, 0.0, 2.0).unwrap());
        for s in &out.solutions {
            let cm = characteristic_matrices(&ode, &b, s.psi0[0]).unwrap();
            let w = closed_form_weights(&cm, res.hyper().regularization).unwrap();
            let rel = (&w.0 - &s.weights.0).norm() / w.norm();
            assert!(rel < 1e-10, "{rel}");
        }
    }
}
