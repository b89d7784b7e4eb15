//! The fixed echo-state reservoir.
//!
//! A reservoir is a leaky recurrent network driven by the time grid itself,
//! `u_n = t_n`. Its weights are drawn once from a seeded generator and never
//! trained. Propagation produces the hidden states and, at no extra cost,
//! their time derivatives:
//!
//! ```text
//! h_{n+1} = (1 - α) h_n + α f(W_res h_n + W_in u_n + b)
//! ḣ_n     = (α / Δt) (f(W_res h_n + W_in u_n + b) - h_n)
//! ```
//!
//! The second line is the first rearranged, so `(h_{n+1} - h_n) / Δt = ḣ_n`
//! holds to rounding error; [`check_derivative_identity`] measures it.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::spectral::spectral_radius;

/// Seed used by every bundled experiment.
pub const DEFAULT_SEED: u64 = 209;

/// Serialization format version written by [`Reservoir::to_json`].
pub const FORMAT_VERSION: u32 = 1;

/// Resampling budget for recurrent patterns whose graph has no cycle.
const MAX_PATTERN_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sin" => Ok(Activation::Sin),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Reservoir hyperparameters. Serialized field names are the `[hyper]` keys
/// of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_nodes: usize,
    pub connectivity: f64,
    pub spectral_radius: f64,
    pub leaking_rate: f64,
    pub bias: f64,
    pub dt: f64,
    #[serde(default)]
    pub regularization: f64,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_seed")]
    pub random_seed: u64,
    /// Steps run before `t_start` and discarded. Zero keeps the states aligned
    /// with the trial-solution origin.
    #[serde(default)]
    pub n_transient: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Error {
            Error::InvalidHyperParam { name, reason: reason.into() }
        }
        if self.n_nodes == 0 {
            return Err(bad("n_nodes", "must be at least 1"));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(bad("connectivity", format!("{} not in (0, 1]", self.connectivity)));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return Err(bad("spectral_radius", format!("{} must be positive", self.spectral_radius)));
        }
        if !(self.leaking_rate > 0.0 && self.leaking_rate <= 1.0) {
            return Err(bad("leaking_rate", format!("{} not in (0, 1]", self.leaking_rate)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(bad("regularization", format!("{} must be nonnegative", self.regularization)));
        }
        if !self.bias.is_finite() {
            return Err(bad("bias", "must be finite"));
        }
        Ok(())
    }

    /// Simple population `ẏ + y = 0`.
    pub fn simple_population() -> Self {
        Self {
            dt: 0.0031622776601683794,
            n_nodes: 250,
            connectivity: 0.7170604557008349,
            spectral_radius: 1.5755887031555176,
            regularization: 0.00034441529823729916,
            leaking_rate: 0.9272222518920898,
            bias: 0.1780446171760559,
            activation: Activation::Tanh,
            random_seed: DEFAULT_SEED,
            n_transient: 0,
        }
    }

    /// Driven population `ẏ + y = sin t`.
    pub fn driven_population() -> Self {
        Self {
            dt: 0.0031622776601683794,
            n_nodes: 500,
            connectivity: 0.7875262340500385,
            spectral_radius: 9.97140121459961,
            regularization: 8.656278081920211,
            leaking_rate: 0.007868987508118153,
            bias: -0.2435922622680664,
            activation: Activation::Tanh,
            random_seed: DEFAULT_SEED,
            n_transient: 0,
        }
    }

    /// Time-dependent coefficients `ẏ + t² y = sin t`.
    pub fn time_dependent() -> Self {
        Self {
            n_nodes: 500,
            connectivity: 0.09905712745750006,
            spectral_radius: 1.8904799222946167,
            regularization: 714.156090350679,
            leaking_rate: 0.031645022332668304,
            bias: -0.24167031049728394,
            dt: 0.005,
            activation: Activation::Tanh,
            random_seed: DEFAULT_SEED,
            n_transient: 0,
        }
    }

    /// Bernoulli `ẏ + y + 0.5 y² = 0`.
    pub fn bernoulli() -> Self {
        Self {
            dt: 0.007943282347242814,
            n_nodes: 500,
            connectivity: 0.0003179179463749722,
            spectral_radius: 7.975825786590576,
            regularization: 0.3332787303378571,
            leaking_rate: 0.07119506597518921,
            bias: -0.9424528479576111,
            activation: Activation::Tanh,
            random_seed: DEFAULT_SEED,
            n_transient: 0,
        }
    }

    /// Nonlinear oscillator `ẋ = p, ṗ = -x - x³`.
    pub fn nonlinear_oscillator() -> Self {
        Self {
            dt: 0.001,
            regularization: 48.97788193684461,
            n_nodes: 500,
            connectivity: 0.017714821964432213,
            spectral_radius: 2.3660330772399902,
            leaking_rate: 0.0024312976747751236,
            bias: 0.37677669525146484,
            activation: Activation::Sin,
            random_seed: DEFAULT_SEED,
            n_transient: 0,
        }
    }
}

/// Fixed random recurrent network. Immutable after [`build_reservoir`].
#[derive(Debug, Serialize, Deserialize)]
pub struct Reservoir {
    format_version: u32,
    hyper: HyperParams,
    w_in: Vec<f64>,
    w_res: CsrMatrix,
    bias_vec: Vec<f64>,
    /// Number of resampled recurrent patterns before an admissible one was found.
    pattern_attempts: usize,
    #[serde(skip)]
    propagations: AtomicUsize,
}

impl Clone for Reservoir {
    fn clone(&self) -> Self {
        Self {
            format_version: self.format_version,
            hyper: self.hyper.clone(),
            w_in: self.w_in.clone(),
            w_res: self.w_res.clone(),
            bias_vec: self.bias_vec.clone(),
            pattern_attempts: self.pattern_attempts,
            propagations: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for Reservoir {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper
            && self.w_in == other.w_in
            && self.w_res == other.w_res
            && self.bias_vec == other.bias_vec
    }
}

/// Sample the reservoir weights described by `hyper`.
///
/// Recurrent entries are nonzero with probability `connectivity`, with values
/// uniform on [-1, 1], then rescaled to the requested spectral radius. A
/// pattern whose dependency graph has no cycle is nilpotent and cannot be
/// rescaled; such patterns are redrawn from the same generator stream.
pub fn build_reservoir(hyper: &HyperParams) -> Result<Reservoir> {
    hyper.validate()?;
    let m = hyper.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.random_seed);

    let mut attempts = 0;
    let (w_res, radius) = loop {
        attempts += 1;
        let mut triplets = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if rng.random::<f64>() < hyper.connectivity {
                    let v: f64 = rng.random_range(-1.0..=1.0);
                    if v != 0.0 {
                        triplets.push((i, j, v));
                    }
                }
            }
        }
        if triplets.is_empty() {
            return Err(Error::AllZeroRecurrent);
        }
        let w = CsrMatrix::from_triplets(m, m, triplets);
        let radius = spectral_radius(&w).ok_or_else(|| {
            Error::IllConditioned("eigenvalue iteration did not converge on the recurrent matrix".into())
        })?;
        if radius > 0.0 {
            break (w, radius);
        }
        if attempts >= MAX_PATTERN_ATTEMPTS {
            return Err(Error::DegenerateSpectrum { attempts });
        }
    };
    if attempts > 1 {
        log::debug!("recurrent pattern resampled {} times before a cycle appeared", attempts - 1);
    }
    let mut w_res = w_res;
    w_res.scale(hyper.spectral_radius / radius);

    let w_in = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let bias_vec = (0..m).map(|_| hyper.bias * rng.random_range(-1.0..=1.0)).collect();

    Ok(Reservoir {
        format_version: FORMAT_VERSION,
        hyper: hyper.clone(),
        w_in,
        w_res,
        bias_vec,
        pattern_attempts: attempts,
        propagations: AtomicUsize::new(0),
    })
}

impl Reservoir {
    /// Assemble a reservoir from explicit weights. `w_res` is used as given,
    /// without spectral rescaling.
    pub fn from_parts(hyper: HyperParams, w_in: Vec<f64>, w_res: &DMatrix<f64>, bias_vec: Vec<f64>) -> Result<Self> {
        hyper.validate()?;
        let m = hyper.n_nodes;
        if w_in.len() != m || bias_vec.len() != m || w_res.nrows() != m || w_res.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "expected {m} nodes, got w_in {}, bias {}, w_res {}x{}",
                w_in.len(),
                bias_vec.len(),
                w_res.nrows(),
                w_res.ncols()
            )));
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            hyper,
            w_in,
            w_res: CsrMatrix::from_dense(w_res),
            bias_vec,
            pattern_attempts: 1,
            propagations: AtomicUsize::new(0),
        })
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn n_nodes(&self) -> usize {
        self.hyper.n_nodes
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn bias_vec(&self) -> &[f64] {
        &self.bias_vec
    }

    pub fn w_res(&self) -> &CsrMatrix {
        &self.w_res
    }

    pub fn w_res_dense(&self) -> DMatrix<f64> {
        self.w_res.to_dense()
    }

    pub fn recurrent_nnz(&self) -> usize {
        self.w_res.nnz()
    }

    pub fn pattern_attempts(&self) -> usize {
        self.pattern_attempts
    }

    /// How many times [`propagate`] has run on this reservoir.
    pub fn propagation_count(&self) -> usize {
        self.propagations.load(Ordering::Relaxed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let res: Reservoir = serde_json::from_str(s)?;
        if res.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported reservoir format version {} (expected {FORMAT_VERSION})",
                res.format_version
            )));
        }
        res.hyper.validate()?;
        Ok(res)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `f(W_res h + W_in u + b)` into `out`.
    fn activate(&self, h: &[f64], u: f64, out: &mut [f64]) {
        self.w_res.mul_vec_into(h, out);
        let act = self.hyper.activation;
        for ((o, &wi), &b) in out.iter_mut().zip(&self.w_in).zip(&self.bias_vec) {
            *o = act.apply(*o + wi * u + b);
        }
    }
}

/// Uniform time grid `t_start, t_start + dt, ...` whose last point is the
/// largest grid point not exceeding `t_end + dt/2`.
pub fn time_grid(t_start: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidGrid(format!("need t_end > t_start, got [{t_start}, {t_end}]")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidGrid(format!("dt = {dt} must be positive")));
    }
    let steps = (t_end - t_start) / dt;
    if steps < 2.0 {
        return Err(Error::InvalidGrid(format!("range [{t_start}, {t_end}] spans fewer than two steps of {dt}")));
    }
    let last = (steps + 0.5).floor() as usize;
    Ok((0..=last).map(|n| t_start + n as f64 * dt).collect())
}

/// Hidden states and their analytic derivatives over a uniform grid. Both
/// matrices carry a leading bias column (ones for the states, zeros for the
/// derivatives).
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub dt: f64,
    pub leaking_rate: f64,
    /// K × (M + 1), rows `[1, h_n]`.
    pub states: DMatrix<f64>,
    /// K × (M + 1), rows `[0, ḣ_n]`.
    pub state_derivs: DMatrix<f64>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.states.ncols()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }
}

/// Drive the reservoir with `u_n = t_n` over `[t_start, t_end]`.
pub fn propagate(res: &Reservoir, t_start: f64, t_end: f64) -> Result<StateTrajectory> {
    let hyper = &res.hyper;
    let times = time_grid(t_start, t_end, hyper.dt)?;
    res.propagations.fetch_add(1, Ordering::Relaxed);

    let m = hyper.n_nodes;
    let k = times.len();
    let alpha = hyper.leaking_rate;
    let rate = alpha / hyper.dt;

    let mut h = vec![0.0; m];
    let mut act = vec![0.0; m];
    for j in 0..hyper.n_transient {
        let u = t_start - (hyper.n_transient - j) as f64 * hyper.dt;
        res.activate(&h, u, &mut act);
        for (hi, &a) in h.iter_mut().zip(&act) {
            *hi = (1.0 - alpha) * *hi + alpha * a;
        }
    }

    let mut states = DMatrix::zeros(k, m + 1);
    let mut derivs = DMatrix::zeros(k, m + 1);
    for (n, &u) in times.iter().enumerate() {
        states[(n, 0)] = 1.0;
        res.activate(&h, u, &mut act);
        for j in 0..m {
            states[(n, j + 1)] = h[j];
            derivs[(n, j + 1)] = -rate * h[j] + rate * act[j];
        }
        let mut finite = true;
        for (hi, &a) in h.iter_mut().zip(&act) {
            *hi = (1.0 - alpha) * *hi + alpha * a;
            finite &= hi.is_finite();
        }
        if !finite || act.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteState { step: n });
        }
    }

    Ok(StateTrajectory { times, dt: hyper.dt, leaking_rate: alpha, states, state_derivs: derivs })
}

/// Largest violation of `(h_{n+1} - h_n)/Δt = ḣ_n` over all rows and
/// non-bias columns.
pub fn check_derivative_identity(traj: &StateTrajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 0..traj.len().saturating_sub(1) {
        for j in 1..traj.n_features() {
            let fd = (traj.states[(n + 1, j)] - traj.states[(n, j)]) / traj.dt;
            worst = worst.max((fd - traj.state_derivs[(n, j)]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_nodes: usize, seed: u64) -> HyperParams {
        HyperParams {
            n_nodes,
            connectivity: 0.3,
            spectral_radius: 0.9,
            leaking_rate: 0.5,
            bias: 0.2,
            dt: 0.01,
            regularization: 1e-4,
            activation: Activation::Tanh,
            random_seed: seed,
            n_transient: 0,
        }
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut hp = small(10, 1);
        hp.connectivity = 0.0;
        assert!(matches!(hp.validate(), Err(Error::InvalidHyperParam { name: "connectivity", .. })));
        let mut hp = small(10, 1);
        hp.leaking_rate = 1.5;
        assert!(hp.validate().is_err());
        let mut hp = small(10, 1);
        hp.dt = 0.0;
        assert!(hp.validate().is_err());
        let mut hp = small(10, 1);
        hp.n_nodes = 0;
        assert!(hp.validate().is_err());
        let mut hp = small(10, 1);
        hp.regularization = -1.0;
        assert!(hp.validate().is_err());
        for hp in [
            HyperParams::simple_population(),
            HyperParams::driven_population(),
            HyperParams::time_dependent(),
            HyperParams::bernoulli(),
            HyperParams::nonlinear_oscillator(),
        ] {
            hp.validate().unwrap();
        }
    }

    #[test]
    fn dense_connectivity_fills_every_entry() {
        let mut hp = small(4, 3);
        hp.connectivity = 1.0;
        let res = build_reservoir(&hp).unwrap();
        assert_eq!(res.recurrent_nnz(), 16);
    }

    #[test]
    fn all_zero_recurrent_is_an_error() {
        let mut hp = small(1, 0);
        hp.connectivity = 1e-12;
        assert!(matches!(build_reservoir(&hp), Err(Error::AllZeroRecurrent)));
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_reservoir(&small(30, 7)).unwrap();
        let b = build_reservoir(&small(30, 7)).unwrap();
        let c = build_reservoir(&small(30, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn radius_is_rescaled() {
        let res = build_reservoir(&small(40, 11)).unwrap();
        let r = crate::spectral::dense_spectral_radius(res.w_res_dense()).unwrap();
        assert!((r - 0.9).abs() <= 1e-6 * 0.9, "{r}");
    }

    #[test]
    fn hard_sparse_block_is_rescaled() {
        // A 250-node pattern whose recurrent block stalls an unshifted
        // dense QR iteration.
        let hp = HyperParams {
            n_nodes: 250,
            connectivity: 0.004384963284448171,
            spectral_radius: 1.4432582795349387,
            random_seed: 11667984563878403184,
            ..small(250, 0)
        };
        let res = build_reservoir(&hp).unwrap();
        let r = crate::spectral::spectral_radius(res.w_res()).unwrap();
        assert!((r - hp.spectral_radius).abs() <= 1e-9, "{r}");
    }

    #[test]
    fn grid_endpoint_rule() {
        let g = time_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 4); // 0, .3, .6, .9; 1.2 > 1.15
        let g = time_grid(0.0, 1.0, 0.25).unwrap();
        assert_eq!(g.len(), 5);
        let g = time_grid(0.0, 0.3, 0.1).unwrap();
        assert_eq!(g.len(), 4);
        assert!(time_grid(0.0, 0.15, 0.1).is_err());
        assert!(time_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn unit_leak_drops_history() {
        let mut hp = small(6, 5);
        hp.leaking_rate = 1.0;
        let res = build_reservoir(&hp).unwrap();
        let traj = propagate(&res, 0.0, 0.05).unwrap();
        for j in 0..6 {
            let expected = (res.w_in[j] * 0.0 + res.bias_vec[j]).tanh();
            assert!((traj.states[(1, j + 1)] - expected).abs() < 1e-15);
            assert_eq!(traj.states[(0, j + 1)], 0.0);
        }
    }

    #[test]
    fn tiny_leak_freezes_states() {
        let mut hp = small(8, 2);
        hp.leaking_rate = 1e-12;
        let res = build_reservoir(&hp).unwrap();
        let traj = propagate(&res, 0.0, 1.0).unwrap();
        let last = traj.len() - 1;
        for j in 1..=8 {
            assert!((traj.states[(last, j)] - traj.states[(0, j)]).abs() <= 1e-9);
            for n in 0..traj.len() {
                assert!(traj.state_derivs[(n, j)].abs() <= 1e-9 / hp.dt);
            }
        }
    }

    #[test]
    fn hand_iterated_two_node_reservoir() {
        let hp = HyperParams {
            n_nodes: 2,
            connectivity: 1.0,
            spectral_radius: 0.5,
            leaking_rate: 0.5,
            bias: 0.0,
            dt: 0.1,
            regularization: 0.0,
            activation: Activation::Tanh,
            random_seed: 0,
            n_transient: 0,
        };
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let res = Reservoir::from_parts(hp, vec![1.0, 1.0], &w, vec![0.0, 0.0]).unwrap();
        let traj = propagate(&res, 0.0, 0.3).unwrap();
        assert_eq!(traj.len(), 4);

        // Oracle: scalar iteration, both nodes are identical.
        let mut h = 0.0_f64;
        let mut expected = vec![];
        for n in 0..4 {
            let t = n as f64 * 0.1;
            let a = (0.5 * h + t).tanh();
            expected.push((h, 5.0 * (a - h)));
            h = 0.5 * h + 0.5 * a;
        }
        for (n, (h, hd)) in expected.into_iter().enumerate() {
            for j in 1..=2 {
                assert!((traj.states[(n, j)] - h).abs() < 1e-12);
                assert!((traj.state_derivs[(n, j)] - hd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroed_derivatives_report_max_difference_quotient() {
        let res = build_reservoir(&small(5, 9)).unwrap();
        let mut traj = propagate(&res, 0.0, 0.2).unwrap();
        traj.state_derivs.fill(0.0);
        let mut expected: f64 = 0.0;
        for n in 0..traj.len() - 1 {
            for j in 1..6 {
                expected = expected.max(((traj.states[(n + 1, j)] - traj.states[(n, j)]) / traj.dt).abs());
            }
        }
        assert_eq!(check_derivative_identity(&traj), expected);
    }

    #[test]
    fn bias_and_derivative_columns() {
        let res = build_reservoir(&small(5, 4)).unwrap();
        let traj = propagate(&res, 0.0, 0.5).unwrap();
        assert!(traj.states.column(0).iter().all(|&v| v == 1.0));
        assert!(traj.state_derivs.column(0).iter().all(|&v| v == 0.0));
        assert!(check_derivative_identity(&traj) <= 1e-10 * (0.5 / 0.01));
    }

    #[test]
    fn divergent_states_are_reported() {
        let mut res = build_reservoir(&small(3, 1)).unwrap();
        res.w_in = vec![f64::NAN; 3];
        assert!(matches!(propagate(&res, 0.0, 0.1), Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let res = build_reservoir(&small(12, 21)).unwrap();
        let back = Reservoir::from_json(&res.to_json().unwrap()).unwrap();
        assert_eq!(res, back);
        let a = propagate(&res, 0.0, 0.3).unwrap();
        let b = propagate(&back, 0.0, 0.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn propagation_counter() {
        let res = build_reservoir(&small(4, 1)).unwrap();
        assert_eq!(res.propagation_count(), 0);
        propagate(&res, 0.0, 0.1).unwrap();
        propagate(&res, 0.0, 0.1).unwrap();
        assert_eq!(res.propagation_count(), 2);
    }
}
