use std::f64::consts::PI;

use esn_ode::bernoulli::{solve_bernoulli, BernoulliOde, InitStrategy};
use esn_ode::coeff::Coeff;
use esn_ode::gd::{GdConfig, Optimizer};
use esn_ode::hyperopt::{minimize, TurboConfig};
use esn_ode::integrate::{euler_integrate, rk4_integrate};
use esn_ode::linear::{driven_population_exact, LinearOde};
use esn_ode::system::{solve_system, HarmonicOscillator, OdeSystem, SystemKind};
use esn_ode::{build_reservoir, Activation, HyperParams};

fn small_hyper(dt: f64, activation: Activation) -> HyperParams {
    HyperParams {
        n_nodes: 60,
        connectivity: 0.2,
        spectral_radius: 0.9,
        leaking_rate: 0.3,
        bias: 0.4,
        dt,
        regularization: 1e-6,
        activation,
        random_seed: 7,
        n_transient: 0,
    }
}

#[test]
fn euler_on_driven_population_is_first_order() {
    let traj = euler_integrate(&LinearOde::driven_population(vec![], 4.0 * PI), &[1.0], 1e-3, (0.0, 4.0 * PI)).unwrap();
    let err = traj
        .times
        .iter()
        .zip(traj.component(0))
        .map(|(&t, y)| (y - driven_population_exact(1.0, t)).abs())
        .fold(0.0, f64::max);
    assert!(err <= 5e-3, "{err}");
}

#[test]
fn rk4_reference_accuracy() {
    let decay = (1, |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]);
    let traj = rk4_integrate(&decay, &[1.0], 0.1, (0.0, 1.0)).unwrap();
    assert_eq!(traj.times.len(), 11);
    assert!((traj.states[10][0] - (-1.0f64).exp()).abs() <= 1e-6);

    let traj = rk4_integrate(&HarmonicOscillator, &[1.0, 0.0], 2.0 * PI / 6283.0, (0.0, 2.0 * PI)).unwrap();
    let last = traj.states.last().unwrap();
    assert!((last[0] - 1.0).abs() <= 1e-8 && last[1].abs() <= 1e-8, "{last:?}");
}

#[test]
fn zero_ic_bernoulli_stays_at_zero() {
    let ode = BernoulliOde::logistic(vec![0.0], 2.0 * PI);
    let res = build_reservoir(&small_hyper(0.02, Activation::Tanh)).unwrap();
    let cfg = GdConfig { epochs: 200, optimizer: Optimizer::Adam, ..GdConfig::default() };
    let out = solve_bernoulli(&ode, &res, &cfg, InitStrategy::LinearizedThenGd).unwrap();
    assert!(out.result.solutions[0].residual_rms() <= 1e-6);
}

#[test]
fn linear_case_gains_nothing_from_descent() {
    let ode = BernoulliOde {
        a1: 1.0.into(),
        a0: 1.0.into(),
        q: 0.0.into(),
        force: Coeff::sin(),
        psi0_list: vec![-2.0, 1.0],
        t_range: (0.0, 2.0 * PI),
    };
    let res = build_reservoir(&small_hyper(0.02, Activation::Tanh)).unwrap();
    let cfg = GdConfig { epochs: 300, learning_rate: 1e-3, ..GdConfig::default() };
    let out = solve_bernoulli(&ode, &res, &cfg, InitStrategy::LinearizedThenGd).unwrap();
    for trace in &out.traces {
        assert!(trace.initial_loss() - trace.best_loss <= 1e-8, "{} -> {}", trace.initial_loss(), trace.best_loss);
    }
}

#[test]
fn descent_never_ends_above_its_start() {
    let ode = BernoulliOde::logistic(vec![-1.0, 1.0, 2.0], 2.0 * PI);
    let res = build_reservoir(&small_hyper(0.02, Activation::Tanh)).unwrap();
    let cfg = GdConfig { epochs: 300, optimizer: Optimizer::Adam, ..GdConfig::default() };
    for init in [InitStrategy::Random, InitStrategy::LinearizedThenGd] {
        let out = solve_bernoulli(&ode, &res, &cfg, init).unwrap();
        for trace in &out.traces {
            assert!(trace.best_loss <= trace.initial_loss());
        }
    }
}

#[test]
fn oscillator_at_rest_stays_at_rest() {
    let sys = OdeSystem::from_kind(SystemKind::NonlinearOscillator, vec![0.0, 0.0], (0.0, 2.0 * PI), true).unwrap();
    assert_eq!(sys.hamiltonian.as_ref().unwrap().energy, 0.0);
    let hp = HyperParams { n_nodes: 5, connectivity: 0.5, leaking_rate: 0.5, ..small_hyper(0.02, Activation::Sin) };
    let res = build_reservoir(&hp).unwrap();
    let cfg = GdConfig { epochs: 5000, learning_rate: 1e-3, optimizer: Optimizer::Adam, ..GdConfig::default() };
    let out = solve_system(&sys, &res, &cfg).unwrap();
    let rms = out.result.solutions[0].residual_rms();
    assert!(rms <= 1e-6, "{rms}");
}

#[test]
fn harmonic_oscillator_follows_cos_and_sin() {
    let sys = OdeSystem::from_kind(SystemKind::HarmonicOscillator, vec![1.0, 0.0], (0.0, 2.0 * PI), true).unwrap();
    let hp = HyperParams { n_nodes: 100, leaking_rate: 0.05, spectral_radius: 1.5, ..small_hyper(0.01, Activation::Sin) };
    let res = build_reservoir(&hp).unwrap();
    let cfg = GdConfig { epochs: 4000, learning_rate: 0.01, optimizer: Optimizer::Adam, ..GdConfig::default() };
    let out = solve_system(&sys, &res, &cfg).unwrap();
    let sol = &out.result.solutions[0];
    let mut worst = 0.0f64;
    for (n, &t) in out.result.times.iter().enumerate() {
        worst = worst.max((sol.y[0][n] - t.cos()).abs()).max((sol.y[1][n] + t.sin()).abs());
    }
    assert!(worst <= 5e-2, "{worst}");
}

#[test]
fn incumbents_never_increase_and_budget_is_exact() {
    let f = |x: &[f64]| (x[0] - 0.2).powi(2) + (x[1] - 0.7).abs();
    let cfg = TurboConfig { n_init: 6, batch_size: 3, max_evals: 30, seed: 4, ..TurboConfig::default() };
    let r = minimize(2, &f, &cfg);
    let inc = r.incumbents();
    assert!(inc.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.history.len() <= 30);
    if !r.final_region.converged() {
        assert_eq!(r.history.len(), 30);
    }
    assert_eq!(r.history, minimize(2, &f, &cfg).history);
}
