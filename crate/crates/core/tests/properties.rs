use esn_ode::gd::{objective, train, AffineResidual, ElasticNet, GdConfig, Optimizer};
use esn_ode::linear::{characteristic_matrices, closed_form_weights, solve_linear, LinearOde};
use esn_ode::{build_basis, build_reservoir, check_derivative_identity, evaluate, propagate, Activation, HyperParams, ReadoutWeights, Reservoir};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn hyper(n_nodes: usize, seed: u64) -> HyperParams {
    HyperParams {
        n_nodes,
        connectivity: 0.3,
        spectral_radius: 0.9,
        leaking_rate: 0.4,
        bias: 0.3,
        dt: 0.02,
        regularization: 1e-6,
        activation: Activation::Tanh,
        random_seed: seed,
        n_transient: 0,
    }
}

prop_compose! {
    fn any_hyper()(
        n_nodes in 5usize..40,
        connectivity in 0.3f64..=1.0,
        spectral_radius in 0.05f64..5.0,
        leaking_rate in 0.01f64..=1.0,
        bias in -1.0f64..1.0,
        dt in 0.005f64..0.1,
        sin in any::<bool>(),
        random_seed in any::<u64>(),
    ) -> HyperParams {
        HyperParams {
            n_nodes,
            connectivity,
            spectral_radius,
            leaking_rate,
            bias,
            dt,
            regularization: 1e-4,
            activation: if sin { Activation::Sin } else { Activation::Tanh },
            random_seed,
            n_transient: 0,
        }
    }
}

/// `exp` of the mean log growth of `‖Aᵏx‖` over a long window; converges to
/// the spectral radius whatever the phase of the dominant eigenvalues.
fn growth_rate(res: &Reservoir) -> f64 {
    let w = res.w_res();
    let n = w.nrows();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin()).collect();
    let mut y = vec![0.0; n];
    let mut log_sum = 0.0;
    let (burn, window) = (500, 3000);
    for k in 0..burn + window {
        w.mul_vec_into(&x, &mut y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        if k >= burn {
            log_sum += norm.ln();
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    (log_sum / window as f64).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn build_and_propagate_are_deterministic(hp in any_hyper()) {
        let a = build_reservoir(&hp).unwrap();
        let b = build_reservoir(&hp).unwrap();
        prop_assert_eq!(&a, &b);
        let (ta, tb) = (propagate(&a, 0.0, 1.0).unwrap(), propagate(&b, 0.0, 1.0).unwrap());
        prop_assert_eq!(ta.states, tb.states);
        prop_assert_eq!(ta.state_derivs, tb.state_derivs);
    }

    #[test]
    fn states_stay_in_unit_box(hp in any_hyper()) {
        let traj = propagate(&build_reservoir(&hp).unwrap(), 0.0, 3.0).unwrap();
        prop_assert!(traj.states.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn derivative_identity_holds(hp in any_hyper()) {
        let traj = propagate(&build_reservoir(&hp).unwrap(), 0.0, 2.0).unwrap();
        prop_assert!(check_derivative_identity(&traj) <= 1e-10);
    }

    #[test]
    fn json_round_trip(hp in any_hyper()) {
        let res = build_reservoir(&hp).unwrap();
        prop_assert_eq!(Reservoir::from_json(&res.to_json().unwrap()).unwrap(), res);
    }

    #[test]
    fn trial_solution_starts_at_ic(hp in any_hyper(), scale in 0.01f64..100.0, psi0 in -50.0f64..50.0, seed in any::<u64>()) {
        let basis = build_basis(&propagate(&build_reservoir(&hp).unwrap(), 0.0, 1.0).unwrap());
        let w = esn_ode::gd::random_weights(1, basis.n_features(), seed);
        let w = ReadoutWeights(w.0 * scale);
        let (y, _) = evaluate(&basis, &w, &[psi0]).unwrap();
        prop_assert_eq!(y[(0, 0)], psi0);
    }

    #[test]
    fn evaluate_is_linear_in_weights(hp in any_hyper(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let basis = build_basis(&propagate(&build_reservoir(&hp).unwrap(), 0.0, 1.0).unwrap());
        let f = basis.n_features();
        let (w1, w2) = (esn_ode::gd::random_weights(2, f, s1), esn_ode::gd::random_weights(2, f, s2));
        let sum = ReadoutWeights(&w1.0 + &w2.0);
        let (y1, d1) = evaluate(&basis, &w1, &[0.0, 0.0]).unwrap();
        let (y2, d2) = evaluate(&basis, &w2, &[0.0, 0.0]).unwrap();
        let (y, d) = evaluate(&basis, &sum, &[0.0, 0.0]).unwrap();
        let tol = 1e-14 * (1.0 + y1.amax() + y2.amax());
        prop_assert!((y - &y1 - &y2).amax() <= tol);
        let tol = 1e-14 * (1.0 + d1.amax() + d2.amax());
        prop_assert!((d - &d1 - &d2).amax() <= tol);
    }
}

#[test]
fn rescaled_radius_for_many_seeds() {
    for n_nodes in [50, 250, 500] {
        for seed in 0..100 {
            let hp = HyperParams { n_nodes, connectivity: 0.02, spectral_radius: 1.3, ..hyper(n_nodes, seed) };
            let res = build_reservoir(&hp).unwrap();
            let est = growth_rate(&res);
            assert!((est - 1.3).abs() <= 0.03 * 1.3, "M {n_nodes} seed {seed}: {est}");
        }
    }
}

#[test]
fn one_propagation_per_multi_ic_solve() {
    let res = build_reservoir(&hyper(30, 4)).unwrap();
    let before = res.propagation_count();
    let ode = LinearOde::driven_population((0..25).map(|i| i as f64 - 12.0).collect(), 3.0);
    let out = solve_linear(&ode, &res).unwrap();
    assert_eq!(res.propagation_count(), before + 1);
    for sol in &out.solutions {
        assert_eq!(sol.y0()[0], sol.psi0[0]);
    }
}

#[test]
fn closed_form_gradient_vanishes() {
    let basis = build_basis(&propagate(&build_reservoir(&hyper(12, 9)).unwrap(), 0.0, 2.0).unwrap());
    let ode = LinearOde::time_dependent(vec![], 2.0);
    for (psi0, lambda) in [(1.0, 0.0), (-3.0, 1e-3), (0.5, 2.0)] {
        let cm = characteristic_matrices(&ode, &basis, psi0).unwrap();
        let w = closed_form_weights(&cm, lambda).unwrap();
        let mut penalized = w.0.transpose();
        penalized[0] = 0.0;
        let grad = 2.0 * cm.d_h.tr_mul(&(&cm.d_h * w.0.transpose() + &cm.d_0)) + 2.0 * lambda * penalized;
        assert!(grad.norm() <= 1e-8 * (1.0 + cm.d_h.tr_mul(&cm.d_0).norm()), "{}", grad.norm());
    }
}

fn affine(basis: &esn_ode::TrialBasis, psi0: f64) -> AffineResidual {
    AffineResidual {
        a1: vec![1.0; basis.len()],
        a0: vec![1.0; basis.len()],
        force: basis.times.iter().map(|t| t.sin()).collect(),
        psi0: [psi0],
    }
}

#[test]
fn returned_weights_reach_the_best_loss() {
    let basis = build_basis(&propagate(&build_reservoir(&hyper(20, 2)).unwrap(), 0.0, 3.0).unwrap());
    let problem = affine(&basis, 1.5);
    for optimizer in [Optimizer::Gd, Optimizer::Adam] {
        let cfg = GdConfig { epochs: 400, learning_rate: 0.05, enet_alpha: 0.3, enet_strength: 1e-3, optimizer, ..GdConfig::default() };
        let w0 = ReadoutWeights::zeros(1, basis.n_features());
        let (w, trace) = train(&problem, &basis, &w0, &cfg).unwrap();
        let (loss, _) = objective(&problem, &basis, &w, &cfg.elastic_net()).unwrap();
        assert!((loss - trace.best_loss).abs() <= 1e-13 * trace.best_loss, "{loss} vs {}", trace.best_loss);
        assert!(trace.best_loss <= trace.initial_loss());
    }
}

#[test]
fn gradient_descent_reaches_the_closed_form_loss() {
    let basis = build_basis(&propagate(&build_reservoir(&hyper(6, 3)).unwrap(), 0.0, 2.0).unwrap());
    let problem = affine(&basis, -0.7);
    let ode = LinearOde::driven_population(vec![], 2.0);
    let exact = closed_form_weights(&characteristic_matrices(&ode, &basis, -0.7).unwrap(), 0.0).unwrap();
    let none = ElasticNet::none();
    let (target, _) = objective(&problem, &basis, &exact, &none).unwrap();
    let cfg = GdConfig { epochs: 50000, learning_rate: 0.01, optimizer: Optimizer::Adam, ..GdConfig::default() };
    let (_, trace) = train(&problem, &basis, &ReadoutWeights(DMatrix::zeros(1, basis.n_features())), &cfg).unwrap();
    assert!(trace.best_loss - target <= 1e-6, "{} vs {target}", trace.best_loss);
}
