use polgrad_core::matrix_game::{mwu_step, OmwuState, MatrixGame, StrategyPair};
use polgrad_core::mdp::StochasticPolicy;
use polgrad_core::numeric::{
    entropy, is_distribution, kl_divergence, logsumexp, project_to_simplex, softmax, solve_discrete_lyapunov,
    Distribution, LyapunovMode, Mat, Vector,
};
use polgrad_core::pg::{entropy_npg_step, mirror_descent_rate, mirror_descent_step, npg_step};
use polgrad_core::random::{
    random_distribution, random_matrix_game, random_mdp, random_policy, seeded,
};
use proptest::prelude::*;
use rand::Rng;

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_kkt_point(v in finite_vec(8)) {
        let p = project_to_simplex(&v).unwrap();
        prop_assert!(is_distribution(p.as_slice()));
        // active coordinates share one threshold; inactive ones lie below it
        let support: Vec<usize> = (0..v.len()).filter(|&i| p[i] > 0.0).collect();
        let theta = v[support[0]] - p[support[0]];
        for i in 0..v.len() {
            if p[i] > 0.0 {
                prop_assert!((v[i] - p[i] - theta).abs() <= 1e-9);
            } else {
                prop_assert!(v[i] <= theta + 1e-9);
            }
        }
        let again = project_to_simplex(p.as_slice()).unwrap();
        for i in 0..v.len() {
            prop_assert!((again[i] - p[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn entropy_and_kl_ranges(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = seeded(seed);
        let p = random_distribution(&mut rng, n);
        let q = random_distribution(&mut rng, n);
        let h = entropy(&p);
        prop_assert!(h >= -1e-15 && h <= (n as f64).ln() + 1e-12);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-15);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn softmax_is_shift_invariant(x in finite_vec(6), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let (a, b) = (softmax(&x), softmax(&shifted));
        prop_assert!(is_distribution(&a));
        for i in 0..x.len() {
            prop_assert!((a[i] - b[i]).abs() <= 1e-12);
        }
        prop_assert!((logsumexp(&shifted) - logsumexp(&x) - c).abs() <= 1e-9);
    }

    #[test]
    fn advantages_are_centered(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        let eval = mdp.evaluate_policy(&pi).unwrap();
        for s in 0..4 {
            let centered: f64 = (0..3).map(|a| pi.prob(s, a) * eval.adv[(s, a)]).sum();
            prop_assert!(centered.abs() <= 1e-10);
        }
        prop_assert!(is_distribution(eval.d_rho.as_slice()));
    }

    #[test]
    fn optimal_value_dominates_and_mismatch_bound(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mdp = random_mdp(&mut rng, 4, 3, 0.8);
        let pi = random_policy(&mut rng, 4, 3);
        let opt = mdp.optimal_values(1e-12).unwrap();
        let v = mdp.evaluate_policy(&pi).unwrap().v;
        for s in 0..4 {
            prop_assert!(opt.v[s] >= v[s] - 1e-10);
        }
        let phi = random_distribution(&mut rng, 4);
        let rho = mdp.rho();
        let ratio = (0..4).map(|s| phi[s] / rho[s]).fold(0.0, f64::max);
        let gap = |d: &Distribution| d.dot((&opt.v - &v).as_slice());
        prop_assert!(gap(&phi) <= ratio * gap(rho) + 1e-9);
    }

    #[test]
    fn soft_evaluation_is_entropy_augmented_evaluation(seed in any::<u64>(), tau in 0.01f64..1.0) {
        let mut rng = seeded(seed);
        let (n, m, gamma) = (4, 3, 0.85);
        let mdp = random_mdp(&mut rng, n, m, gamma);
        let pi = random_policy(&mut rng, n, m);
        let soft = mdp.soft_evaluate_policy(&pi, tau).unwrap();
        // direct linear solve with reward r_pi(s) + tau H(pi(.|s))
        let chain = mdp.induced_chain(&pi);
        let reward = Vector::from_fn(n, |s, _| {
            (0..m).map(|a| pi.prob(s, a) * mdp.rewards()[(s, a)]).sum::<f64>() + tau * entropy(&pi.row(s))
        });
        let v = (Mat::identity(n, n) - chain * gamma).lu().solve(&reward).unwrap();
        for s in 0..n {
            prop_assert!((soft.v[s] - v[s]).abs() <= 1e-10);
        }
    }

    #[test]
    fn npg_ignores_per_state_constants(seed in any::<u64>(), eta in 0.01f64..10.0) {
        let mut rng = seeded(seed);
        let pi = random_policy(&mut rng, 3, 4);
        let q = Mat::from_fn(3, 4, |_, _| rng.random::<f64>() * 5.0);
        let shifts: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
        let shifted = Mat::from_fn(3, 4, |s, a| q[(s, a)] + shifts[s]);
        let a = npg_step(&pi, &q, eta, 0.9).unwrap();
        let b = npg_step(&pi, &shifted, eta, 0.9).unwrap();
        prop_assert!(a.max_tv(&b) <= 1e-12);
        for s in 0..3 {
            prop_assert!(is_distribution(a.row(s).as_slice()));
        }
    }

    #[test]
    fn entropy_npg_is_mirror_descent(seed in any::<u64>(), frac in 0.01f64..0.99, tau in 0.01f64..1.0) {
        let mut rng = seeded(seed);
        let gamma = 0.9;
        let eta = frac * (1.0 - gamma) / tau;
        let pi = random_policy(&mut rng, 3, 3);
        let q = Mat::from_fn(3, 3, |_, _| rng.random::<f64>() * 10.0);
        let a = entropy_npg_step(&pi, &q, eta, tau, gamma).unwrap();
        let b = mirror_descent_step(&pi, &q, mirror_descent_rate(eta, tau, gamma), tau).unwrap();
        prop_assert!(a.max_tv(&b) <= 1e-10);
    }

    #[test]
    fn payoff_shift_leaves_iterates_unchanged(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut rng = seeded(seed);
        let game = random_matrix_game(&mut rng, 3, 4);
        let shifted = MatrixGame::from_values(game.payoff().add_scalar(c)).unwrap();
        let start = StrategyPair::new(random_distribution(&mut rng, 3), random_distribution(&mut rng, 4));
        let (mut a, mut b) = (start.clone(), start.clone());
        for _ in 0..20 {
            a = mwu_step(&game, &a, 0.1).unwrap();
            b = mwu_step(&shifted, &b, 0.1).unwrap();
        }
        prop_assert!(a.max_tv(&b) <= 1e-12);

        let mut x = OmwuState::from_pair(&start, 0.2, 0.1).unwrap();
        let mut y = x.clone();
        for _ in 0..20 {
            x.step(&game).unwrap();
            y.step(&shifted).unwrap();
        }
        prop_assert!(x.pair().max_tv(&y.pair()) <= 1e-12);
        prop_assert!(x.pair().is_strictly_positive());
    }

    #[test]
    fn lyapunov_residuals(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = seeded(seed);
        let mut m = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let radius = polgrad_core::numeric::spectral_radius(&m).unwrap();
        if radius > 0.0 {
            m *= 0.9 / radius;
        }
        let g = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let w = &g * g.transpose() + Mat::identity(d, d);
        let left = solve_discrete_lyapunov(&m, &w, LyapunovMode::TransposeOnLeft).unwrap();
        let right = solve_discrete_lyapunov(&m, &w, LyapunovMode::TransposeOnRight).unwrap();
        let scale = 1.0 + left.norm().max(right.norm());
        prop_assert!((&w + m.transpose() * &left * &m - &left).norm() <= 1e-9 * scale);
        prop_assert!((&w + &m * &right * m.transpose() - &right).norm() <= 1e-9 * scale);
    }
}

#[test]
fn uniform_policy_rows() {
    let pi = StochasticPolicy::uniform(3, 5);
    for s in 0..3 {
        assert!(is_distribution(pi.row(s).as_slice()));
    }
}
