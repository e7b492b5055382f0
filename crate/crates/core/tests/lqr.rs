use polgrad_core::lqr::{
    check_gradient_dominance_with, evaluate_gain, lqr_optimum, lqr_step, npg_contraction, npg_safe_rate,
    run_lqr, solve_dare, GainMatrix, LqrProblem, LqrStepKind,
};
use polgrad_core::numeric::{max_abs, Mat};
use polgrad_core::random::{random_lqr, random_stable_gain, seeded};
use polgrad_core::Error;

fn psd(m: &Mat) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().all(|x| *x >= -1e-9 * (1.0 + max_abs(m)))
}

#[test]
fn evaluation_orderings() {
    let mut rng = seeded(21);
    for _ in 0..20 {
        let prob = random_lqr(&mut rng, 3, 2);
        let opt = lqr_optimum(&prob).unwrap();
        let k = random_stable_gain(&mut rng, &prob, &opt.k, 0.5, 0.98);
        let eval = evaluate_gain(&prob, &k).unwrap();
        assert!(psd(&(&eval.p - prob.q())));
        assert!(psd(&(&eval.sigma - prob.sigma0())));
        assert!(eval.cost >= (prob.q() * prob.sigma0()).trace() - 1e-10);
        assert!(eval.cost >= opt.cost - 1e-9 * opt.cost);
    }
}

#[test]
fn riccati_solution_is_first_order_optimal() {
    let mut rng = seeded(22);
    for d in 1..=4 {
        for k in 1..=2 {
            let prob = random_lqr(&mut rng, d, k);
            let (p, gain) = solve_dare(&prob, 1e-13).unwrap();
            let eval = evaluate_gain(&prob, &gain).unwrap();
            assert!(eval.gradient.norm() <= 1e-8);
            assert!(max_abs(&(&eval.p - &p)) <= 1e-8 * (1.0 + max_abs(&p)));
            assert!(GainMatrix::new(&prob, gain).unwrap().is_stable());
        }
    }
}

#[test]
fn gradient_dominance_on_random_gains() {
    let mut rng = seeded(23);
    for _ in 0..10 {
        let prob = random_lqr(&mut rng, 3, 2);
        let opt = lqr_optimum(&prob).unwrap();
        for _ in 0..10 {
            let k = random_stable_gain(&mut rng, &prob, &opt.k, 1.0, 0.99);
            let check = check_gradient_dominance_with(&prob, &k, &opt).unwrap();
            assert!(check.holds, "{check:?}");
        }
    }
}

#[test]
fn npg_contracts_at_safe_rate() {
    let mut rng = seeded(24);
    for _ in 0..5 {
        let prob = random_lqr(&mut rng, 3, 2);
        let opt = lqr_optimum(&prob).unwrap();
        let k0 = random_stable_gain(&mut rng, &prob, &opt.k, 0.3, 0.9);
        let eta = npg_safe_rate(&prob, &k0).unwrap();
        let rate = npg_contraction(&prob, &opt, eta);
        let trace = run_lqr(&prob, &k0, eta, LqrStepKind::Npg, 50).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].1 <= w[0].1);
            assert!(w[1].1 - opt.cost <= rate * (w[0].1 - opt.cost) + 1e-12 * opt.cost);
        }
    }
}

#[test]
fn gauss_newton_converges_quickly() {
    let mut rng = seeded(25);
    for d in 1..=4 {
        let prob = random_lqr(&mut rng, d, 1 + d % 2);
        let opt = lqr_optimum(&prob).unwrap();
        let k0 = random_stable_gain(&mut rng, &prob, &opt.k, 0.5, 0.98);
        let trace = run_lqr(&prob, &k0, 1.0, LqrStepKind::GaussNewton, 30).unwrap();
        assert!(trace.last().unwrap().1 - opt.cost <= 1e-10);
    }
}

#[test]
fn destabilizing_steps_are_errors() {
    let mut rng = seeded(26);
    let prob = random_lqr(&mut rng, 2, 1);
    let opt = lqr_optimum(&prob).unwrap();
    let k0 = random_stable_gain(&mut rng, &prob, &opt.k, 0.5, 0.95);
    let mut found = false;
    for eta in [1e2, 1e4, 1e6] {
        match lqr_step(&prob, &k0, eta, LqrStepKind::Pg) {
            Ok(g) => assert!(g.is_stable()),
            Err(Error::Unstable { radius }) => {
                assert!(radius >= 1.0);
                found = true;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(found);
}

#[test]
fn zero_dynamics() {
    let prob = LqrProblem::new(
        Mat::zeros(1, 1),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
    )
    .unwrap();
    let eval = evaluate_gain(&prob, &Mat::zeros(1, 1)).unwrap();
    assert_eq!(eval.cost, 1.0);
    assert_eq!(eval.gradient[(0, 0)], 0.0);
}
