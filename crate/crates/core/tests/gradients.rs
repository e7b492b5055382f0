use polgrad_core::lqr::{evaluate_gain, lqr_optimum};
use polgrad_core::mdp::{SoftmaxParams, TabularMdp};
use polgrad_core::numeric::Mat;
use polgrad_core::pg::{entropy_softmax_gradient, log_barrier_gradient, softmax_gradient};
use polgrad_core::random::{random_lqr, random_mdp, random_stable_gain, seeded};
use rand::Rng;
use rand_distr::StandardNormal;

const STEP: f64 = 1e-5;

fn central_difference(x: &Mat, f: impl Fn(&Mat) -> f64) -> Mat {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
        let mut up = x.clone();
        let mut down = x.clone();
        up[(i, j)] += STEP;
        down[(i, j)] -= STEP;
        (f(&up) - f(&down)) / (2.0 * STEP)
    })
}

fn relative_error(analytic: &Mat, numeric: &Mat) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(numeric.norm()).max(1e-12)
}

fn random_logits(rng: &mut impl Rng, n: usize, m: usize) -> SoftmaxParams {
    SoftmaxParams::new(Mat::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap()
}

fn value(mdp: &TabularMdp, logits: &Mat) -> f64 {
    mdp.evaluate_policy(&SoftmaxParams::new(logits.clone()).unwrap().policy())
        .unwrap()
        .value_at_rho
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut rng = seeded(11);
    for (i, gamma) in [0.5, 0.9, 0.99].iter().cycle().take(12).enumerate() {
        let (n, m) = (2 + i % 5, 2 + i % 3);
        let mdp = random_mdp(&mut rng, n, m, *gamma);
        let theta = random_logits(&mut rng, n, m);
        let analytic = softmax_gradient(&mdp, &theta).unwrap();
        let numeric = central_difference(theta.logits(), |x| value(&mdp, x));
        assert!(relative_error(&analytic, &numeric) <= 1e-6, "instance {i}");
    }
}

#[test]
fn barrier_gradient_matches_finite_differences() {
    let mut rng = seeded(12);
    let omega = 0.3;
    for _ in 0..5 {
        let theta = random_logits(&mut rng, 3, 4);
        let barrier = |x: &Mat| {
            let pi = SoftmaxParams::new(x.clone()).unwrap().policy();
            omega / 12.0 * pi.matrix().iter().map(|p| p.ln()).sum::<f64>()
        };
        let numeric = central_difference(theta.logits(), barrier);
        let analytic = log_barrier_gradient(&theta, omega);
        assert!(relative_error(&analytic, &numeric) <= 1e-6);
    }
}

#[test]
fn entropy_gradient_matches_finite_differences() {
    let mut rng = seeded(13);
    let tau = 0.2;
    for gamma in [0.0, 0.6, 0.9] {
        let mdp = random_mdp(&mut rng, 4, 3, gamma);
        let theta = random_logits(&mut rng, 4, 3);
        let soft_value = |x: &Mat| {
            let pi = SoftmaxParams::new(x.clone()).unwrap().policy();
            mdp.soft_evaluate_policy(&pi, tau).unwrap().value_at_rho
        };
        let numeric = central_difference(theta.logits(), soft_value);
        let analytic = entropy_softmax_gradient(&mdp, &theta, tau).unwrap();
        assert!(relative_error(&analytic, &numeric) <= 1e-6, "gamma {gamma}");
    }
}

#[test]
fn bandit_softmax_gradient() {
    let mdp = TabularMdp::bandit(&[1.0, 0.9, 0.1]).unwrap();
    let g = softmax_gradient(&mdp, &SoftmaxParams::zeros(1, 3)).unwrap();
    let mean = 2.0 / 3.0;
    for (a, r) in [1.0, 0.9, 0.1].iter().enumerate() {
        assert!((g[(0, a)] - (r - mean) / 3.0).abs() <= 1e-14);
    }
}

#[test]
fn lqr_gradient_matches_finite_differences() {
    let mut rng = seeded(14);
    for i in 0..10 {
        let (d, k) = (1 + i % 4, 1 + i % 2);
        let prob = random_lqr(&mut rng, d, k);
        let opt = lqr_optimum(&prob).unwrap();
        let gain = random_stable_gain(&mut rng, &prob, &opt.k, 0.3, 0.95);
        let analytic = evaluate_gain(&prob, &gain).unwrap().gradient;
        let numeric = central_difference(&gain, |x| evaluate_gain(&prob, x).unwrap().cost);
        assert!(relative_error(&analytic, &numeric) <= 1e-6, "instance {i}");
    }
}
