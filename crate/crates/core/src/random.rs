//! Seeded random instances. Transitions are Dirichlet(1) rows, rewards are
//! uniform on `[0, 1]`, game payoffs uniform on `[-1, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::lqr::LqrProblem;
use crate::markov_game::ZeroSumMarkovGame;
use crate::matrix_game::MatrixGame;
use crate::mdp::{StochasticPolicy, TabularMdp};
use crate::numeric::{spectral_radius, Distribution, Mat};

pub type InstanceRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric Dirichlet(1) sample: normalized standard exponentials.
pub fn dirichlet_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let mut p: Vec<f64> = draws.iter().map(|x| x / total).collect();
    // exact normalization so the simplex tolerance holds
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Distribution {
    Distribution::new(dirichlet_row(rng, n)).expect("Dirichlet rows are distributions")
}

/// Random MDP with a random full-support initial distribution.
pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let p = (0..n_states)
        .map(|_| (0..n_actions).map(|_| dirichlet_row(rng, n_states)).collect())
        .collect();
    let r = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    let rho = dirichlet_row(rng, n_states);
    TabularMdp::new(p, r, gamma, rho).expect("random MDP is valid")
}

pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> StochasticPolicy {
    StochasticPolicy::new((0..n_states).map(|_| dirichlet_row(rng, n_actions)).collect())
        .expect("Dirichlet rows are distributions")
}

/// Payoff entries uniform on `[-1, 1]`.
pub fn random_matrix_game<R: Rng>(rng: &mut R, m: usize, n: usize) -> MatrixGame {
    MatrixGame::new(Mat::from_fn(m, n, |_, _| rng.random_range(-1.0..=1.0))).expect("entries lie in [-1, 1]")
}

pub fn random_markov_game<R: Rng>(
    rng: &mut R,
    n_states: usize,
    m: usize,
    n: usize,
    gamma: f64,
) -> ZeroSumMarkovGame {
    let p = (0..n_states)
        .map(|_| {
            (0..m)
                .map(|_| (0..n).map(|_| dirichlet_row(rng, n_states)).collect())
                .collect()
        })
        .collect();
    let r = (0..n_states)
        .map(|_| (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect())
        .collect();
    ZeroSumMarkovGame::new(p, r, gamma).expect("random game is valid")
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random SPD matrix `G G^T / d + shift I`.
fn random_spd<R: Rng>(rng: &mut R, d: usize, shift: f64) -> Mat {
    let g = gaussian(rng, d, d);
    &g * g.transpose() / d as f64 + Mat::identity(d, d) * shift
}

/// Random LQR instance: Gaussian `A` rescaled so its spectral radius is
/// below 1.2 (open-loop possibly unstable), Gaussian `B`, SPD `Q`, `R` and
/// `Sigma0`.
pub fn random_lqr<R: Rng>(rng: &mut R, d: usize, k: usize) -> LqrProblem {
    let mut a = gaussian(rng, d, d);
    let target = rng.random_range(0.5..1.2);
    let radius = spectral_radius(&a).expect("square");
    if radius > 0.0 {
        a *= target / radius;
    }
    let b = gaussian(rng, d, k);
    let q = random_spd(rng, d, 0.5);
    let r = random_spd(rng, k, 0.5);
    let sigma0 = random_spd(rng, d, 0.5);
    LqrProblem::new(a, b, q, r, sigma0).expect("random LQR instance is valid")
}

/// Perturbation of `center` with spectral radius of `A - B K` below
/// `max_radius`, by rejection sampling with shrinking scale.
pub fn random_stable_gain<R: Rng>(rng: &mut R, prob: &LqrProblem, center: &Mat, scale: f64, max_radius: f64) -> Mat {
    let mut s = scale;
    loop {
        for _ in 0..50 {
            let k = center + gaussian(rng, center.nrows(), center.ncols()) * s;
            let m = prob.a() - prob.b() * &k;
            if spectral_radius(&m).expect("square") < max_radius {
                return k;
            }
        }
        s *= 0.5;
    }
}
