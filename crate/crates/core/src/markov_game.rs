//! Two-player zero-sum Markov games: exact evaluation, best responses, the
//! regularized minimax oracle and the smooth-value actor-critic loop.

use crate::error::{Error, Result};
use crate::matrix_game::{
    solve_qre_from, MatrixGame, OmwuState, StrategyPair,
};
use crate::mdp::TabularMdp;
use crate::numeric::{
    entropy, is_distribution, logsumexp, solve_linear, sup_norm, Distribution, Mat, Vector,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumMarkovGame {
    n_states: usize,
    m: usize,
    n: usize,
    /// Row-major `[s][a][b][s']`.
    transitions: Vec<f64>,
    rewards: Vec<Mat>,
    gamma: f64,
}

impl ZeroSumMarkovGame {
    pub fn new(
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        gamma: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        if n_states == 0 || rewards.len() != n_states {
            return Err(Error::Dimension(format!(
                "{n_states} transition blocks and {} reward blocks",
                rewards.len()
            )));
        }
        let m = transitions[0].len();
        let n = transitions[0].first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::Dimension("both players need at least one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Domain(format!("discount {gamma} outside [0, 1)")));
        }
        let mut flat = Vec::with_capacity(n_states * m * n * n_states);
        for (s, block) in transitions.iter().enumerate() {
            if block.len() != m || block.iter().any(|row| row.len() != n) {
                return Err(Error::Dimension(format!("transition block {s} is not {m}x{n}")));
            }
            for (a, row) in block.iter().enumerate() {
                for (b, p) in row.iter().enumerate() {
                    if p.len() != n_states || !is_distribution(p) {
                        return Err(Error::Domain(format!(
                            "P[{s}][{a}][{b}] is not a distribution over {n_states} states"
                        )));
                    }
                    flat.extend_from_slice(p);
                }
            }
        }
        let mut r = Vec::with_capacity(n_states);
        for (s, block) in rewards.iter().enumerate() {
            if block.len() != m || block.iter().any(|row| row.len() != n) {
                return Err(Error::Dimension(format!("reward block {s} is not {m}x{n}")));
            }
            if let Some(x) = block.iter().flatten().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Domain(format!("reward {x} in state {s} outside [0, 1]")));
            }
            r.push(Mat::from_fn(m, n, |a, b| block[a][b]));
        }
        Ok(Self {
            n_states,
            m,
            n,
            transitions: flat,
            rewards: r,
            gamma,
        })
    }

    /// Single-state game with reward matrix `r`.
    pub fn single_state(r: &Mat, gamma: f64) -> Result<Self> {
        let (m, n) = r.shape();
        let rows: Vec<Vec<f64>> = (0..m).map(|a| r.row(a).iter().copied().collect()).collect();
        Self::new(vec![vec![vec![vec![1.0]; n]; m]], vec![rows], gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Max-player action count.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Min-player action count.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self, s: usize) -> &Mat {
        &self.rewards[s]
    }

    pub fn transition(&self, s: usize, a: usize, b: usize) -> &[f64] {
        let start = ((s * self.m + a) * self.n + b) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    /// `Q(s, a, b) = r(s, a, b) + gamma E_{s'} v(s')`.
    pub fn game_q_from_v(&self, v: &Vector) -> Result<Vec<Mat>> {
        if v.len() != self.n_states {
            return Err(Error::Dimension("value table size".into()));
        }
        Ok(self.q_from_v(v))
    }

    fn q_from_v_into(&self, v: &Vector, q: &mut [Mat]) {
        for (s, q_s) in q.iter_mut().enumerate() {
            for a in 0..self.m {
                for b in 0..self.n {
                    let ev: f64 = self.transition(s, a, b).iter().zip(v.iter()).map(|(p, x)| p * x).sum();
                    q_s[(a, b)] = self.rewards[s][(a, b)] + self.gamma * ev;
                }
            }
        }
    }

    fn q_from_v(&self, v: &Vector) -> Vec<Mat> {
        (0..self.n_states)
            .map(|s| {
                Mat::from_fn(self.m, self.n, |a, b| {
                    let ev: f64 = self.transition(s, a, b).iter().zip(v.iter()).map(|(p, x)| p * x).sum();
                    self.rewards[s][(a, b)] + self.gamma * ev
                })
            })
            .collect()
    }

    fn check_policy(&self, policy: &JointPolicy) -> Result<()> {
        if policy.mu.len() != self.n_states
            || policy.nu.len() != self.n_states
            || policy.mu.iter().any(|d| d.len() != self.m)
            || policy.nu.iter().any(|d| d.len() != self.n)
        {
            return Err(Error::Dimension("joint policy does not match the game".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    pub mu: Vec<Distribution>,
    pub nu: Vec<Distribution>,
}

impl JointPolicy {
    pub fn uniform(n_states: usize, m: usize, n: usize) -> Self {
        Self {
            mu: vec![Distribution::uniform(m); n_states],
            nu: vec![Distribution::uniform(n); n_states],
        }
    }

    pub fn pair(&self, s: usize) -> StrategyPair {
        StrategyPair::new(self.mu[s].clone(), self.nu[s].clone())
    }

    pub fn from_pairs(pairs: Vec<StrategyPair>) -> Self {
        let (mu, nu) = pairs.into_iter().map(|p| (p.mu, p.nu)).unzip();
        Self { mu, nu }
    }

    /// Largest per-state `KL(reference || self)` summed over both players.
    pub fn max_kl_from(&self, reference: &JointPolicy) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in 0..self.mu.len() {
            worst = worst.max(self.pair(s).kl_from(&reference.pair(s))?);
        }
        Ok(worst)
    }

    pub fn max_tv(&self, other: &JointPolicy) -> f64 {
        (0..self.mu.len())
            .map(|s| self.pair(s).max_tv(&other.pair(s)))
            .fold(0.0, f64::max)
    }
}

/// `mu^T Q nu + tau H(mu) - tau H(nu)`.
pub fn one_step_value(q_s: &Mat, mu: &Distribution, nu: &Distribution, tau: f64) -> f64 {
    let mut bilinear = 0.0;
    for a in 0..q_s.nrows() {
        let row: f64 = (0..q_s.ncols()).map(|b| q_s[(a, b)] * nu[b]).sum();
        bilinear += mu[a] * row;
    }
    if tau == 0.0 {
        bilinear
    } else {
        bilinear + tau * entropy(mu) - tau * entropy(nu)
    }
}

/// [`one_step_value`] for strategies given as normalized log-probabilities.
fn one_step_value_from_logs(q_s: &Mat, log_mu: &[f64], log_nu: &[f64], tau: f64) -> f64 {
    let nu: Vec<f64> = log_nu.iter().map(|l| l.exp()).collect();
    let h_nu: f64 = -nu.iter().zip(log_nu).map(|(p, l)| p * l).sum::<f64>();
    let mut bilinear = 0.0;
    let mut h_mu = 0.0;
    for (a, lm) in log_mu.iter().enumerate() {
        let p = lm.exp();
        h_mu -= p * lm;
        bilinear += p * nu.iter().enumerate().map(|(b, x)| q_s[(a, b)] * x).sum::<f64>();
    }
    if tau == 0.0 {
        bilinear
    } else {
        bilinear + tau * h_mu - tau * h_nu
    }
}

#[derive(Debug, Clone)]
pub struct JointEvaluation {
    pub v: Vector,
    pub q: Vec<Mat>,
}

/// Exact (regularized when `tau > 0`) values of a policy pair.
pub fn evaluate_joint_policy(
    game: &ZeroSumMarkovGame,
    policy: &JointPolicy,
    tau: f64,
) -> Result<JointEvaluation> {
    game.check_policy(policy)?;
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("temperature {tau} must be nonnegative")));
    }
    let ns = game.n_states;
    let mut chain = Mat::zeros(ns, ns);
    let mut reward = Vector::zeros(ns);
    for s in 0..ns {
        let (mu, nu) = (&policy.mu[s], &policy.nu[s]);
        reward[s] = one_step_value(game.reward(s), mu, nu, tau);
        for a in 0..game.m {
            for b in 0..game.n {
                let w = mu[a] * nu[b];
                if w == 0.0 {
                    continue;
                }
                for (s2, p) in game.transition(s, a, b).iter().enumerate() {
                    chain[(s, s2)] += w * p;
                }
            }
        }
    }
    let v = if game.gamma == 0.0 {
        reward
    } else {
        solve_linear(&(Mat::identity(ns, ns) - chain * game.gamma), &reward)?
    };
    let q = game.q_from_v(&v);
    Ok(JointEvaluation { v, q })
}

/// Which player's policy is held fixed in a best-response computation.
#[derive(Debug, Clone, Copy)]
pub enum FixedSide<'a> {
    /// `mu` fixed; the min player best responds.
    Max(&'a [Distribution]),
    /// `nu` fixed; the max player best responds.
    Min(&'a [Distribution]),
}

/// Optimal values of the single-controller MDP left after fixing one side.
pub fn best_response_values(
    game: &ZeroSumMarkovGame,
    fixed: FixedSide<'_>,
    tol: f64,
) -> Result<Vector> {
    let ns = game.n_states;
    let (policy, responder_actions, minimize) = match fixed {
        FixedSide::Max(mu) => (mu, game.n, true),
        FixedSide::Min(nu) => (nu, game.m, false),
    };
    let fixed_actions = if minimize { game.m } else { game.n };
    if policy.len() != ns || policy.iter().any(|d| d.len() != fixed_actions) {
        return Err(Error::Dimension("fixed policy does not match the game".into()));
    }
    let mut p = vec![vec![vec![0.0; ns]; responder_actions]; ns];
    let mut r = vec![vec![0.0; responder_actions]; ns];
    for s in 0..ns {
        for x in 0..responder_actions {
            for y in 0..fixed_actions {
                let w = policy[s][y];
                let (a, b) = if minimize { (y, x) } else { (x, y) };
                r[s][x] += w * game.rewards[s][(a, b)];
                for (s2, q) in game.transition(s, a, b).iter().enumerate() {
                    p[s][x][s2] += w * q;
                }
            }
            // the minimizer maximizes 1 - r, which keeps rewards in [0, 1]
            if minimize {
                r[s][x] = (1.0 - r[s][x]).clamp(0.0, 1.0);
            }
            let total: f64 = p[s][x].iter().sum();
            p[s][x].iter_mut().for_each(|v| *v /= total);
        }
    }
    let mdp = TabularMdp::new(p, r, game.gamma, vec![1.0 / ns as f64; ns])?;
    let v = mdp.optimal_values(tol)?.v;
    Ok(if minimize {
        v.map(|x| 1.0 / (1.0 - game.gamma) - x)
    } else {
        v
    })
}

/// `max_s [V^{dagger, nu}(s) - V^{mu, dagger}(s)]`.
pub fn markov_ne_gap(game: &ZeroSumMarkovGame, policy: &JointPolicy) -> Result<f64> {
    game.check_policy(policy)?;
    let upper = best_response_values(game, FixedSide::Min(&policy.nu), 1e-12)?;
    let lower = best_response_values(game, FixedSide::Max(&policy.mu), 1e-12)?;
    Ok((upper - lower).iter().copied().fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct SoftMinimax {
    pub v: Vector,
    pub policy: JointPolicy,
    pub sweeps: usize,
}

/// `max_mu min_nu mu^T Q nu + tau H(mu) - tau H(nu)` evaluated at the column
/// strategy of an (approximate) QRE as `tau lse(Q nu / tau) - tau H(nu)`,
/// which is stationary at the equilibrium.
fn regularized_game_value(q: &Mat, nu: &Distribution, tau: f64) -> f64 {
    let scores: Vec<f64> = (0..q.nrows())
        .map(|a| (0..q.ncols()).map(|b| q[(a, b)] * nu[b]).sum::<f64>() / tau)
        .collect();
    tau * logsumexp(&scores) - tau * entropy(nu)
}

/// Regularized Shapley iteration: `V(s) <-` value of the entropy-regularized
/// matrix game with payoff `Q(V)(s)`, each solved by warm-started
/// [`solve_qre_from`].
pub fn soft_minimax_oracle(game: &ZeroSumMarkovGame, tau: f64, tol: f64) -> Result<SoftMinimax> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    let ns = game.n_states;
    let inner_tol = (tol * 1e-2).max(1e-13);
    let threshold = if game.gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - game.gamma) / (2.0 * game.gamma)
    };
    let mut v = Vector::zeros(ns);
    let mut pairs: Vec<StrategyPair> = vec![StrategyPair::uniform(game.m, game.n); ns];
    let log_scale = (game.m.max(game.n) as f64).ln();
    let span = (1.0 + 2.0 * tau * log_scale) / (1.0 - game.gamma);
    let cap = if game.gamma == 0.0 {
        1
    } else {
        ((threshold / (2.0 * span)).ln() / game.gamma.ln()).ceil() as usize * 2 + 100
    };
    let mut sweeps = 0;
    loop {
        let q = game.q_from_v(&v);
        for s in 0..ns {
            let matrix = MatrixGame::from_values(q[s].clone())?;
            pairs[s] = solve_qre_from(&matrix, tau, inner_tol, Some(&pairs[s]))?;
        }
        let next = Vector::from_fn(ns, |s, _| regularized_game_value(&q[s], &pairs[s].nu, tau));
        let change = sup_norm(&(&next - &v));
        v = next;
        sweeps += 1;
        if change <= threshold || sweeps >= cap {
            if change > threshold {
                return Err(Error::Convergence {
                    iterations: sweeps,
                    residual: change,
                });
            }
            break;
        }
    }
    // equilibrium of the stage games at the returned values
    let q = game.q_from_v(&v);
    for s in 0..ns {
        let matrix = MatrixGame::from_values(q[s].clone())?;
        pairs[s] = solve_qre_from(&matrix, tau, inner_tol, Some(&pairs[s]))?;
    }
    Ok(SoftMinimax {
        v,
        policy: JointPolicy::from_pairs(pairs),
        sweeps,
    })
}

/// Matrix-game routine invoked at every state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    /// Optimistic MWU without regularization; values use the plain
    /// one-step estimator.
    Omwu,
    /// Entropy-regularized optimistic MWU.
    RegOmwu,
    /// Exact regularized stage-game equilibrium (warm-started QRE solve).
    ExactQre,
}

impl InnerSolver {
    pub fn name(self) -> &'static str {
        match self {
            InnerSolver::Omwu => "omwu",
            InnerSolver::RegOmwu => "reg_omwu",
            InnerSolver::ExactQre => "exact_qre",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [InnerSolver::Omwu, InnerSolver::RegOmwu, InnerSolver::ExactQre]
            .into_iter()
            .find(|s| s.name() == name)
    }
}

/// Value learning rates `alpha_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    /// `alpha_t = eta tau`.
    EtaTau,
    /// `alpha_t = (2/(1-gamma) + 1) / (2/(1-gamma) + t)`.
    Decaying,
}

impl AlphaSchedule {
    pub fn alpha(self, t: usize, eta: f64, tau: f64, gamma: f64) -> f64 {
        match self {
            AlphaSchedule::Constant(a) => a,
            AlphaSchedule::EtaTau => eta * tau,
            AlphaSchedule::Decaying => {
                let h = 2.0 / (1.0 - gamma);
                (h + 1.0) / (h + t as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticConfig {
    pub inner: InnerSolver,
    pub eta: f64,
    pub tau: f64,
    pub alpha: AlphaSchedule,
    pub max_iters: usize,
    pub record_every: usize,
    /// Also record the (costly) unregularized NE gap at recorded iterations.
    pub track_ne_gap: bool,
    /// Accuracy of the regularized minimax reference.
    pub reference_tol: f64,
}

impl ActorCriticConfig {
    /// Regularized OMWU with `alpha_t = eta tau`.
    pub fn regularized(eta: f64, tau: f64, max_iters: usize) -> Self {
        Self {
            inner: InnerSolver::RegOmwu,
            eta,
            tau,
            alpha: AlphaSchedule::EtaTau,
            max_iters,
            record_every: 1,
            track_ne_gap: false,
            reference_tol: 1e-12,
        }
    }

    /// Step size `c (1 - gamma)^3 / S`.
    pub fn theory_eta(c: f64, gamma: f64, n_states: usize) -> f64 {
        c * (1.0 - gamma).powi(3) / n_states as f64
    }

    /// Default recording cadence: every iteration for up to five states,
    /// every tenth otherwise.
    pub fn default_record_every(n_states: usize) -> usize {
        if n_states <= 5 {
            1
        } else {
            10
        }
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("policy learning rate {} must be positive", self.eta)));
        }
        match self.inner {
            InnerSolver::Omwu if self.tau != 0.0 => {
                return Err(Error::Config("unregularized OMWU needs tau = 0".into()))
            }
            InnerSolver::RegOmwu | InnerSolver::ExactQre if !(self.tau > 0.0) => {
                return Err(Error::Config(format!("{} needs tau > 0", self.inner.name())))
            }
            _ => {}
        }
        if self.eta * self.tau > 1.0 {
            return Err(Error::Config("eta tau must not exceed 1".into()));
        }
        if self.alpha == AlphaSchedule::EtaTau && self.tau == 0.0 {
            return Err(Error::Config("alpha = eta tau vanishes without regularization".into()));
        }
        for t in [1, 2, self.max_iters.max(1)] {
            let a = self.alpha.alpha(t, self.eta, self.tau, gamma);
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("value learning rate {a} outside (0, 1]")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterates of the actor-critic loop: values, critic payoffs and the
/// per-state matrix-game iterates, which persist across rounds.
#[derive(Debug, Clone)]
pub struct ActorCriticState {
    pub v: Vector,
    pub q: Vec<Mat>,
    inner: Vec<OmwuState>,
    exact: Vec<StrategyPair>,
    pub t: usize,
    config: ActorCriticConfig,
    gamma: f64,
}

impl ActorCriticState {
    /// `Q = 0`, `V = 0` and uniform policies.
    pub fn new(game: &ZeroSumMarkovGame, config: &ActorCriticConfig) -> Result<Self> {
        config.validate(game.gamma)?;
        let ns = game.n_states;
        let inner = (0..ns)
            .map(|_| OmwuState::new(game.m, game.n, config.eta, config.tau))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v: Vector::zeros(ns),
            q: vec![Mat::zeros(game.m, game.n); ns],
            inner,
            exact: vec![StrategyPair::uniform(game.m, game.n); ns],
            t: 0,
            config: config.clone(),
            gamma: game.gamma,
        })
    }

    pub fn policy(&self) -> JointPolicy {
        match self.config.inner {
            InnerSolver::ExactQre => JointPolicy::from_pairs(self.exact.clone()),
            _ => JointPolicy::from_pairs(self.inner.iter().map(OmwuState::pair).collect()),
        }
    }

    /// Inner step on `Q^(t)`, then `Q^(t+1) = r + gamma P V^(t)` and
    /// `V^(t+1) = (1 - alpha) V^(t) + alpha f^(t+1)`.
    pub fn step(&mut self, game: &ZeroSumMarkovGame) -> Result<()> {
        let ns = game.n_states;
        let tau = self.config.tau;
        match self.config.inner {
            InnerSolver::ExactQre => {
                for s in 0..ns {
                    let matrix = MatrixGame::from_values(self.q[s].clone())?;
                    self.exact[s] = solve_qre_from(&matrix, tau, 1e-13, Some(&self.exact[s]))?;
                }
            }
            _ => {
                for s in 0..ns {
                    self.inner[s].step_payoff(&self.q[s])?;
                }
            }
        }
        game.q_from_v_into(&self.v, &mut self.q);
        let alpha = self
            .config
            .alpha
            .alpha(self.t + 1, self.config.eta, tau, self.gamma);
        let f: Vec<f64> = match self.config.inner {
            InnerSolver::ExactQre => (0..ns)
                .map(|s| one_step_value(&self.q[s], &self.exact[s].mu, &self.exact[s].nu, tau))
                .collect(),
            _ => (0..ns)
                .map(|s| {
                    let (lm, ln) = self.inner[s].log_pair();
                    one_step_value_from_logs(&self.q[s], lm, ln, tau)
                })
                .collect(),
        };
        for s in 0..ns {
            self.v[s] = (1.0 - alpha) * self.v[s] + alpha * f[s];
        }
        self.t += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ActorCriticRecord {
    pub iter: usize,
    /// `||V - V_tau*||_inf`.
    pub value_error: Option<f64>,
    /// `max_s KL(zeta*(s) || zeta(s))`.
    pub policy_kl: Option<f64>,
    /// Larger of `value_error` and `policy_kl`.
    pub qre_gap: Option<f64>,
    pub ne_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ActorCriticRun {
    pub policy: JointPolicy,
    pub v: Vector,
    pub records: Vec<ActorCriticRecord>,
    pub reference: Option<SoftMinimax>,
}

/// Runs the actor-critic loop, recording distances to the regularized
/// minimax reference (when `tau > 0`).
pub fn actor_critic_run(game: &ZeroSumMarkovGame, config: &ActorCriticConfig) -> Result<ActorCriticRun> {
    let mut state = ActorCriticState::new(game, config)?;
    let reference = if config.tau > 0.0 {
        Some(soft_minimax_oracle(game, config.tau, config.reference_tol)?)
    } else {
        None
    };
    let mut records = Vec::new();
    for t in 0..=config.max_iters {
        if t % config.record_every == 0 || t == config.max_iters {
            let policy = state.policy();
            let (value_error, policy_kl) = match &reference {
                Some(r) => (
                    Some(sup_norm(&(&state.v - &r.v))),
                    Some(policy.max_kl_from(&r.policy)?),
                ),
                None => (None, None),
            };
            let ne_gap = if config.track_ne_gap {
                Some(markov_ne_gap(game, &policy)?)
            } else {
                None
            };
            records.push(ActorCriticRecord {
                iter: t,
                value_error,
                policy_kl,
                qre_gap: value_error.zip(policy_kl).map(|(a, b)| a.max(b)),
                ne_gap,
            });
        }
        if t < config.max_iters {
            state.step(game)?;
        }
    }
    Ok(ActorCriticRun {
        policy: state.policy(),
        v: state.v,
        records,
        reference,
    })
}
