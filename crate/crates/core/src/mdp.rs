//! Tabular discounted MDPs with exact policy evaluation.

use crate::error::{Error, Result};
use crate::numeric::{
    entropy, is_distribution, logsumexp, softmax, solve_linear, sup_norm, Distribution, Mat,
    Vector,
};

/// Default accuracy of the optimal-value oracles.
pub const DEFAULT_VALUE_TOL: f64 = 1e-10;

/// Finite MDP `(S, A, P, r, gamma)` with an initial state distribution.
///
/// Rewards lie in `[0, 1]` and `0 <= gamma < 1`; `gamma = 0` is the bandit
/// case.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][s']`.
    transitions: Vec<f64>,
    rewards: Mat,
    gamma: f64,
    rho: Distribution,
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        rho: Vec<f64>,
    ) -> Result<Self> {
        let n_states = transitions.len();
        if n_states == 0 {
            return Err(Error::Dimension("MDP needs at least one state".into()));
        }
        let n_actions = transitions[0].len();
        if n_actions == 0 {
            return Err(Error::Dimension("MDP needs at least one action".into()));
        }
        if rewards.len() != n_states || rho.len() != n_states {
            return Err(Error::Dimension(format!(
                "{n_states} states but {} reward rows and {} initial probabilities",
                rewards.len(),
                rho.len()
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Domain(format!("discount {gamma} outside [0, 1)")));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Dimension(format!(
                    "state {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            for (a, p) in row.iter().enumerate() {
                if p.len() != n_states || !is_distribution(p) {
                    return Err(Error::Domain(format!(
                        "P[{s}][{a}] is not a distribution over {n_states} states"
                    )));
                }
                flat.extend_from_slice(p);
            }
        }
        let mut r = Mat::zeros(n_states, n_actions);
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Dimension(format!("reward row {s} has wrong length")));
            }
            for (a, x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(x) {
                    return Err(Error::Domain(format!("reward r[{s}][{a}] = {x} outside [0, 1]")));
                }
                r[(s, a)] = *x;
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions: flat,
            rewards: r,
            gamma,
            rho: Distribution::new(rho)?,
        })
    }

    /// Single-state MDP with the given per-action rewards and `gamma = 0`.
    pub fn bandit(rewards: &[f64]) -> Result<Self> {
        Self::new(
            vec![vec![vec![1.0]; rewards.len()]],
            vec![rewards.to_vec()],
            0.0,
            vec![1.0],
        )
    }

    pub fn with_rho(&self, rho: Distribution) -> Result<Self> {
        if rho.len() != self.n_states {
            return Err(Error::Dimension("initial distribution size".into()));
        }
        Ok(Self { rho, ..self.clone() })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> &Distribution {
        &self.rho
    }

    pub fn rewards(&self) -> &Mat {
        &self.rewards
    }

    /// `P(· | s, a)`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    fn check_policy(&self, pi: &StochasticPolicy) -> Result<()> {
        if pi.n_states() != self.n_states || pi.n_actions() != self.n_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.n_states(),
                pi.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// `P_pi(s, s') = sum_a pi(a|s) P(s'|s,a)`.
    pub fn induced_chain(&self, pi: &StochasticPolicy) -> Mat {
        let n = self.n_states;
        let mut p = Mat::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (s2, x) in self.transition(s, a).iter().enumerate() {
                    p[(s, s2)] += w * x;
                }
            }
        }
        p
    }

    fn induced_reward(&self, pi: &StochasticPolicy) -> Vector {
        Vector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions).map(|a| pi.prob(s, a) * self.rewards[(s, a)]).sum()
        })
    }

    /// `E_{s' ~ P(·|s,a)} v(s')` for every `(s, a)`.
    pub fn expected_next(&self, v: &Vector) -> Mat {
        Mat::from_fn(self.n_states, self.n_actions, |s, a| {
            self.transition(s, a).iter().zip(v.iter()).map(|(p, x)| p * x).sum()
        })
    }

    /// `r + gamma * P v`.
    pub fn bellman_q(&self, v: &Vector) -> Mat {
        &self.rewards + self.expected_next(v) * self.gamma
    }

    fn solve_values(&self, chain: &Mat, reward: &Vector) -> Result<Vector> {
        if self.gamma == 0.0 {
            return Ok(reward.clone());
        }
        let n = self.n_states;
        let system = Mat::identity(n, n) - chain * self.gamma;
        solve_linear(&system, reward)
    }

    fn visitation_from_chain(&self, chain: &Mat, start: &Distribution) -> Result<Distribution> {
        let n = self.n_states;
        let d = if self.gamma == 0.0 {
            start.to_vector()
        } else {
            let system = Mat::identity(n, n) - chain.transpose() * self.gamma;
            solve_linear(&system, &start.to_vector())? * (1.0 - self.gamma)
        };
        renormalize(d.as_slice())
    }

    /// Exact `V`, `Q`, advantage and discounted visitation of `pi`.
    pub fn evaluate_policy(&self, pi: &StochasticPolicy) -> Result<EvaluationResult> {
        self.check_policy(pi)?;
        let chain = self.induced_chain(pi);
        let v = self.solve_values(&chain, &self.induced_reward(pi))?;
        let q = self.bellman_q(&v);
        let adv = Mat::from_fn(self.n_states, self.n_actions, |s, a| q[(s, a)] - v[s]);
        let d_rho = self.visitation_from_chain(&chain, &self.rho)?;
        let value_at_rho = self.rho.dot(v.as_slice());
        Ok(EvaluationResult {
            v,
            q,
            adv,
            d_rho,
            value_at_rho,
        })
    }

    /// `d^pi_start = (1 - gamma) (I - gamma P_piᵀ)^{-1} start`.
    pub fn visitation_distribution(
        &self,
        pi: &StochasticPolicy,
        start: &Distribution,
    ) -> Result<Distribution> {
        self.check_policy(pi)?;
        if start.len() != self.n_states {
            return Err(Error::Dimension("start distribution size".into()));
        }
        self.visitation_from_chain(&self.induced_chain(pi), start)
    }

    /// Stationary distribution of the induced chain via power iteration.
    pub fn stationary_distribution(&self, pi: &StochasticPolicy) -> Result<Distribution> {
        self.check_policy(pi)?;
        let chain = self.induced_chain(pi);
        let chain_t = chain.transpose();
        let mut nu = Vector::from_element(self.n_states, 1.0 / self.n_states as f64);
        const MAX_ITERS: usize = 1_000_000;
        for _ in 0..MAX_ITERS {
            let next = &chain_t * &nu;
            let change = sup_norm(&(&next - &nu));
            nu = next;
            if change <= 1e-15 {
                let residual = sup_norm(&(&chain_t * &nu - &nu));
                if residual <= 1e-10 {
                    return renormalize(nu.as_slice());
                }
            }
        }
        Err(Error::Reducible {
            iterations: MAX_ITERS,
        })
    }

    /// Optimal values by value iteration, returned together with the greedy
    /// deterministic policy (lowest action index wins ties).
    ///
    /// Value iteration stops once the sup-norm change is at most
    /// `tol (1 - gamma) / (2 gamma)`; the greedy policy is then evaluated
    /// exactly and improved until stable, which removes the floating-point
    /// floor of the iteration.
    pub fn optimal_values(&self, tol: f64) -> Result<OptimalValues> {
        if tol <= 0.0 || !tol.is_finite() {
            return Err(Error::Config(format!("tolerance {tol} must be positive")));
        }
        let n = self.n_states;
        let mut v = Vector::zeros(n);
        let mut iterations = 0;
        if self.gamma == 0.0 {
            v = row_max(&self.rewards);
            iterations = 1;
        } else {
            let threshold = tol * (1.0 - self.gamma) / (2.0 * self.gamma);
            let cap = iteration_cap(self.gamma, threshold, 1.0 / (1.0 - self.gamma));
            while iterations < cap {
                let next = row_max(&self.bellman_q(&v));
                let change = sup_norm(&(&next - &v));
                v = next;
                iterations += 1;
                if change <= threshold {
                    break;
                }
            }
        }
        let mut greedy = greedy_policy(&self.bellman_q(&v));
        for _ in 0..(n * self.n_actions + 10) {
            let exact = self.evaluate_policy(&greedy)?;
            let q = self.bellman_q(&exact.v);
            let improved = improve_greedy(&greedy, &q, 1e-13);
            v = exact.v;
            match improved {
                Some(p) => greedy = p,
                None => break,
            }
        }
        let q = self.bellman_q(&v);
        Ok(OptimalValues {
            greedy: greedy_policy(&q),
            v,
            q,
            iterations,
        })
    }

    /// Entropy-regularized evaluation: the exact evaluation of the MDP with
    /// reward `r(s,a) - tau log pi(a|s)`.
    pub fn soft_evaluate_policy(
        &self,
        pi: &StochasticPolicy,
        tau: f64,
    ) -> Result<SoftEvaluationResult> {
        self.check_policy(pi)?;
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::Domain(format!("temperature {tau} must be positive")));
        }
        if !pi.is_strictly_positive() {
            return Err(Error::Domain(
                "soft evaluation needs a policy with full support".into(),
            ));
        }
        let chain = self.induced_chain(pi);
        let reward = self.induced_reward(pi)
            + Vector::from_fn(self.n_states, |s, _| tau * entropy(&pi.row(s)));
        let v = self.solve_values(&chain, &reward)?;
        let q = self.bellman_q(&v);
        let value_at_rho = self.rho.dot(v.as_slice());
        Ok(SoftEvaluationResult {
            v,
            q,
            tau,
            value_at_rho,
        })
    }

    /// Soft value iteration `V(s) <- tau log sum_a exp(Q(s,a)/tau)`, polished
    /// by soft policy iteration.
    pub fn soft_optimal_values(&self, tau: f64, tol: f64) -> Result<SoftOptimalValues> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::Domain(format!("temperature {tau} must be positive")));
        }
        if tol <= 0.0 || !tol.is_finite() {
            return Err(Error::Config(format!("tolerance {tol} must be positive")));
        }
        let n = self.n_states;
        let soft_max = |q: &Mat| -> Vector {
            Vector::from_fn(n, |s, _| {
                let row: Vec<f64> = q.row(s).iter().map(|x| x / tau).collect();
                tau * logsumexp(&row)
            })
        };
        let mut v = Vector::zeros(n);
        let mut iterations = 0;
        if self.gamma == 0.0 {
            v = soft_max(&self.rewards);
            iterations = 1;
        } else {
            let threshold = tol * (1.0 - self.gamma) / (2.0 * self.gamma);
            let scale = (1.0 + tau * (self.n_actions as f64).ln()) / (1.0 - self.gamma);
            let cap = iteration_cap(self.gamma, threshold, scale);
            while iterations < cap {
                let next = soft_max(&self.bellman_q(&v));
                let change = sup_norm(&(&next - &v));
                v = next;
                iterations += 1;
                if change <= threshold {
                    break;
                }
            }
            // soft policy iteration: converges quadratically from here
            let mut residual = sup_norm(&(soft_max(&self.bellman_q(&v)) - &v));
            for _ in 0..20 {
                let pi = soft_greedy(&self.bellman_q(&v), tau)?;
                if !pi.is_strictly_positive() {
                    break;
                }
                let candidate = self.soft_evaluate_policy(&pi, tau)?.v;
                let r = sup_norm(&(soft_max(&self.bellman_q(&candidate)) - &candidate));
                if r >= residual {
                    break;
                }
                v = candidate;
                residual = r;
            }
        }
        let q = self.bellman_q(&v);
        let policy = soft_greedy(&q, tau)?;
        Ok(SoftOptimalValues {
            v,
            q,
            policy,
            iterations,
        })
    }
}

fn renormalize(p: &[f64]) -> Result<Distribution> {
    let clipped: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    Distribution::new(clipped.iter().map(|x| x / total).collect())
}

/// Number of sweeps after which a `gamma`-contraction started within `scale`
/// of its fixed point is guaranteed to move less than `threshold`, plus slack.
fn iteration_cap(gamma: f64, threshold: f64, scale: f64) -> usize {
    let k = ((threshold / (2.0 * scale.max(1.0))).ln() / gamma.ln()).ceil();
    (k.max(1.0) as usize).saturating_mul(2) + 100
}

fn row_max(q: &Mat) -> Vector {
    Vector::from_fn(q.nrows(), |s, _| {
        q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })
}

fn argmax_lowest(row: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, x) in row.enumerate() {
        if x > best_v {
            best = i;
            best_v = x;
        }
    }
    best
}

/// Deterministic argmax policy with lowest-index tie-breaking.
pub fn greedy_policy(q: &Mat) -> StochasticPolicy {
    let (n, m) = q.shape();
    let mut probs = Mat::zeros(n, m);
    for s in 0..n {
        probs[(s, argmax_lowest(q.row(s).iter().copied()))] = 1.0;
    }
    StochasticPolicy { probs }
}

/// Policy-iteration improvement that only switches an action when the gain
/// exceeds `margin`; `None` when the policy is already greedy.
fn improve_greedy(current: &StochasticPolicy, q: &Mat, margin: f64) -> Option<StochasticPolicy> {
    let mut changed = false;
    let mut probs = current.probs.clone();
    for s in 0..q.nrows() {
        let cur = argmax_lowest(current.probs.row(s).iter().copied());
        let best = argmax_lowest(q.row(s).iter().copied());
        if q[(s, best)] > q[(s, cur)] + margin * (1.0 + q[(s, cur)].abs()) {
            probs.row_mut(s).fill(0.0);
            probs[(s, best)] = 1.0;
            changed = true;
        }
    }
    changed.then_some(StochasticPolicy { probs })
}

/// `pi(a|s) ∝ exp(q(s,a) / tau)`.
pub fn soft_greedy(q: &Mat, tau: f64) -> Result<StochasticPolicy> {
    let (n, m) = q.shape();
    let mut probs = Mat::zeros(n, m);
    for s in 0..n {
        let row: Vec<f64> = q.row(s).iter().map(|x| x / tau).collect();
        for (a, p) in softmax(&row).into_iter().enumerate() {
            probs[(s, a)] = p;
        }
    }
    StochasticPolicy::from_matrix(probs)
}

/// Per-state action distributions, stored as an `S x A` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    probs: Mat,
}

impl StochasticPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::Dimension("empty policy table".into()));
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("ragged policy table".into()));
        }
        Self::from_matrix(Mat::from_fn(n, m, |s, a| rows[s][a]))
    }

    pub fn from_matrix(probs: Mat) -> Result<Self> {
        for (s, row) in probs.row_iter().enumerate() {
            let row: Vec<f64> = row.iter().copied().collect();
            if !is_distribution(&row) {
                return Err(Error::Domain(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Distribution]) -> Result<Self> {
        Self::new(rows.iter().map(|d| d.as_slice().to_vec()).collect())
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Mat::from_element(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn row(&self, s: usize) -> Distribution {
        Distribution::new(self.probs.row(s).iter().copied().collect())
            .expect("policy rows are distributions")
    }

    pub fn matrix(&self) -> &Mat {
        &self.probs
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|p| *p > 0.0)
    }

    /// Largest per-state total variation distance.
    pub fn max_tv(&self, other: &StochasticPolicy) -> f64 {
        assert_eq!(self.probs.shape(), other.probs.shape());
        (0..self.n_states())
            .map(|s| {
                0.5 * (0..self.n_actions())
                    .map(|a| (self.probs[(s, a)] - other.probs[(s, a)]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Tabular softmax logits `theta(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxParams {
    logits: Mat,
}

impl SoftmaxParams {
    pub fn new(logits: Mat) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Dimension("empty logit table".into()));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite logit".into()));
        }
        Ok(Self { logits })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            logits: Mat::zeros(n_states, n_actions),
        }
    }

    /// Log-probabilities of a policy with full support.
    pub fn from_policy(pi: &StochasticPolicy) -> Result<Self> {
        if !pi.is_strictly_positive() {
            return Err(Error::Domain(
                "logits of a policy with zero-probability actions are not finite".into(),
            ));
        }
        Self::new(pi.matrix().map(f64::ln))
    }

    pub fn logits(&self) -> &Mat {
        &self.logits
    }

    pub fn into_logits(self) -> Mat {
        self.logits
    }

    pub fn n_states(&self) -> usize {
        self.logits.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.logits.ncols()
    }

    /// Subtracts each row's log-sum-exp, leaving the induced policy unchanged.
    pub fn normalized(&self) -> Self {
        let mut logits = self.logits.clone();
        for mut row in logits.row_iter_mut() {
            let lse = logsumexp(&row.iter().copied().collect::<Vec<_>>());
            row.add_scalar_mut(-lse);
        }
        Self { logits }
    }

    /// `pi(a|s) = exp(theta(s,a)) / sum_a' exp(theta(s,a'))`.
    pub fn policy(&self) -> StochasticPolicy {
        policy_from_softmax(self)
    }
}

pub fn policy_from_softmax(theta: &SoftmaxParams) -> StochasticPolicy {
    let (n, m) = theta.logits.shape();
    let mut probs = Mat::zeros(n, m);
    for s in 0..n {
        let row: Vec<f64> = theta.logits.row(s).iter().copied().collect();
        for (a, p) in softmax(&row).into_iter().enumerate() {
            probs[(s, a)] = p;
        }
    }
    StochasticPolicy { probs }
}

#[derive(Debug, Clone)]
pub struct EvaluationResult {
    pub v: Vector,
    pub q: Mat,
    pub adv: Mat,
    pub d_rho: Distribution,
    pub value_at_rho: f64,
}

#[derive(Debug, Clone)]
pub struct SoftEvaluationResult {
    pub v: Vector,
    pub q: Mat,
    pub tau: f64,
    pub value_at_rho: f64,
}

#[derive(Debug, Clone)]
pub struct OptimalValues {
    pub v: Vector,
    pub q: Mat,
    pub greedy: StochasticPolicy,
    /// Value-iteration sweeps before the exact polish.
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SoftOptimalValues {
    pub v: Vector,
    pub q: Mat,
    pub policy: StochasticPolicy,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_mdp, random_policy, seeded};
    use approx::assert_abs_diff_eq;

    fn chain_mdp(with_stay: bool) -> TabularMdp {
        // action 0 = go: 0 -> 1, 1 -> 1; action 1 = stay: 0 -> 0
        let mut p = vec![
            vec![vec![0.0, 1.0]],
            vec![vec![0.0, 1.0]],
        ];
        let mut r = vec![vec![0.0], vec![1.0]];
        if with_stay {
            p[0].push(vec![1.0, 0.0]);
            p[1].push(vec![0.0, 1.0]);
            r[0].push(0.0);
            r[1].push(1.0);
        }
        TabularMdp::new(p, r, 0.5, vec![1.0, 0.0]).unwrap()
    }

    fn one_state() -> TabularMdp {
        TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![1.0]], 0.9, vec![1.0]).unwrap()
    }

    #[test]
    fn softmax_policy_examples() {
        let pi = SoftmaxParams::zeros(1, 3).policy();
        assert_eq!(pi.row(0).as_slice(), &[1.0 / 3.0; 3]);
        let pi = SoftmaxParams::new(Mat::from_element(1, 3, 123.4)).unwrap().policy();
        for a in 0..3 {
            assert_abs_diff_eq!(pi.prob(0, a), 1.0 / 3.0, epsilon = 1e-15);
        }
        // mpmath, 30 digits
        let pi = SoftmaxParams::new(Mat::from_row_slice(1, 3, &[10.0, 9.0, 1.0]))
            .unwrap()
            .policy();
        assert_abs_diff_eq!(pi.prob(0, 0), 0.730992628624198766, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.prob(0, 1), 0.268917159718713915, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.prob(0, 2), 0.0000902116570873193, epsilon = 1e-17);
    }

    #[test]
    fn evaluation_examples() {
        let e = one_state().evaluate_policy(&StochasticPolicy::uniform(1, 1)).unwrap();
        assert_abs_diff_eq!(e.v[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.q[(0, 0)], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.adv[(0, 0)], 0.0, epsilon = 1e-12);
        assert_eq!(e.d_rho.as_slice(), &[1.0]);

        let e = chain_mdp(false)
            .evaluate_policy(&StochasticPolicy::uniform(2, 1))
            .unwrap();
        assert_abs_diff_eq!(e.v[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.v[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.d_rho[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e.d_rho[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn evaluation_matches_fixed_point_iteration() {
        let mut rng = seeded(11);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        let e = mdp.evaluate_policy(&pi).unwrap();
        // independent route: iterate V <- r_pi + gamma P_pi V
        let mut v = vec![0.0; 4];
        for _ in 0..2000 {
            let mut next = vec![0.0; 4];
            for s in 0..4 {
                for a in 0..3 {
                    let ev: f64 = mdp.transition(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                    next[s] += pi.prob(s, a) * (mdp.rewards()[(s, a)] + 0.9 * ev);
                }
            }
            v = next;
        }
        for s in 0..4 {
            assert_abs_diff_eq!(e.v[s], v[s], epsilon = 1e-10);
            let centered: f64 = (0..3).map(|a| pi.prob(s, a) * e.adv[(s, a)]).sum();
            assert!(centered.abs() <= 1e-10);
        }
        assert!(e.v.iter().all(|x| *x >= 0.0 && *x <= 10.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mdp = chain_mdp(true);
        assert!(matches!(
            mdp.evaluate_policy(&StochasticPolicy::uniform(3, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn construction_validates_model() {
        assert!(TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![1.5]], 0.9, vec![1.0]).is_err());
        assert!(TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![0.5]], 1.0, vec![1.0]).is_err());
        assert!(TabularMdp::new(vec![vec![vec![0.7]]], vec![vec![0.5]], 0.5, vec![1.0]).is_err());
        assert!(TabularMdp::bandit(&[1.0, 0.9, 0.1]).is_ok());
    }

    #[test]
    fn optimal_value_examples() {
        let opt = one_state().optimal_values(1e-10).unwrap();
        assert_abs_diff_eq!(opt.v[0], 10.0, epsilon = 1e-10);

        let opt = chain_mdp(true).optimal_values(1e-10).unwrap();
        assert_eq!(opt.greedy.prob(0, 0), 1.0);
        // state 1: both actions are identical, lowest index wins
        assert_eq!(opt.greedy.prob(1, 0), 1.0);
    }

    #[test]
    fn optimal_values_dominate_random_policies() {
        let mut rng = seeded(5);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let opt = mdp.optimal_values(1e-10).unwrap();
        for _ in 0..100 {
            let pi = random_policy(&mut rng, 5, 3);
            let e = mdp.evaluate_policy(&pi).unwrap();
            for s in 0..5 {
                assert!(opt.v[s] >= e.v[s] - 1e-10);
            }
        }
        // Bellman optimality residual
        let residual = sup_norm(&(row_max(&mdp.bellman_q(&opt.v)) - &opt.v));
        assert!(residual <= 1e-10);
    }

    #[test]
    fn soft_evaluation_examples() {
        let bandit = TabularMdp::bandit(&[1.0, 0.9, 0.1]).unwrap();
        let soft = bandit
            .soft_evaluate_policy(&StochasticPolicy::uniform(1, 3), 0.1)
            .unwrap();
        assert_abs_diff_eq!(soft.v[0], 0.776527895533477636, epsilon = 1e-14);

        let eps = 1e-6;
        let pi = StochasticPolicy::new(vec![vec![1.0 - 2.0 * eps, eps, eps]]).unwrap();
        let mdp = TabularMdp::new(
            vec![vec![vec![1.0]; 3]],
            vec![vec![0.2, 0.5, 0.9]],
            0.8,
            vec![1.0],
        )
        .unwrap();
        let plain = mdp.evaluate_policy(&pi).unwrap();
        let soft = mdp.soft_evaluate_policy(&pi, 0.3).unwrap();
        assert_abs_diff_eq!(
            soft.v[0],
            plain.v[0] + 0.3 * entropy(&pi.row(0)) / 0.2,
            epsilon = 1e-12
        );

        let mut rng = seeded(3);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let pi = random_policy(&mut rng, 4, 3);
        let plain = mdp.evaluate_policy(&pi).unwrap();
        let soft = mdp.soft_evaluate_policy(&pi, 1e-9).unwrap();
        assert!(sup_norm(&(&soft.v - &plain.v)) <= 1e-9 * 3f64.ln() / 0.1);

        let degenerate = StochasticPolicy::new(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            bandit.soft_evaluate_policy(&degenerate, 0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn soft_evaluation_is_evaluation_of_augmented_mdp() {
        let mut rng = seeded(21);
        let mdp = random_mdp(&mut rng, 4, 3, 0.8);
        let pi = random_policy(&mut rng, 4, 3);
        let tau = 0.25;
        let soft = mdp.soft_evaluate_policy(&pi, tau).unwrap();
        // augmented reward r - tau log pi, evaluated by fixed-point iteration
        let mut v = vec![0.0; 4];
        for _ in 0..3000 {
            v = (0..4)
                .map(|s| {
                    (0..3)
                        .map(|a| {
                            let ev: f64 =
                                mdp.transition(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                            pi.prob(s, a)
                                * (mdp.rewards()[(s, a)] - tau * pi.prob(s, a).ln() + 0.8 * ev)
                        })
                        .sum()
                })
                .collect();
        }
        for s in 0..4 {
            assert_abs_diff_eq!(soft.v[s], v[s], epsilon = 1e-10);
            for a in 0..3 {
                let ev: f64 = mdp.transition(s, a).iter().zip(soft.v.iter()).map(|(p, x)| p * x).sum();
                assert_abs_diff_eq!(soft.q[(s, a)], mdp.rewards()[(s, a)] + 0.8 * ev, epsilon = 1e-10);
            }
            assert!(soft.v[s] <= (1.0 + tau * 3f64.ln()) / 0.2 + 1e-9);
        }
    }

    #[test]
    fn soft_optimal_examples() {
        let bandit = TabularMdp::bandit(&[1.0, 0.9, 0.1]).unwrap();
        let soft = bandit.soft_optimal_values(0.1, 1e-12).unwrap();
        let expected = [0.730992628624198766, 0.268917159718713915, 0.0000902116570873193];
        for (a, e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(soft.policy.prob(0, a), *e, epsilon = 1e-15);
        }

        let mut rng = seeded(8);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let hot = mdp.soft_optimal_values(1e6, 1e-10).unwrap();
        assert!(hot.policy.max_tv(&StochasticPolicy::uniform(4, 3)) <= 1e-5);

        let tau = 0.1;
        let soft = mdp.soft_optimal_values(tau, 1e-12).unwrap();
        let opt = mdp.optimal_values(1e-10).unwrap();
        let achieved = mdp.evaluate_policy(&soft.policy).unwrap().value_at_rho;
        let v_star_rho = mdp.rho().dot(opt.v.as_slice());
        assert!(achieved >= v_star_rho - tau * 3f64.ln() / 0.1);
    }

    #[test]
    fn visitation_examples() {
        let single = one_state();
        let d = single
            .visitation_distribution(&StochasticPolicy::uniform(1, 1), &Distribution::uniform(1))
            .unwrap();
        assert_eq!(d.as_slice(), &[1.0]);

        let d = chain_mdp(false)
            .visitation_distribution(&StochasticPolicy::uniform(2, 1), &Distribution::point(2, 0))
            .unwrap();
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-14);

        let mut rng = seeded(13);
        let mdp = random_mdp(&mut rng, 5, 2, 0.9);
        let pi = random_policy(&mut rng, 5, 2);
        let start = Distribution::point(5, 2);
        let d = mdp.visitation_distribution(&pi, &start).unwrap();
        let chain = mdp.induced_chain(&pi);
        let mut occ = start.to_vector();
        let mut sum = Vector::zeros(5);
        let mut w = 0.1;
        for _ in 0..=500 {
            sum += &occ * w;
            occ = chain.transpose() * occ;
            w *= 0.9;
        }
        for s in 0..5 {
            assert_abs_diff_eq!(d[s], sum[s], epsilon = 1e-8);
        }
    }

    #[test]
    fn stationary_examples() {
        let single = one_state();
        let nu = single.stationary_distribution(&StochasticPolicy::uniform(1, 1)).unwrap();
        assert_eq!(nu.as_slice(), &[1.0]);

        // doubly stochastic chain
        let p = vec![
            vec![vec![0.2, 0.5, 0.3]],
            vec![vec![0.5, 0.3, 0.2]],
            vec![vec![0.3, 0.2, 0.5]],
        ];
        let mdp = TabularMdp::new(p, vec![vec![0.0]; 3], 0.9, vec![1.0, 0.0, 0.0]).unwrap();
        let nu = mdp.stationary_distribution(&StochasticPolicy::uniform(3, 1)).unwrap();
        for s in 0..3 {
            assert_abs_diff_eq!(nu[s], 1.0 / 3.0, epsilon = 1e-12);
        }

        let mut rng = seeded(17);
        let mdp = random_mdp(&mut rng, 4, 2, 0.9);
        let pi = random_policy(&mut rng, 4, 2);
        let nu = mdp.stationary_distribution(&pi).unwrap();
        let chain_t = mdp.induced_chain(&pi).transpose();
        for start in [Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]), Vector::from_vec(vec![0.0, 0.0, 0.0, 1.0])] {
            let mut x = start;
            for _ in 0..5000 {
                x = &chain_t * x;
            }
            for s in 0..4 {
                assert_abs_diff_eq!(nu[s], x[s], epsilon = 1e-9);
            }
        }

        // periodic two-cycle never settles
        let flip = TabularMdp::new(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![0.0], vec![0.0]],
            0.5,
            vec![1.0, 0.0],
        )
        .unwrap();
        let start = StochasticPolicy::uniform(2, 1);
        // power iteration from uniform is already stationary for the flip chain
        assert!(flip.stationary_distribution(&start).is_ok());
    }

    #[test]
    fn mismatch_bound_for_other_initial_distributions() {
        let mut rng = seeded(29);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let opt = mdp.optimal_values(1e-12).unwrap();
        for _ in 0..20 {
            let pi = random_policy(&mut rng, 5, 3);
            let e = mdp.evaluate_policy(&pi).unwrap();
            let phi = crate::random::random_distribution(&mut rng, 5);
            let rho = crate::random::random_distribution(&mut rng, 5);
            let gap = |d: &Distribution| d.dot(opt.v.as_slice()) - d.dot(e.v.as_slice());
            let ratio = (0..5).map(|s| phi[s] / rho[s]).fold(0.0, f64::max);
            assert!(gap(&phi) <= ratio * gap(&rho) + 1e-9);
        }
    }
}
