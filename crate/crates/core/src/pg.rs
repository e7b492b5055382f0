//! Single-agent policy optimization: projected PG, softmax PG (plain,
//! log-barrier and entropy-regularized), NPG and entropy-regularized NPG.

use log::warn;

use crate::error::{Error, Result};
use crate::mdp::{
    policy_from_softmax, SoftmaxParams, StochasticPolicy, TabularMdp, EvaluationResult,
};
use crate::numeric::{logsumexp, project_to_simplex, sup_norm, Distribution, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PgMethod {
    ProjectedPg,
    SoftmaxPg,
    LogBarrierPg,
    Npg,
    EntropyNpg,
    /// Softmax PG ascending the entropy-regularized value.
    EntropyPg,
}

impl PgMethod {
    pub const ALL: [PgMethod; 6] = [
        PgMethod::ProjectedPg,
        PgMethod::SoftmaxPg,
        PgMethod::LogBarrierPg,
        PgMethod::Npg,
        PgMethod::EntropyNpg,
        PgMethod::EntropyPg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PgMethod::ProjectedPg => "projected_pg",
            PgMethod::SoftmaxPg => "softmax_pg",
            PgMethod::LogBarrierPg => "log_barrier_pg",
            PgMethod::Npg => "npg",
            PgMethod::EntropyNpg => "entropy_npg",
            PgMethod::EntropyPg => "entropy_pg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Whether the method optimizes the entropy-regularized value.
    pub fn is_regularized(self) -> bool {
        matches!(self, PgMethod::EntropyNpg | PgMethod::EntropyPg)
    }
}

impl std::fmt::Display for PgMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgConfig {
    pub method: PgMethod,
    pub learning_rate: f64,
    /// Entropy temperature; used by the regularized methods only.
    pub tau: f64,
    /// Log-barrier weight; used by `LogBarrierPg` only.
    pub omega: f64,
    pub max_iters: usize,
    pub record_every: usize,
    pub record_policy: bool,
    /// Accuracy of the optimal-value reference the gaps are measured against.
    pub reference_tol: f64,
}

impl PgConfig {
    pub fn new(method: PgMethod, learning_rate: f64, max_iters: usize) -> Self {
        Self {
            method,
            learning_rate,
            tau: 0.0,
            omega: 0.0,
            max_iters,
            record_every: 1,
            record_policy: false,
            reference_tol: 1e-12,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_policies(mut self) -> Self {
        self.record_policy = true;
        self
    }

    /// Checks the hyperparameters against `gamma`. Entropy-NPG's step-size
    /// range is enforced; elsewhere out-of-theory step sizes only warn.
    pub fn validate(&self, gamma: f64) -> Result<()> {
        let eta = self.learning_rate;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("learning rate {eta} must be positive")));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.reference_tol > 0.0) {
            return Err(Error::Config("reference tolerance must be positive".into()));
        }
        let regularized = self.method.is_regularized();
        if regularized && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("{} needs tau > 0", self.method)));
        }
        if !regularized && self.tau != 0.0 {
            return Err(Error::Config(format!("tau is only used by entropy methods, not {}", self.method)));
        }
        let barrier = self.method == PgMethod::LogBarrierPg;
        if barrier && !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Config("log_barrier_pg needs omega > 0".into()));
        }
        if !barrier && self.omega != 0.0 {
            return Err(Error::Config(format!("omega is only used by log_barrier_pg, not {}", self.method)));
        }
        if self.method == PgMethod::EntropyNpg {
            check_entropy_npg_rate(eta, self.tau, gamma)?;
        }
        if self.method == PgMethod::SoftmaxPg && eta > (1.0 - gamma).powi(3) / 8.0 {
            warn!("softmax PG step {eta} exceeds (1-gamma)^3/8; asymptotic convergence is not certified");
        }
        Ok(())
    }
}

fn check_entropy_npg_rate(eta: f64, tau: f64, gamma: f64) -> Result<()> {
    let limit = (1.0 - gamma) / tau;
    if !(eta > 0.0 && eta <= limit * (1.0 + 1e-12)) {
        return Err(Error::Config(format!(
            "entropy NPG needs 0 < eta <= (1-gamma)/tau = {limit}, got {eta}"
        )));
    }
    Ok(())
}

fn check_positive_rate(eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("learning rate {eta} must be nonnegative")));
    }
    Ok(())
}

/// `grad_pi V(rho)(s, a) = d_rho(s) Q(s, a) / (1 - gamma)`.
pub fn direct_gradient(mdp: &TabularMdp, eval: &EvaluationResult) -> Mat {
    let g = 1.0 - mdp.gamma();
    Mat::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        eval.d_rho[s] * eval.q[(s, a)] / g
    })
}

/// Projected gradient ascent on the direct parameterization.
pub fn direct_pg_step(mdp: &TabularMdp, pi: &StochasticPolicy, eta: f64) -> Result<StochasticPolicy> {
    check_positive_rate(eta)?;
    let eval = mdp.evaluate_policy(pi)?;
    let grad = direct_gradient(mdp, &eval);
    let rows = (0..mdp.n_states())
        .map(|s| {
            let moved: Vec<f64> = (0..mdp.n_actions())
                .map(|a| pi.prob(s, a) + eta * grad[(s, a)])
                .collect();
            project_to_simplex(&moved)
        })
        .collect::<Result<Vec<_>>>()?;
    StochasticPolicy::from_rows(&rows)
}

/// `d_rho(s) pi(a|s) Adv(s, a) / (1 - gamma)`.
pub fn softmax_gradient(mdp: &TabularMdp, theta: &SoftmaxParams) -> Result<Mat> {
    let pi = theta.policy();
    let eval = mdp.evaluate_policy(&pi)?;
    Ok(softmax_gradient_from(mdp, &pi, &eval.d_rho, &eval.adv))
}

fn softmax_gradient_from(
    mdp: &TabularMdp,
    pi: &StochasticPolicy,
    d_rho: &Distribution,
    adv: &Mat,
) -> Mat {
    let g = 1.0 - mdp.gamma();
    Mat::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        d_rho[s] * pi.prob(s, a) * adv[(s, a)] / g
    })
}

pub fn softmax_pg_step(mdp: &TabularMdp, theta: &SoftmaxParams, eta: f64) -> Result<SoftmaxParams> {
    check_positive_rate(eta)?;
    let grad = softmax_gradient(mdp, theta)?;
    SoftmaxParams::new(theta.logits() + grad * eta)
}

/// Gradient of `omega / (S A) * sum_{s,a} log pi_theta(a|s)`, which is
/// `omega / (S A) * (1 - A pi(a|s))`.
pub fn log_barrier_gradient(theta: &SoftmaxParams, omega: f64) -> Mat {
    let pi = theta.policy();
    let (n, m) = (theta.n_states(), theta.n_actions());
    let scale = omega / (n * m) as f64;
    Mat::from_fn(n, m, |s, a| scale * (1.0 - m as f64 * pi.prob(s, a)))
}

/// Ascent step on `V(rho) + omega / (S A) sum log pi`.
pub fn log_barrier_pg_step(
    mdp: &TabularMdp,
    theta: &SoftmaxParams,
    eta: f64,
    omega: f64,
) -> Result<SoftmaxParams> {
    check_positive_rate(eta)?;
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::Config(format!("barrier weight {omega} must be nonnegative")));
    }
    let grad = softmax_gradient(mdp, theta)? + log_barrier_gradient(theta, omega);
    SoftmaxParams::new(theta.logits() + grad * eta)
}

/// Gradient of the entropy-regularized value `V_tau(rho)` in the logits:
/// `d_rho(s) pi(a|s) (Q_tau(s,a) - tau log pi(a|s) - V_tau(s)) / (1 - gamma)`.
pub fn entropy_softmax_gradient(mdp: &TabularMdp, theta: &SoftmaxParams, tau: f64) -> Result<Mat> {
    let theta = theta.normalized();
    let pi = theta.policy();
    let soft = mdp.soft_evaluate_policy(&pi, tau)?;
    let d_rho = mdp.visitation_distribution(&pi, mdp.rho())?;
    let g = 1.0 - mdp.gamma();
    Ok(Mat::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        let soft_adv = soft.q[(s, a)] - tau * theta.logits()[(s, a)] - soft.v[s];
        d_rho[s] * pi.prob(s, a) * soft_adv / g
    }))
}

pub fn entropy_pg_step(
    mdp: &TabularMdp,
    theta: &SoftmaxParams,
    eta: f64,
    tau: f64,
) -> Result<SoftmaxParams> {
    check_positive_rate(eta)?;
    let grad = entropy_softmax_gradient(mdp, theta, tau)?;
    SoftmaxParams::new(theta.logits() + grad * eta)
}

fn check_q_shape(pi: &StochasticPolicy, q: &Mat) -> Result<()> {
    if q.shape() != (pi.n_states(), pi.n_actions()) {
        return Err(Error::Dimension(format!(
            "Q table is {:?}, policy is {}x{}",
            q.shape(),
            pi.n_states(),
            pi.n_actions()
        )));
    }
    Ok(())
}

fn full_support_logits(pi: &StochasticPolicy, what: &str) -> Result<Mat> {
    if !pi.is_strictly_positive() {
        return Err(Error::Domain(format!(
            "{what} cannot move a policy with zero-probability actions"
        )));
    }
    Ok(pi.matrix().map(f64::ln))
}

/// Log-space NPG update on normalized log-probabilities.
fn npg_logits(log_pi: &Mat, q: &Mat, eta: f64, gamma: f64) -> Mat {
    let mut next = log_pi + q * (eta / (1.0 - gamma));
    normalize_rows(&mut next);
    next
}

/// `log pi <- (1 - eta tau/(1-gamma)) log pi + eta Q_tau / (1 - gamma)`.
fn entropy_npg_logits(log_pi: &Mat, q_tau: &Mat, eta: f64, tau: f64, gamma: f64) -> Mat {
    let keep = 1.0 - eta * tau / (1.0 - gamma);
    let mut next = log_pi * keep + q_tau * (eta / (1.0 - gamma));
    normalize_rows(&mut next);
    next
}

fn normalize_rows(logits: &mut Mat) {
    for mut row in logits.row_iter_mut() {
        let lse = logsumexp(&row.iter().copied().collect::<Vec<_>>());
        row.add_scalar_mut(-lse);
    }
}

/// `pi'(a|s) ∝ pi(a|s) exp(eta Q(s,a) / (1 - gamma))`.
pub fn npg_step(pi: &StochasticPolicy, q: &Mat, eta: f64, gamma: f64) -> Result<StochasticPolicy> {
    check_positive_rate(eta)?;
    check_q_shape(pi, q)?;
    let log_pi = full_support_logits(pi, "NPG")?;
    Ok(policy_from_softmax(&SoftmaxParams::new(npg_logits(&log_pi, q, eta, gamma))?))
}

/// `pi'(a|s) ∝ pi(a|s)^(1 - eta tau/(1-gamma)) exp(eta Q_tau(s,a) / (1 - gamma))`.
pub fn entropy_npg_step(
    pi: &StochasticPolicy,
    q_tau: &Mat,
    eta: f64,
    tau: f64,
    gamma: f64,
) -> Result<StochasticPolicy> {
    check_entropy_npg_rate(eta, tau, gamma)?;
    check_q_shape(pi, q_tau)?;
    let log_pi = full_support_logits(pi, "entropy NPG")?;
    let next = entropy_npg_logits(&log_pi, q_tau, eta, tau, gamma);
    Ok(policy_from_softmax(&SoftmaxParams::new(next)?))
}

/// Rowwise minimizer of `<p, -Q_tau> - tau H(p) + KL(p || pi) / eta_md`,
/// `p ∝ pi^(1/(1 + eta_md tau)) exp(eta_md Q_tau / (1 + eta_md tau))`.
pub fn mirror_descent_step(
    pi: &StochasticPolicy,
    q_tau: &Mat,
    eta_md: f64,
    tau: f64,
) -> Result<StochasticPolicy> {
    check_q_shape(pi, q_tau)?;
    if !(eta_md > 0.0) || !(tau >= 0.0) {
        return Err(Error::Config("mirror descent needs eta_md > 0 and tau >= 0".into()));
    }
    let log_pi = full_support_logits(pi, "mirror descent")?;
    let denom = 1.0 + eta_md * tau;
    let next = Mat::from_fn(pi.n_states(), pi.n_actions(), |s, a| {
        (log_pi[(s, a)] + eta_md * q_tau[(s, a)]) / denom
    });
    Ok(SoftmaxParams::new(next)?.policy())
}

/// Mirror-descent step size equivalent to entropy-NPG with rate `eta`.
pub fn mirror_descent_rate(eta: f64, tau: f64, gamma: f64) -> f64 {
    eta / (1.0 - gamma - eta * tau)
}

/// Starting point of a run.
#[derive(Debug, Clone)]
pub enum PgInit {
    Uniform,
    Logits(SoftmaxParams),
    Policy(StochasticPolicy),
}

#[derive(Debug, Clone)]
pub struct PgRecord {
    pub iter: usize,
    /// `V(rho)`, or `V_tau(rho)` for the regularized methods.
    pub value_rho: f64,
    pub gap_rho: f64,
    pub gap_sup: f64,
    /// Largest per-state TV distance to the reference optimal policy.
    pub tv_opt: f64,
    pub policy: Option<StochasticPolicy>,
}

#[derive(Debug, Clone)]
pub struct PgTrace {
    pub method: PgMethod,
    pub records: Vec<PgRecord>,
    pub final_policy: StochasticPolicy,
    /// Optimal (or soft-optimal) values the gaps refer to.
    pub v_star: crate::numeric::Vector,
    pub reference_policy: StochasticPolicy,
}

impl PgTrace {
    pub fn last(&self) -> &PgRecord {
        self.records.last().expect("a trace always holds the initial point")
    }
}

enum Iterate {
    Direct(StochasticPolicy),
    Logits(SoftmaxParams),
}

impl Iterate {
    fn policy(&self) -> StochasticPolicy {
        match self {
            Iterate::Direct(pi) => pi.clone(),
            Iterate::Logits(theta) => theta.policy(),
        }
    }
}

/// Iterates `config.method` from `init` with exact evaluation at every step,
/// recording gaps to the optimal (or soft-optimal) values.
pub fn run_single_agent(mdp: &TabularMdp, config: &PgConfig, init: PgInit) -> Result<PgTrace> {
    config.validate(mdp.gamma())?;
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let tau = config.tau;
    let eta = config.learning_rate;
    let gamma = mdp.gamma();

    let mut state = match (config.method, init) {
        (PgMethod::ProjectedPg, PgInit::Uniform) => Iterate::Direct(StochasticPolicy::uniform(n, m)),
        (PgMethod::ProjectedPg, PgInit::Policy(pi)) => Iterate::Direct(pi),
        (PgMethod::ProjectedPg, PgInit::Logits(theta)) => Iterate::Direct(theta.policy()),
        (_, PgInit::Uniform) => Iterate::Logits(SoftmaxParams::zeros(n, m)),
        (_, PgInit::Logits(theta)) => Iterate::Logits(theta),
        (_, PgInit::Policy(pi)) => Iterate::Logits(SoftmaxParams::from_policy(&pi)?),
    };
    if let Iterate::Direct(pi) = &state {
        if pi.n_states() != n || pi.n_actions() != m {
            return Err(Error::Dimension("initial policy does not match the MDP".into()));
        }
    }
    if let Iterate::Logits(theta) = &state {
        if theta.n_states() != n || theta.n_actions() != m {
            return Err(Error::Dimension("initial logits do not match the MDP".into()));
        }
        // the multiplicative methods operate on normalized log-probabilities
        if matches!(config.method, PgMethod::Npg | PgMethod::EntropyNpg) {
            state = Iterate::Logits(theta.normalized());
        }
    }

    let (v_star, reference_policy) = if config.method.is_regularized() {
        let soft = mdp.soft_optimal_values(tau, config.reference_tol)?;
        (soft.v, soft.policy)
    } else {
        let opt = mdp.optimal_values(config.reference_tol)?;
        (opt.v, opt.greedy)
    };
    let v_star_rho = mdp.rho().dot(v_star.as_slice());

    let mut records = Vec::new();
    for t in 0..=config.max_iters {
        let pi = state.policy();
        // evaluation shared between the record and the step
        let (v, q, plain) = if config.method.is_regularized() {
            let soft = mdp.soft_evaluate_policy(&pi, tau)?;
            (soft.v, soft.q, None)
        } else {
            let e = mdp.evaluate_policy(&pi)?;
            (e.v.clone(), e.q.clone(), Some(e))
        };
        if t % config.record_every == 0 || t == config.max_iters {
            let value_rho = mdp.rho().dot(v.as_slice());
            records.push(PgRecord {
                iter: t,
                value_rho,
                gap_rho: v_star_rho - value_rho,
                gap_sup: sup_norm(&(&v_star - &v)),
                tv_opt: pi.max_tv(&reference_policy),
                policy: config.record_policy.then(|| pi.clone()),
            });
        }
        if t == config.max_iters {
            break;
        }
        state = match (&state, config.method) {
            (Iterate::Direct(pi), PgMethod::ProjectedPg) => {
                let eval = plain.as_ref().expect("unregularized evaluation");
                let grad = direct_gradient(mdp, eval);
                let rows = (0..n)
                    .map(|s| {
                        let moved: Vec<f64> =
                            (0..m).map(|a| pi.prob(s, a) + eta * grad[(s, a)]).collect();
                        project_to_simplex(&moved)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Iterate::Direct(StochasticPolicy::from_rows(&rows)?)
            }
            (Iterate::Logits(theta), PgMethod::SoftmaxPg) => {
                let eval = plain.as_ref().expect("unregularized evaluation");
                let grad = softmax_gradient_from(mdp, &pi, &eval.d_rho, &eval.adv);
                Iterate::Logits(SoftmaxParams::new(theta.logits() + grad * eta)?)
            }
            (Iterate::Logits(theta), PgMethod::LogBarrierPg) => {
                let eval = plain.as_ref().expect("unregularized evaluation");
                let grad = softmax_gradient_from(mdp, &pi, &eval.d_rho, &eval.adv)
                    + log_barrier_gradient(theta, config.omega);
                Iterate::Logits(SoftmaxParams::new(theta.logits() + grad * eta)?)
            }
            (Iterate::Logits(theta), PgMethod::Npg) => {
                Iterate::Logits(SoftmaxParams::new(npg_logits(theta.logits(), &q, eta, gamma))?)
            }
            (Iterate::Logits(theta), PgMethod::EntropyNpg) => Iterate::Logits(SoftmaxParams::new(
                entropy_npg_logits(theta.logits(), &q, eta, tau, gamma),
            )?),
            (Iterate::Logits(theta), PgMethod::EntropyPg) => {
                Iterate::Logits(entropy_pg_step(mdp, theta, eta, tau)?)
            }
            _ => unreachable!("iterate kind is fixed by the method"),
        };
    }
    Ok(PgTrace {
        method: config.method,
        records,
        final_policy: state.policy(),
        v_star,
        reference_policy,
    })
}

/// `max_s d(s) / rho(s)`; infinite when `rho` misses part of `d`'s support.
pub fn mismatch_coefficient(d: &Distribution, rho: &Distribution) -> f64 {
    d.as_slice()
        .iter()
        .zip(rho.as_slice())
        .map(|(x, y)| if *x == 0.0 { 0.0 } else if *y == 0.0 { f64::INFINITY } else { x / y })
        .fold(0.0, f64::max)
}

/// Right-hand side of the projected-PG guarantee on `min_{t <= T}` gap.
pub fn projected_pg_bound(
    n_states: usize,
    gamma: f64,
    mismatch: f64,
    initial_gap: f64,
    eta: f64,
    t: usize,
) -> f64 {
    4.0 * (n_states as f64).sqrt() / (1.0 - gamma)
        * mismatch
        * (2.0 * initial_gap / (eta * t as f64)).sqrt()
}

/// Largest step for which projected PG is guaranteed monotone.
pub fn projected_pg_rate(gamma: f64, n_actions: usize) -> f64 {
    (1.0 - gamma).powi(3) / (2.0 * gamma * n_actions as f64)
}

/// NPG guarantee `(log A / eta + 1 / (1 - gamma)^2) / T` from uniform init.
pub fn npg_bound(n_actions: usize, gamma: f64, eta: f64, t: usize) -> f64 {
    ((n_actions as f64).ln() / eta + 1.0 / (1.0 - gamma).powi(2)) / t as f64
}

/// Entropy-NPG sup-norm guarantee
/// `15 (1 + tau log A) / (1 - gamma) (1 - eta tau)^(T-1)`.
pub fn entropy_npg_sup_bound(n_actions: usize, gamma: f64, eta: f64, tau: f64, t: usize) -> f64 {
    15.0 * (1.0 + tau * (n_actions as f64).ln()) / (1.0 - gamma)
        * (1.0 - eta * tau).powf(t as f64 - 1.0)
}

/// Entropy-NPG guarantee at `rho`, scaled by `||rho / nu_tau*||_inf` and
/// contracting at `max(gamma, 1 - eta tau / (1 - gamma))`.
pub fn entropy_npg_rho_bound(
    n_actions: usize,
    gamma: f64,
    eta: f64,
    tau: f64,
    mismatch: f64,
    t: usize,
) -> f64 {
    let log_a = (n_actions as f64).ln();
    let rate = gamma.max(1.0 - eta * tau / (1.0 - gamma));
    mismatch * ((1.0 + tau * log_a) / (1.0 - gamma) + (1.0 - gamma) * log_a / eta)
        * rate.powf(t as f64)
}
