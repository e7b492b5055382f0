//! Two-player zero-sum matrix games `max_mu min_nu mu^T A nu`: MWU, OMWU
//! with optional entropy regularization, regularization-only MWU, and the
//! NE/QRE gap metrics.

use log::warn;

use crate::error::{Error, Result};
use crate::numeric::{
    entropy, kl_divergence, logsumexp, normalize_log_weights, softmax, tv_distance,
    Distribution, Mat, Vector,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    payoff: Mat,
}

impl MatrixGame {
    /// Payoff with every entry in `[-1, 1]`.
    pub fn new(payoff: Mat) -> Result<Self> {
        let game = Self::from_values(payoff)?;
        if let Some(x) = game.payoff.iter().find(|x| x.abs() > 1.0) {
            return Err(Error::Domain(format!("payoff entry {x} outside [-1, 1]")));
        }
        Ok(game)
    }

    /// Any finite payoff. Used for the per-state Q matrices of Markov games,
    /// whose entries exceed one.
    pub fn from_values(payoff: Mat) -> Result<Self> {
        if payoff.is_empty() {
            return Err(Error::Dimension("empty payoff matrix".into()));
        }
        if payoff.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite payoff entry".into()));
        }
        Ok(Self { payoff })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("payoff rows must be non-empty and equal length".into()));
        }
        Self::new(Mat::from_fn(m, n, |i, j| rows[i][j]))
    }

    /// Rock-paper-scissors from the row player's point of view.
    pub fn rock_paper_scissors() -> Self {
        Self {
            payoff: Mat::from_row_slice(3, 3, &[0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0]),
        }
    }

    pub fn payoff(&self) -> &Mat {
        &self.payoff
    }

    /// Number of row-player (max) actions.
    pub fn m(&self) -> usize {
        self.payoff.nrows()
    }

    /// Number of column-player (min) actions.
    pub fn n(&self) -> usize {
        self.payoff.ncols()
    }

    /// `A nu`.
    pub fn row_payoffs(&self, nu: &[f64]) -> Vec<f64> {
        row_payoffs(&self.payoff, nu)
    }

    /// `A^T mu`.
    pub fn column_payoffs(&self, mu: &[f64]) -> Vec<f64> {
        column_payoffs(&self.payoff, mu)
    }

    /// `mu^T A nu`.
    pub fn value(&self, pair: &StrategyPair) -> f64 {
        pair.mu.dot(&self.row_payoffs(pair.nu.as_slice()))
    }

    fn check_pair(&self, pair: &StrategyPair) -> Result<()> {
        if pair.mu.len() != self.m() || pair.nu.len() != self.n() {
            return Err(Error::Dimension(format!(
                "strategies of sizes ({}, {}) for a {}x{} game",
                pair.mu.len(),
                pair.nu.len(),
                self.m(),
                self.n()
            )));
        }
        Ok(())
    }
}

fn row_payoffs(a: &Mat, nu: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * nu[j]).sum())
        .collect()
}

fn column_payoffs(a: &Mat, mu: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)] * mu[i]).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPair {
    pub mu: Distribution,
    pub nu: Distribution,
}

impl StrategyPair {
    pub fn new(mu: Distribution, nu: Distribution) -> Self {
        Self { mu, nu }
    }

    pub fn uniform(m: usize, n: usize) -> Self {
        Self::new(Distribution::uniform(m), Distribution::uniform(n))
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.mu.is_strictly_positive() && self.nu.is_strictly_positive()
    }

    /// Larger of the two TV distances.
    pub fn max_tv(&self, other: &StrategyPair) -> f64 {
        tv_distance(self.mu.as_slice(), other.mu.as_slice())
            .max(tv_distance(self.nu.as_slice(), other.nu.as_slice()))
    }

    /// `KL(reference.mu || mu) + KL(reference.nu || nu)`.
    pub fn kl_from(&self, reference: &StrategyPair) -> Result<f64> {
        Ok(kl_divergence(&reference.mu, &self.mu)? + kl_divergence(&reference.nu, &self.nu)?)
    }
}

fn positive_logs(p: &Distribution, who: &str) -> Result<Vec<f64>> {
    if !p.is_strictly_positive() {
        return Err(Error::Domain(format!(
            "{who} strategy has zero-probability actions"
        )));
    }
    Ok(p.log_probs())
}

fn from_logs(w: &[f64]) -> Distribution {
    Distribution::from_log_weights(w).expect("finite log-weights")
}

/// `keep * log_p + scale * payoff`, normalized.
fn damped_update(log_p: &[f64], keep: f64, payoff: &[f64], scale: f64) -> Vec<f64> {
    let mut w = log_p.to_vec();
    damp_in_place(&mut w, keep, payoff, scale);
    w
}

fn damp_in_place(w: &mut [f64], keep: f64, payoff: &[f64], scale: f64) {
    w.iter_mut().zip(payoff).for_each(|(l, g)| *l = keep * *l + scale * g);
    normalize_log_weights(w);
}

/// `mu' ∝ mu exp(eta A nu)`, `nu' ∝ nu exp(-eta A^T mu)`.
pub fn mwu_step(game: &MatrixGame, pair: &StrategyPair, eta: f64) -> Result<StrategyPair> {
    game.check_pair(pair)?;
    let lm = positive_logs(&pair.mu, "row")?;
    let ln = positive_logs(&pair.nu, "column")?;
    let a_nu = game.row_payoffs(pair.nu.as_slice());
    let at_mu = game.column_payoffs(pair.mu.as_slice());
    Ok(StrategyPair::new(
        from_logs(&damped_update(&lm, 1.0, &a_nu, eta)),
        from_logs(&damped_update(&ln, 1.0, &at_mu, -eta)),
    ))
}

/// `mu' ∝ mu^(1 - eta tau) exp(eta A nu)`, `nu' ∝ nu^(1 - eta tau) exp(-eta A^T mu)`,
/// both players moving simultaneously against the opponent's current strategy.
pub fn reg_mwu_step(game: &MatrixGame, pair: &StrategyPair, eta: f64, tau: f64) -> Result<StrategyPair> {
    game.check_pair(pair)?;
    if !(tau > 0.0) {
        return Err(Error::Config(format!("regularization {tau} must be positive")));
    }
    if !(eta > 0.0) || eta * tau >= 1.0 {
        return Err(Error::Config(format!(
            "regularized MWU needs 0 < eta tau < 1, got eta {eta}, tau {tau}"
        )));
    }
    let keep = 1.0 - eta * tau;
    let lm = positive_logs(&pair.mu, "row")?;
    let ln = positive_logs(&pair.nu, "column")?;
    let a_nu = game.row_payoffs(pair.nu.as_slice());
    let at_mu = game.column_payoffs(pair.mu.as_slice());
    Ok(StrategyPair::new(
        from_logs(&damped_update(&lm, keep, &a_nu, eta)),
        from_logs(&damped_update(&ln, keep, &at_mu, -eta)),
    ))
}

/// Iterates of the (optionally entropy-regularized) optimistic MWU listing:
/// the current pair `(mu, nu)` and the predictive pair `(mu_bar, nu_bar)`,
/// all stored as normalized log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct OmwuState {
    log_mu: Vec<f64>,
    log_nu: Vec<f64>,
    log_mu_bar: Vec<f64>,
    log_nu_bar: Vec<f64>,
    eta: f64,
    tau: f64,
    t: usize,
}

impl OmwuState {
    /// All four strategies uniform.
    pub fn new(m: usize, n: usize, eta: f64, tau: f64) -> Result<Self> {
        Self::from_pair(&StrategyPair::uniform(m, n), eta, tau)
    }

    /// Current and predictive pair both set to `pair`.
    pub fn from_pair(pair: &StrategyPair, eta: f64, tau: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("learning rate {eta} must be positive")));
        }
        if !(tau >= 0.0 && tau.is_finite()) || eta * tau > 1.0 {
            return Err(Error::Config(format!(
                "OMWU needs tau >= 0 and eta tau <= 1, got eta {eta}, tau {tau}"
            )));
        }
        if tau > 0.0 && eta > (1.0 / (2.0 * tau + 2.0)).min(0.25) {
            warn!("OMWU step {eta} exceeds min(1/(2 tau + 2), 1/4) for tau = {tau}; linear convergence is not certified");
        }
        let log_mu = positive_logs(&pair.mu, "row")?;
        let log_nu = positive_logs(&pair.nu, "column")?;
        Ok(Self {
            log_mu_bar: log_mu.clone(),
            log_nu_bar: log_nu.clone(),
            log_mu,
            log_nu,
            eta,
            tau,
            t: 0,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of completed steps.
    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn pair(&self) -> StrategyPair {
        StrategyPair::new(from_logs(&self.log_mu), from_logs(&self.log_nu))
    }

    /// Normalized log-probabilities of the current pair.
    pub fn log_pair(&self) -> (&[f64], &[f64]) {
        (&self.log_mu, &self.log_nu)
    }

    pub fn predictive(&self) -> StrategyPair {
        StrategyPair::new(from_logs(&self.log_mu_bar), from_logs(&self.log_nu_bar))
    }

    /// One pass of the listing's loop body on `game`, in place.
    pub fn step(&mut self, game: &MatrixGame) -> Result<()> {
        self.step_payoff(game.payoff())
    }

    /// [`OmwuState::step`] on a raw payoff matrix, which may have entries
    /// outside `[-1, 1]`.
    pub fn step_payoff(&mut self, payoff: &Mat) -> Result<()> {
        if payoff.nrows() != self.log_mu.len() || payoff.ncols() != self.log_nu.len() {
            return Err(Error::Dimension("OMWU state does not match the game".into()));
        }
        let keep = 1.0 - self.eta * self.tau;
        let mu: Vec<f64> = self.log_mu.iter().map(|l| l.exp()).collect();
        let nu: Vec<f64> = self.log_nu.iter().map(|l| l.exp()).collect();
        let a_nu = row_payoffs(payoff, &nu);
        let at_mu = column_payoffs(payoff, &mu);
        if self.t >= 1 {
            damp_in_place(&mut self.log_mu_bar, keep, &a_nu, self.eta);
            damp_in_place(&mut self.log_nu_bar, keep, &at_mu, -self.eta);
        }
        self.log_mu.copy_from_slice(&self.log_mu_bar);
        self.log_nu.copy_from_slice(&self.log_nu_bar);
        damp_in_place(&mut self.log_mu, keep, &a_nu, self.eta);
        damp_in_place(&mut self.log_nu, keep, &at_mu, -self.eta);
        self.t += 1;
        Ok(())
    }
}

pub fn omwu_step(game: &MatrixGame, state: &OmwuState) -> Result<OmwuState> {
    let mut next = state.clone();
    next.step(game)?;
    Ok(next)
}

/// `max_a (A nu)_a - min_b (A^T mu)_b`.
pub fn ne_gap(game: &MatrixGame, pair: &StrategyPair) -> Result<f64> {
    game.check_pair(pair)?;
    let best_row = game
        .row_payoffs(pair.nu.as_slice())
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let best_col = game
        .column_payoffs(pair.mu.as_slice())
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok((best_row - best_col).max(0.0))
}

/// `mu^T A nu + tau H(mu) - tau H(nu)`.
pub fn regularized_value(game: &MatrixGame, pair: &StrategyPair, tau: f64) -> f64 {
    game.value(pair) + tau * entropy(&pair.mu) - tau * entropy(&pair.nu)
}

/// Soft best responses `(softmax(A nu / tau), softmax(-A^T mu / tau))`.
pub fn soft_best_responses(game: &MatrixGame, pair: &StrategyPair, tau: f64) -> StrategyPair {
    let a_nu: Vec<f64> = game.row_payoffs(pair.nu.as_slice()).iter().map(|x| x / tau).collect();
    let at_mu: Vec<f64> = game.column_payoffs(pair.mu.as_slice()).iter().map(|x| -x / tau).collect();
    StrategyPair::new(
        Distribution::new(softmax(&a_nu)).expect("softmax"),
        Distribution::new(softmax(&at_mu)).expect("softmax"),
    )
}

/// Regularized duality gap
/// `max_mu' V_tau(mu', nu) - min_nu' V_tau(mu, nu')`
/// `= tau lse(A nu / tau) + tau lse(-A^T mu / tau) - tau H(mu) - tau H(nu)`,
/// evaluated as `tau KL(mu || br(nu)) + tau KL(nu || br(mu))`, which avoids
/// cancellation near the equilibrium.
pub fn qre_gap(game: &MatrixGame, pair: &StrategyPair, tau: f64) -> Result<f64> {
    game.check_pair(pair)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    let row: Vec<f64> = game.row_payoffs(pair.nu.as_slice()).iter().map(|x| x / tau).collect();
    let col: Vec<f64> = game.column_payoffs(pair.mu.as_slice()).iter().map(|x| -x / tau).collect();
    let kl_log_form = |p: &Distribution, scores: &[f64]| -> f64 {
        let lse = logsumexp(scores);
        p.as_slice()
            .iter()
            .zip(scores)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, s)| x * (x.ln() - (s - lse)))
            .sum::<f64>()
            .max(0.0)
    };
    Ok(tau * (kl_log_form(&pair.mu, &row) + kl_log_form(&pair.nu, &col)))
}

/// Rowwise TV distance between a pair and its soft best responses.
pub fn qre_residual(game: &MatrixGame, pair: &StrategyPair, tau: f64) -> f64 {
    pair.max_tv(&soft_best_responses(game, pair, tau))
}

/// Step size used by [`solve_qre`]: `min(1 / (2 tau + 2), 1 / 4)`.
pub fn qre_learning_rate(tau: f64) -> f64 {
    (1.0 / (2.0 * tau + 2.0)).min(0.25)
}

/// Quantal response equilibrium by entropy-regularized OMWU from uniform.
pub fn solve_qre(game: &MatrixGame, tau: f64, tol: f64) -> Result<StrategyPair> {
    solve_qre_from(game, tau, tol, None)
}

/// [`solve_qre`] warm-started at `start` when given. Stops once the
/// regularized gap is at most `tol` and the fixed-point residual is at most
/// `tol`, or at its rounding floor `16 eps spread / tau` when that is larger.
pub fn solve_qre_from(
    game: &MatrixGame,
    tau: f64,
    tol: f64,
    start: Option<&StrategyPair>,
) -> Result<StrategyPair> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    if game.m() == 1 && game.n() == 1 {
        return Ok(StrategyPair::uniform(1, 1));
    }
    let eta = qre_learning_rate(tau);
    let mut state = match start {
        Some(pair) if pair.is_strictly_positive() => OmwuState::from_pair(pair, eta, tau)?,
        _ => OmwuState::new(game.m(), game.n(), eta, tau)?,
    };
    let spread = game.payoff.max() - game.payoff.min();
    let contraction_steps = ((10.0 * (1.0 + spread / tau)).ln() - tol.ln()) / (eta * tau);
    let cap = (4.0 * contraction_steps + 10_000.0).min(5e6) as usize;
    // soft best responses amplify rounding in the strategies by spread / tau
    let residual_tol = tol.max(16.0 * f64::EPSILON * spread / tau);
    let mut residual = f64::INFINITY;
    for k in 0..=cap {
        let pair = state.pair();
        residual = qre_gap(game, &pair, tau)?;
        if residual <= tol && qre_residual(game, &pair, tau) <= residual_tol {
            return Ok(pair);
        }
        // near the equilibrium OMWU contracts only at 1 - eta tau; finish with Newton
        if k > 0 && k % 1000 == 0 && residual <= 1e-3 {
            if let Some(polished) = newton_qre(game, tau, tol, residual_tol, &pair)? {
                return Ok(polished);
            }
        }
        state.step(game)?;
    }
    Err(Error::Convergence {
        iterations: cap,
        residual,
    })
}

/// Newton's method on the log-space fixed point
/// `x = log softmax(A softmax(y) / tau)`, `y = log softmax(-A^T softmax(x) / tau)`,
/// started from the soft best responses to `start`. Returns the pair only if it
/// passes the same gap and residual test as the OMWU loop.
fn newton_qre(
    game: &MatrixGame,
    tau: f64,
    tol: f64,
    residual_tol: f64,
    start: &StrategyPair,
) -> Result<Option<StrategyPair>> {
    let (m, n) = (game.m(), game.n());
    let a = &game.payoff;
    let log_softmax = |z: Vec<f64>| -> Vec<f64> {
        let lse = logsumexp(&z);
        z.into_iter().map(|v| v - lse).collect()
    };
    let row_scores = |nu: &[f64]| -> Vec<f64> { row_payoffs(a, nu).iter().map(|v| v / tau).collect() };
    let col_scores = |mu: &[f64]| -> Vec<f64> { column_payoffs(a, mu).iter().map(|v| -v / tau).collect() };
    let mut x = log_softmax(row_scores(start.nu.as_slice()));
    let mut y = log_softmax(col_scores(start.mu.as_slice()));
    for _ in 0..50 {
        let mu = softmax(&x);
        let nu = softmax(&y);
        let zr = row_scores(&nu);
        let zc = col_scores(&mu);
        let (br_r, br_c) = (softmax(&zr), softmax(&zc));
        let (lr, lc) = (log_softmax(zr), log_softmax(zc));
        let f = Vector::from_iterator(
            m + n,
            x.iter().zip(&lr).chain(y.iter().zip(&lc)).map(|(u, v)| u - v),
        );
        if f.amax() <= 1e-14 * (1.0 + x.iter().chain(&y).fold(0.0f64, |acc, v| acc.max(v.abs()))) {
            break;
        }
        // d log softmax(z) / dz = I - 1 p^T, d softmax(y) / dy = diag(p) - p p^T
        let centered = |p: &[f64]| Mat::from_fn(p.len(), p.len(), |i, j| f64::from(u8::from(i == j)) - p[j]);
        let spread = |p: &[f64]| Mat::from_fn(p.len(), p.len(), |i, j| {
            if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] }
        });
        let upper = centered(&br_r) * (a / tau) * spread(&nu);
        let lower = centered(&br_c) * (a.transpose() / tau) * spread(&mu);
        let mut jac = Mat::identity(m + n, m + n);
        jac.view_mut((0, m), (m, n)).copy_from(&(-upper));
        jac.view_mut((m, 0), (n, m)).copy_from(&lower);
        let Some(delta) = jac.lu().solve(&f) else {
            return Ok(None);
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        x.iter_mut().zip(delta.iter()).for_each(|(u, d)| *u -= d);
        y.iter_mut().zip(delta.iter().skip(m)).for_each(|(u, d)| *u -= d);
    }
    let pair = StrategyPair::new(Distribution::new(softmax(&x))?, Distribution::new(softmax(&y))?);
    let ok = qre_gap(game, &pair, tau)? <= tol && qre_residual(game, &pair, tau) <= residual_tol;
    Ok(ok.then_some(pair))
}
