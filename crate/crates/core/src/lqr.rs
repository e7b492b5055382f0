//! Linear quadratic regulator with linear state feedback `u = -K x`:
//! exact cost and gradient through Lyapunov solves, PG / NPG / Gauss-Newton
//! steps and the Riccati reference.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::numeric::{
    is_symmetric_positive_definite, max_abs, sigma_min, solve_discrete_lyapunov, spectral_norm,
    spectral_radius, LyapunovMode, Mat,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    a: Mat,
    b: Mat,
    q: Mat,
    r: Mat,
    sigma0: Mat,
    lambda: f64,
}

impl LqrProblem {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat, sigma0: Mat) -> Result<Self> {
        let d = a.nrows();
        let k = b.ncols();
        if d == 0 || k == 0 {
            return Err(Error::Dimension("empty system".into()));
        }
        if a.shape() != (d, d) || b.nrows() != d || q.shape() != (d, d) || r.shape() != (k, k) || sigma0.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "shapes A {:?}, B {:?}, Q {:?}, R {:?}, Sigma0 {:?} are inconsistent",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape(),
                sigma0.shape()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("Q", &q), ("R", &r), ("Sigma0", &sigma0)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
        }
        if !is_symmetric_positive_definite(&q) {
            return Err(Error::Domain("Q must be symmetric positive definite".into()));
        }
        if !is_symmetric_positive_definite(&r) {
            return Err(Error::Domain("R must be symmetric positive definite".into()));
        }
        if !is_symmetric_positive_definite(&sigma0) {
            return Err(Error::Domain(
                "Sigma0 must be symmetric with sigma_min(Sigma0) > 0".into(),
            ));
        }
        let lambda = sigma_min(&sigma0);
        Ok(Self { a, b, q, r, sigma0, lambda })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn sigma0(&self) -> &Mat {
        &self.sigma0
    }

    /// `sigma_min(Sigma0)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A - B K`.
    pub fn closed_loop(&self, k: &Mat) -> Result<Mat> {
        if k.shape() != (self.input_dim(), self.state_dim()) {
            return Err(Error::Dimension(format!(
                "gain is {:?}, expected {}x{}",
                k.shape(),
                self.input_dim(),
                self.state_dim()
            )));
        }
        Ok(&self.a - &self.b * k)
    }
}

/// A feedback gain together with its stability certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub k: Mat,
    pub closed_loop: Mat,
    /// Spectral radius of `A - B K`; below one means the cost is finite.
    pub spectral_radius: f64,
    /// `||A - B K||_2`, the quantity in the norm-ball feasible set.
    pub spectral_norm: f64,
}

impl GainMatrix {
    pub fn new(prob: &LqrProblem, k: Mat) -> Result<Self> {
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("gain has non-finite entries".into()));
        }
        let closed_loop = prob.closed_loop(&k)?;
        Ok(Self {
            spectral_radius: spectral_radius(&closed_loop)?,
            spectral_norm: spectral_norm(&closed_loop),
            closed_loop,
            k,
        })
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius < 1.0
    }

    /// Membership in `{K : ||A - B K||_2 < 1}`.
    pub fn in_norm_ball(&self) -> bool {
        self.spectral_norm < 1.0
    }
}

#[derive(Debug, Clone)]
pub struct LqrEvaluation {
    pub p: Mat,
    pub sigma: Mat,
    pub cost: f64,
    pub gradient: Mat,
}

/// `P_K`, `Sigma_K`, `C(K) = tr(P_K Sigma0)` and
/// `grad C(K) = 2 ((R + B^T P_K B) K - B^T P_K A) Sigma_K`.
pub fn evaluate_gain(prob: &LqrProblem, k: &Mat) -> Result<LqrEvaluation> {
    let m = prob.closed_loop(k)?;
    let w = &prob.q + k.transpose() * &prob.r * k;
    let p = solve_discrete_lyapunov(&m, &w, LyapunovMode::TransposeOnLeft)?;
    let sigma = solve_discrete_lyapunov(&m, &prob.sigma0, LyapunovMode::TransposeOnRight)?;
    let cost = (&p * &prob.sigma0).trace();
    let gradient = natural_direction(prob, &p, k) * &sigma * 2.0;
    Ok(LqrEvaluation { p, sigma, cost, gradient })
}

/// `E_K = (R + B^T P B) K - B^T P A`.
fn natural_direction(prob: &LqrProblem, p: &Mat, k: &Mat) -> Mat {
    let bt_p = prob.b.transpose() * p;
    (&prob.r + &bt_p * &prob.b) * k - bt_p * &prob.a
}

/// `R + B^T P B`.
pub fn input_curvature(prob: &LqrProblem, p: &Mat) -> Mat {
    &prob.r + prob.b.transpose() * p * &prob.b
}

fn spd_solve(m: &Mat, rhs: &Mat, what: &str) -> Result<Mat> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))?;
    Ok(chol.solve(rhs))
}

/// `G Sigma^{-1}` for symmetric positive definite `Sigma`.
fn right_solve_spd(g: &Mat, sigma: &Mat) -> Result<Mat> {
    Ok(spd_solve(sigma, &g.transpose(), "Sigma_K")?.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LqrStepKind {
    /// `K - eta grad C(K)`.
    Pg,
    /// `K - eta grad C(K) Sigma_K^{-1}`.
    Npg,
    /// `K - eta (R + B^T P_K B)^{-1} grad C(K) Sigma_K^{-1} / 2`; with
    /// `eta = 1` this is the policy-improvement map
    /// `K' = (R + B^T P_K B)^{-1} B^T P_K A`.
    GaussNewton,
}

impl LqrStepKind {
    pub fn name(self) -> &'static str {
        match self {
            LqrStepKind::Pg => "pg",
            LqrStepKind::Npg => "npg",
            LqrStepKind::GaussNewton => "gauss_newton",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [LqrStepKind::Pg, LqrStepKind::Npg, LqrStepKind::GaussNewton]
            .into_iter()
            .find(|k| k.name() == name)
    }
}

/// Direction subtracted (times `eta`) by a step of the given kind.
pub fn step_direction(prob: &LqrProblem, k: &Mat, eval: &LqrEvaluation, kind: LqrStepKind) -> Result<Mat> {
    match kind {
        LqrStepKind::Pg => Ok(eval.gradient.clone()),
        LqrStepKind::Npg => right_solve_spd(&eval.gradient, &eval.sigma),
        LqrStepKind::GaussNewton => {
            let e = natural_direction(prob, &eval.p, k);
            spd_solve(&input_curvature(prob, &eval.p), &e, "R + B^T P_K B")
        }
    }
}

/// One step from a stable `k`. A step that leaves the stable set is an
/// error, never a gain.
pub fn lqr_step(prob: &LqrProblem, k: &Mat, eta: f64, kind: LqrStepKind) -> Result<GainMatrix> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("learning rate {eta} must be nonnegative")));
    }
    let eval = evaluate_gain(prob, k)?;
    if kind == LqrStepKind::Npg {
        let limit = 1.0 / spectral_norm(&input_curvature(prob, &eval.p));
        if eta > limit {
            log::warn!("NPG step {eta} exceeds 1/||R + B^T P_K B|| = {limit}");
        }
    }
    let next = k - step_direction(prob, k, &eval, kind)? * eta;
    let gain = GainMatrix::new(prob, next)?;
    if !gain.is_stable() {
        return Err(Error::Unstable {
            radius: gain.spectral_radius,
        });
    }
    Ok(gain)
}

#[derive(Debug, Clone)]
pub struct LqrOptimum {
    pub p: Mat,
    pub k: Mat,
    pub cost: f64,
    /// `||Sigma_{K*}||_2`.
    pub sigma_norm: f64,
}

/// Riccati fixed-point iteration
/// `P <- Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A`
/// until the largest entry change is at most `tol (1 + max|P|)`, followed by
/// policy-iteration polishing.
pub fn solve_dare(prob: &LqrProblem, tol: f64) -> Result<(Mat, Mat)> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    let (a, b) = (&prob.a, &prob.b);
    let gain_of = |p: &Mat| -> Result<Mat> {
        spd_solve(&input_curvature(prob, p), &(b.transpose() * p * a), "R + B^T P B")
    };
    let mut p = prob.q.clone();
    let mut converged = false;
    for _ in 0..1_000_000 {
        let k = gain_of(&p)?;
        let next = &prob.q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
        let next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|x| !x.is_finite()) || max_abs(&next) > 1e15 {
            return Err(Error::NotStabilizable);
        }
        let change = max_abs(&(&next - &p));
        p = next;
        if change <= tol * (1.0 + max_abs(&p)) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotStabilizable);
    }
    let mut k = gain_of(&p)?;
    if spectral_radius(&prob.closed_loop(&k)?)? >= 1.0 {
        return Err(Error::NotStabilizable);
    }
    // policy iteration from a stabilizing gain converges quadratically
    for _ in 0..50 {
        let eval = evaluate_gain(prob, &k)?;
        let next = gain_of(&eval.p)?;
        let change = max_abs(&(&next - &k));
        if spectral_radius(&prob.closed_loop(&next)?)? >= 1.0 {
            break;
        }
        k = next;
        if change <= 1e-15 * (1.0 + max_abs(&k)) {
            break;
        }
    }
    Ok((evaluate_gain(prob, &k)?.p, k))
}

pub fn lqr_optimum(prob: &LqrProblem) -> Result<LqrOptimum> {
    let (p, k) = solve_dare(prob, 1e-14)?;
    let eval = evaluate_gain(prob, &k)?;
    Ok(LqrOptimum {
        p,
        k,
        cost: eval.cost,
        sigma_norm: spectral_norm(&eval.sigma),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `C(K) - C(K*) <= ||Sigma_{K*}||_2 / (lambda^2 sigma_min(R)) ||grad C(K)||_F^2`.
pub fn check_gradient_dominance(prob: &LqrProblem, k: &Mat) -> Result<DominanceCheck> {
    check_gradient_dominance_with(prob, k, &lqr_optimum(prob)?)
}

pub fn check_gradient_dominance_with(prob: &LqrProblem, k: &Mat, opt: &LqrOptimum) -> Result<DominanceCheck> {
    let eval = evaluate_gain(prob, k)?;
    let lhs = eval.cost - opt.cost;
    let rhs = opt.sigma_norm / (prob.lambda.powi(2) * sigma_min(&prob.r)) * eval.gradient.norm_squared();
    Ok(DominanceCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}

/// PG per-step contraction `1 - lambda^2 sigma_min(R) eta / ||Sigma_{K*}||_2`.
pub fn pg_contraction(prob: &LqrProblem, opt: &LqrOptimum, eta: f64) -> f64 {
    1.0 - prob.lambda.powi(2) * sigma_min(&prob.r) * eta / opt.sigma_norm
}

/// NPG per-step contraction `1 - lambda sigma_min(R) eta / ||Sigma_{K*}||_2`.
pub fn npg_contraction(prob: &LqrProblem, opt: &LqrOptimum, eta: f64) -> f64 {
    1.0 - prob.lambda * sigma_min(&prob.r) * eta / opt.sigma_norm
}

/// `1 / (||R||_2 + ||B||_2^2 C(K0) / lambda)`, valid along the whole NPG path.
pub fn npg_safe_rate(prob: &LqrProblem, k0: &Mat) -> Result<f64> {
    let c0 = evaluate_gain(prob, k0)?.cost;
    Ok(1.0 / (spectral_norm(&prob.r) + spectral_norm(&prob.b).powi(2) * c0 / prob.lambda))
}

/// Conservative PG step
/// `lambda sigma_min(Q) / (2 C(K0) ||B|| (||A - B K0|| + 1) ||R + B^T P_K0 B||)`.
pub fn default_pg_rate(prob: &LqrProblem, k0: &Mat) -> Result<f64> {
    let eval = evaluate_gain(prob, k0)?;
    let m = prob.closed_loop(k0)?;
    Ok(0.5 * prob.lambda * sigma_min(&prob.q)
        / (eval.cost
            * spectral_norm(&prob.b)
            * (spectral_norm(&m) + 1.0)
            * spectral_norm(&input_curvature(prob, &eval.p))))
}

/// Costs along `iters` fixed-step iterations from `k0` (including `k0`).
pub fn run_lqr(prob: &LqrProblem, k0: &Mat, eta: f64, kind: LqrStepKind, iters: usize) -> Result<Vec<(Mat, f64)>> {
    let mut k = k0.clone();
    let mut out = vec![(k.clone(), evaluate_gain(prob, &k)?.cost)];
    for _ in 0..iters {
        k = lqr_step(prob, &k, eta, kind)?.k;
        out.push((k.clone(), evaluate_gain(prob, &k)?.cost));
    }
    Ok(out)
}

/// Largest `eta0 / 2^j` for which `iters` fixed steps stay stable and never
/// increase the cost. Only a device for picking a constant step; the run
/// that is checked afterwards uses the returned step unchanged.
pub fn backtrack_pg_rate(prob: &LqrProblem, k0: &Mat, eta0: f64, kind: LqrStepKind, iters: usize) -> Result<f64> {
    let mut eta = eta0;
    for _ in 0..60 {
        let ok = match run_lqr(prob, k0, eta, kind, iters) {
            Ok(trace) => trace.windows(2).all(|w| w[1].1 <= w[0].1),
            Err(Error::Unstable { .. }) => false,
            Err(e) => return Err(e),
        };
        if ok {
            return Ok(eta);
        }
        eta *= 0.5;
    }
    Err(Error::Convergence {
        iterations: 60,
        residual: eta,
    })
}
