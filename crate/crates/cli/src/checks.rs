//! The certification suite behind `polgrad check`.
//!
//! Every criterion runs against exact oracles, records the numbers it
//! measured, and passes only if each requirement holds and it finished
//! inside its time limit. Failures are report entries, never panics.

use std::fmt::Write as _;
use std::time::Instant;

use polgrad_core::lqr::{
    backtrack_pg_rate, check_gradient_dominance_with, default_pg_rate, evaluate_gain, lqr_optimum, lqr_step,
    npg_contraction, pg_contraction, run_lqr, solve_dare, GainMatrix, LqrProblem, LqrStepKind,
};
use polgrad_core::markov_game::{
    soft_minimax_oracle, ActorCriticConfig, ActorCriticState, AlphaSchedule, InnerSolver, ZeroSumMarkovGame,
};
use polgrad_core::matrix_game::{
    mwu_step, qre_gap, reg_mwu_step, solve_qre, MatrixGame, OmwuState, StrategyPair,
};
use polgrad_core::mdp::{SoftmaxParams, StochasticPolicy};
use polgrad_core::numeric::{
    entropy, kl_divergence, project_to_simplex, softmax, solve_discrete_lyapunov, solve_linear, spectral_norm,
    spectral_radius, LyapunovMode,
};
use polgrad_core::pg::{
    entropy_npg_sup_bound, mismatch_coefficient, npg_bound, projected_pg_bound, projected_pg_rate,
    run_single_agent, softmax_gradient, PgConfig, PgInit, PgMethod,
};
use polgrad_core::random::{
    random_distribution, random_lqr, random_markov_game, random_matrix_game, random_mdp, random_stable_gain,
    seeded, InstanceRng,
};
use polgrad_core::{Distribution, Mat, Vector};
use rand::Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Family, ProblemSource, RandomSpec, StartPair};
use crate::presets::{run_preset, BANDIT_REWARDS, BANDIT_TAU, RPS_START};
use crate::rate_fit::fit_rate;
use crate::runner::execute;
use crate::trace::Trace;
use crate::{CliError, CliResult};

pub const SUITES: [&str; 8] = [
    "all",
    "core_numeric",
    "tabular_mdp",
    "pg_single_agent",
    "matrix_game",
    "markov_game",
    "lqr",
    "experiment_cli",
];

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub criterion: &'static str,
    pub suite: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub limit_seconds: f64,
    pub measured: Vec<Measurement>,
    pub failures: Vec<String>,
}

impl CheckResult {
    /// `criterion=1 suite=tabular_mdp status=pass seconds=0.120 limit=5 key=value ... title="..."`
    pub fn line(&self) -> String {
        let mut out = format!(
            "criterion={} suite={} status={} seconds={:.3} limit={}",
            self.criterion,
            self.suite,
            if self.passed { "pass" } else { "fail" },
            self.seconds,
            self.limit_seconds
        );
        for m in &self.measured {
            let _ = write!(out, " {}={:e}", m.name, m.value);
        }
        let _ = write!(out, " title={:?}", self.title);
        if !self.failures.is_empty() {
            let _ = write!(out, " detail={:?}", self.failures.join("; "));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub results: Vec<CheckResult>,
}

impl Report {
    pub fn lines(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&r.line());
            out.push('\n');
        }
        let failed = self.results.iter().filter(|r| !r.passed).count();
        let _ = writeln!(
            out,
            "summary suite={} checks={} failed={} status={}",
            self.suite,
            self.results.len(),
            failed,
            if self.passed { "pass" } else { "fail" }
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Collects measurements and failed requirements for one criterion.
#[derive(Debug, Default)]
pub struct Measure {
    measured: Vec<Measurement>,
    failures: Vec<String>,
}

impl Measure {
    pub fn set(&mut self, name: &str, value: f64) {
        match self.measured.iter_mut().find(|m| m.name == name) {
            Some(m) => m.value = value,
            None => self.measured.push(Measurement {
                name: name.to_owned(),
                value,
            }),
        }
    }

    fn fold(&mut self, name: &str, value: f64, keep: fn(f64, f64) -> f64) {
        let current = self.measured.iter().find(|m| m.name == name).map(|m| m.value);
        self.set(name, current.map_or(value, |c| keep(c, value)));
    }

    /// Keeps the largest value seen under `name`.
    pub fn max(&mut self, name: &str, value: f64) {
        self.fold(name, value, f64::max);
    }

    pub fn min(&mut self, name: &str, value: f64) {
        self.fold(name, value, f64::min);
    }

    pub fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        // only the first few failures are kept; the report stays one line
        if !ok && self.failures.len() < 5 {
            self.failures.push(what());
        }
    }

    /// Checks that `p` is a probability vector and counts it.
    pub fn simplex(&mut self, p: &[f64], what: &str) {
        let sum: f64 = p.iter().sum();
        let violation = (sum - 1.0).abs().max(p.iter().fold(0.0, |w, x| w.max(-x)));
        self.max("max_simplex_violation", violation);
        self.fold("distributions_checked", 1.0, |a, b| a + b);
        self.require(violation <= 1e-12 && p.iter().all(|x| x.is_finite()), || {
            format!("{what} is off the simplex by {violation:e}")
        });
    }
}

struct Criterion {
    id: &'static str,
    suite: &'static str,
    title: &'static str,
    limit_seconds: f64,
    run: fn(&mut Measure) -> CliResult<()>,
}

const CRITERIA: [Criterion; 12] = [
    Criterion {
        id: "core_numeric",
        suite: "core_numeric",
        title: "numeric invariants on random inputs",
        limit_seconds: 5.0,
        run: core_numeric,
    },
    Criterion {
        id: "1",
        suite: "tabular_mdp",
        title: "softmax policy gradient vs central differences",
        limit_seconds: 5.0,
        run: gradient_check,
    },
    Criterion {
        id: "2",
        suite: "pg_single_agent",
        title: "projected PG monotone and within its sublinear bound",
        limit_seconds: 30.0,
        run: projected_pg,
    },
    Criterion {
        id: "3",
        suite: "pg_single_agent",
        title: "NPG gap within log A/(eta T) + 1/((1-gamma)^2 T)",
        limit_seconds: 30.0,
        run: npg,
    },
    Criterion {
        id: "4",
        suite: "pg_single_agent",
        title: "entropy-regularized NPG linear rate",
        limit_seconds: 30.0,
        run: entropy_npg,
    },
    Criterion {
        id: "5",
        suite: "pg_single_agent",
        title: "bandit: entropy NPG vs entropy PG",
        limit_seconds: 5.0,
        run: bandit_figure,
    },
    Criterion {
        id: "6",
        suite: "matrix_game",
        title: "MWU cycles on RPS, OMWU converges",
        limit_seconds: 10.0,
        run: cycling,
    },
    Criterion {
        id: "7",
        suite: "matrix_game",
        title: "entropy-regularized OMWU reaches the QRE linearly",
        limit_seconds: 20.0,
        run: regularized_omwu,
    },
    Criterion {
        id: "8",
        suite: "matrix_game",
        title: "regularized MWU with eta = tau/4 reaches the QRE",
        limit_seconds: 20.0,
        run: regularized_mwu,
    },
    Criterion {
        id: "9",
        suite: "markov_game",
        title: "Markov-game actor-critic reaches the regularized equilibrium",
        limit_seconds: 60.0,
        run: actor_critic,
    },
    Criterion {
        id: "10",
        suite: "lqr",
        title: "LQR: Riccati, gradient, dominance, NPG, Gauss-Newton, PG",
        limit_seconds: 60.0,
        run: lqr_suite,
    },
    Criterion {
        id: "11",
        suite: "experiment_cli",
        title: "simplex invariants and deterministic CLI output",
        limit_seconds: 10.0,
        run: structural,
    },
];

/// Ids of every criterion in `suite`, in run order.
pub fn criteria_in(suite: &str) -> CliResult<Vec<&'static str>> {
    if !SUITES.contains(&suite) {
        return Err(CliError::Config(format!("unknown suite {suite:?}; expected one of {SUITES:?}")));
    }
    Ok(CRITERIA
        .iter()
        .filter(|c| suite == "all" || c.suite == suite)
        .map(|c| c.id)
        .collect())
}

/// Runs a single criterion by id.
pub fn run_criterion(id: &str) -> CliResult<CheckResult> {
    let c = CRITERIA
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| CliError::Config(format!("unknown criterion {id:?}")))?;
    let mut m = Measure::default();
    let start = Instant::now();
    if let Err(e) = (c.run)(&mut m) {
        m.failures.push(format!("error: {e}"));
    }
    let seconds = start.elapsed().as_secs_f64();
    if seconds >= c.limit_seconds {
        m.failures
            .push(format!("took {seconds:.1} s, limit {} s", c.limit_seconds));
    }
    Ok(CheckResult {
        criterion: c.id,
        suite: c.suite,
        title: c.title,
        passed: m.failures.is_empty(),
        seconds,
        limit_seconds: c.limit_seconds,
        measured: m.measured,
        failures: m.failures,
    })
}

/// Runs `suite` sequentially, calling `each` after every criterion.
pub fn run_suite_with(suite: &str, mut each: impl FnMut(&CheckResult)) -> CliResult<Report> {
    let mut results = Vec::new();
    for id in criteria_in(suite)? {
        let r = run_criterion(id)?;
        log::info!("{}", r.line());
        each(&r);
        results.push(r);
    }
    Ok(Report {
        suite: suite.to_owned(),
        passed: results.iter().all(|r| r.passed),
        results,
    })
}

pub fn run_suite(suite: &str) -> CliResult<Report> {
    run_suite_with(suite, |_| {})
}

const FD_STEP: f64 = 1e-5;

fn central_difference(x: &Mat, f: impl Fn(&Mat) -> polgrad_core::Result<f64>) -> polgrad_core::Result<Mat> {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[(i, j)] += FD_STEP;
            down[(i, j)] -= FD_STEP;
            out[(i, j)] = (f(&up)? - f(&down)?) / (2.0 * FD_STEP);
        }
    }
    Ok(out)
}

fn relative_error(analytic: &Mat, numeric: &Mat) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(numeric.norm()).max(1e-12)
}

fn rows_on_simplex(m: &mut Measure, pi: &StochasticPolicy, what: &str) {
    for s in 0..pi.n_states() {
        m.simplex(pi.row(s).as_slice(), what);
    }
}

fn pair_on_simplex(m: &mut Measure, pair: &StrategyPair, what: &str) {
    m.simplex(pair.mu.as_slice(), what);
    m.simplex(pair.nu.as_slice(), what);
}

fn core_numeric(m: &mut Measure) -> CliResult<()> {
    let mut rng = seeded(100);
    for _ in 0..200 {
        let n = rng.random_range(1..8usize);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();

        // projection: p = max(v - theta, 0) for one threshold theta
        let p = project_to_simplex(&v)?;
        m.simplex(p.as_slice(), "projection");
        let support: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
        let theta = support.iter().map(|&i| v[i] - p[i]).sum::<f64>() / support.len() as f64;
        let kkt = (0..n)
            .map(|i| if p[i] > 0.0 { (v[i] - p[i] - theta).abs() } else { (v[i] - theta).max(0.0) })
            .fold(0.0, f64::max);
        m.max("max_projection_kkt", kkt);
        m.require(kkt <= 1e-12, || format!("projection KKT residual {kkt:e}"));

        let s = softmax(&v);
        m.simplex(&s, "softmax");
        let shifted: Vec<f64> = v.iter().map(|x| x + 7.5).collect();
        let shift = s
            .iter()
            .zip(softmax(&shifted))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        m.max("max_softmax_shift_change", shift);
        m.require(shift <= 1e-15, || format!("softmax shift changed output by {shift:e}"));

        let q = random_distribution(&mut rng, n);
        let d = Distribution::new(s)?;
        let kl = kl_divergence(&d, &q)?;
        let self_kl = kl_divergence(&d, &d)?;
        let h = entropy(&d);
        m.require(kl >= 0.0 && self_kl.abs() <= 1e-15, || format!("KL {kl} / self KL {self_kl}"));
        m.require(h >= 0.0 && h <= (n as f64).ln() + 1e-12, || format!("entropy {h} outside [0, log {n}]"));
    }
    for _ in 0..50 {
        let n = rng.random_range(1..6usize);
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) + Mat::identity(n, n) * 3.0;
        let b = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_linear(&a, &b)?;
        let residual = (&a * &x - &b).amax();
        m.max("max_linear_residual", residual);
        m.require(residual <= 1e-12, || format!("linear solve residual {residual:e}"));

        let raw = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let stable = &raw * (0.9 / spectral_radius(&raw)?.max(1e-3));
        let w = Mat::identity(n, n);
        let left = solve_discrete_lyapunov(&stable, &w, LyapunovMode::TransposeOnLeft)?;
        let right = solve_discrete_lyapunov(&stable, &w, LyapunovMode::TransposeOnRight)?;
        let r_left = (&left - stable.transpose() * &left * &stable - &w).amax() / left.amax();
        let r_right = (&right - &stable * &right * stable.transpose() - &w).amax() / right.amax();
        m.max("max_lyapunov_residual", r_left.max(r_right));
        m.require(r_left.max(r_right) <= 1e-12, || format!("Lyapunov residual {:e}", r_left.max(r_right)));
    }
    Ok(())
}

fn gradient_check(m: &mut Measure) -> CliResult<()> {
    let mut rng = seeded(101);
    for i in 0..20 {
        let gamma = [0.5, 0.9, 0.99][i % 3];
        let (n, a) = (2 + i % 5, 2 + i % 3);
        let mdp = random_mdp(&mut rng, n, a, gamma);
        let theta = SoftmaxParams::new(Mat::from_fn(n, a, |_, _| rng.random_range(-2.0..2.0)))?;
        let analytic = softmax_gradient(&mdp, &theta)?;
        let numeric = central_difference(theta.logits(), |x| {
            Ok(mdp.evaluate_policy(&SoftmaxParams::new(x.clone())?.policy())?.value_at_rho)
        })?;
        let err = relative_error(&analytic, &numeric);
        m.max("max_rel_err", err);
        m.require(err <= 1e-6, || format!("instance {i}: relative error {err:e}"));
    }
    Ok(())
}

fn projected_pg(m: &mut Measure) -> CliResult<()> {
    let mut rng = seeded(102);
    for i in 0..10 {
        let gamma = [0.5, 0.9][i % 2];
        let (n, a) = (2 + i % 4, 2 + i % 3);
        let mdp = random_mdp(&mut rng, n, a, gamma).with_rho(Distribution::uniform(n))?;
        let eta = projected_pg_rate(gamma, a);
        let run = run_single_agent(&mdp, &PgConfig::new(PgMethod::ProjectedPg, eta, 2000).with_policies(), PgInit::Uniform)?;
        let d_star = mdp.visitation_distribution(&run.reference_policy, mdp.rho())?;
        let mismatch = mismatch_coefficient(&d_star, mdp.rho());
        let initial_gap = run.records[0].gap_rho;
        for w in run.records.windows(2) {
            let drop = w[0].value_rho - w[1].value_rho;
            m.max("max_value_drop", drop);
            m.require(drop <= 1e-12, || format!("instance {i}: value fell by {drop:e} at step {}", w[1].iter));
        }
        let mut best = f64::INFINITY;
        for r in &run.records[1..] {
            best = best.min(r.gap_rho);
            let bound = projected_pg_bound(n, gamma, mismatch, initial_gap, eta, r.iter);
            m.max("max_best_gap_over_bound", best / bound);
            m.require(best <= bound, || format!("instance {i}: min gap {best:e} > bound {bound:e} at T={}", r.iter));
        }
        for r in &run.records {
            rows_on_simplex(m, r.policy.as_ref().expect("policies recorded"), "projected PG policy");
        }
    }
    Ok(())
}

fn npg(m: &mut Measure) -> CliResult<()> {
    let mut rng = seeded(103);
    for i in 0..10 {
        let gamma = [0.5, 0.9, 0.99][i % 3];
        let (n, a) = (2 + i % 5, 2 + i % 3);
        let mdp = random_mdp(&mut rng, n, a, gamma);
        for eta in [0.1, 1.0, 10.0] {
            let run = run_single_agent(&mdp, &PgConfig::new(PgMethod::Npg, eta, 1000), PgInit::Uniform)?;
            for r in &run.records[1..] {
                let bound = npg_bound(a, gamma, eta, r.iter);
                m.max("max_gap_over_bound", r.gap_sup / bound);
                m.require(r.gap_sup <= bound, || {
                    format!("instance {i}, eta {eta}: gap {:e} > bound {bound:e} at T={}", r.gap_sup, r.iter)
                });
            }
            rows_on_simplex(m, &run.final_policy, "NPG policy");
        }
    }
    Ok(())
}

fn entropy_npg(m: &mut Measure) -> CliResult<()> {
    let (gamma, tau) = (0.9, 0.1);
    let eta = 0.5 * (1.0 - gamma) / tau;
    let predicted = 1.0 - eta * tau;
    let mut rng = seeded(104);
    for i in 0..5 {
        let (n, a) = (2 + i % 4, 2 + i % 3);
        let mdp = random_mdp(&mut rng, n, a, gamma);
        let config = PgConfig::new(PgMethod::EntropyNpg, eta, 400).with_tau(tau);
        let run = run_single_agent(&mdp, &config, PgInit::Uniform)?;
        for r in &run.records {
            let bound = entropy_npg_sup_bound(a, gamma, eta, tau, r.iter);
            m.max("max_gap_over_bound", r.gap_sup / bound);
            m.require(r.gap_sup <= bound, || {
                format!("instance {i}: soft gap {:e} > bound {bound:e} at T={}", r.gap_sup, r.iter)
            });
        }
        // fit above the rounding floor of the reference
        let iters: Vec<f64> = run.records.iter().map(|r| r.iter as f64).collect();
        let gaps: Vec<f64> = run.records.iter().map(|r| r.gap_sup).collect();
        let end = run.records.iter().rposition(|r| r.gap_sup >= 1e-10).unwrap_or(0);
        let from = 5.0;
        m.require(end >= 15, || format!("instance {i}: only {end} iterations above the floor"));
        if end >= 15 {
            let fit = fit_rate(&iters, &gaps, from, iters[end])?;
            m.max("max_fit_factor", fit.factor);
            m.require(fit.factor <= predicted + 0.02, || {
                format!("instance {i}: fitted factor {} > {}", fit.factor, predicted + 0.02)
            });
        }
        rows_on_simplex(m, &run.final_policy, "entropy NPG policy");
    }
    m.set("predicted_factor", predicted);
    Ok(())
}

fn column(trace: &Trace, name: &str) -> CliResult<Vec<f64>> {
    trace
        .column(name)
        .ok_or_else(|| CliError::Trace(format!("trace has no column {name:?}")))
}

fn value_at(trace: &Trace, name: &str, iter: usize) -> CliResult<f64> {
    let iters = column(trace, "iter")?;
    let values = column(trace, name)?;
    iters
        .iter()
        .position(|t| *t == iter as f64)
        .map(|i| values[i])
        .ok_or_else(|| CliError::Trace(format!("iteration {iter} not recorded")))
}

fn first_iter_below(trace: &Trace, name: &str, level: f64) -> CliResult<Option<usize>> {
    let iters = column(trace, "iter")?;
    Ok(column(trace, name)?
        .iter()
        .position(|x| *x <= level)
        .map(|i| iters[i] as usize))
}

fn bandit_figure(m: &mut Measure) -> CliResult<()> {
    let configs = run_preset("fig1-bandit")?;
    let pg = execute(&configs[0])?;
    let npg = execute(&configs[1])?;

    // the soft-optimal bandit policy is softmax(r / tau)
    let weights: Vec<f64> = BANDIT_REWARDS.iter().map(|r| (r / BANDIT_TAU).exp()).collect();
    let total: f64 = weights.iter().sum();
    let uniform = 1.0 / BANDIT_REWARDS.len() as f64;
    let initial_tv = 0.5 * weights.iter().map(|w| (w / total - uniform).abs()).sum::<f64>();
    let recorded = value_at(&npg, "tv_opt", 0)?;
    m.require((recorded - initial_tv).abs() <= 1e-12, || {
        format!("reference policy: initial TV {recorded} vs softmax(r/tau) {initial_tv}")
    });

    match first_iter_below(&npg, "tv_opt", 1e-6)? {
        Some(t) => {
            m.set("npg_iters_to_tv_1e-6", t as f64);
            m.require(t <= 200, || format!("NPG needed {t} iterations"));
        }
        None => m.require(false, || "NPG never reached TV 1e-6 within 200 iterations".into()),
    }
    let (pg100, npg100) = (value_at(&pg, "tv_opt", 100)?, value_at(&npg, "tv_opt", 100)?);
    m.set("pg_tv_at_100", pg100);
    m.set("npg_tv_at_100", npg100);
    m.require(pg100 > npg100, || format!("PG error {pg100:e} does not exceed NPG error {npg100:e}"));
    Ok(())
}

fn cycling(m: &mut Measure) -> CliResult<()> {
    let mwu = execute(&run_preset("fig2-rps")?[0])?;
    let iters = column(&mwu, "iter")?;
    let gaps = column(&mwu, "ne_gap")?;
    let gap10 = value_at(&mwu, "ne_gap", 10)?;
    let late = iters
        .iter()
        .zip(&gaps)
        .filter(|(t, _)| (500.0..=1000.0).contains(*t))
        .map(|(_, g)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    m.set("mwu_gap_at_10", gap10);
    m.set("mwu_max_gap_500_1000", late);
    m.require(late >= gap10, || format!("MWU gap settled: {late:e} < {gap10:e}"));

    let omwu_config = ExperimentConfig {
        learning_rate: Some(1.0 / 8.0),
        start_pair: Some(StartPair {
            mu: RPS_START.to_vec(),
            nu: RPS_START.to_vec(),
        }),
        ..ExperimentConfig::new(Family::MatrixGame, ProblemSource::Preset("rps".into()), "omwu", 5000)
    };
    let omwu = execute(&omwu_config)?;
    let Some(hit) = first_iter_below(&omwu, "ne_gap", 1e-6)? else {
        m.require(false, || "OMWU never reached NE gap 1e-6 within 5000 iterations".into());
        return Ok(());
    };
    m.set("omwu_iters_to_gap_1e-6", hit as f64);
    let fit = fit_rate(&column(&omwu, "iter")?, &column(&omwu, "ne_gap")?, (hit / 2) as f64, hit as f64)?;
    m.set("omwu_tail_slope", fit.slope);
    m.require(fit.slope < 0.0, || format!("OMWU tail slope {} is not negative", fit.slope));
    Ok(())
}

/// Ten random games up to 5x5 plus rock-paper-scissors, each with its start.
fn game_battery(seed: u64) -> Vec<(String, MatrixGame, StrategyPair)> {
    let mut rng = seeded(seed);
    let mut games: Vec<_> = (0..10)
        .map(|i| {
            let (rows, cols) = (2 + i % 4, 2 + (3 * i + 1) % 4);
            (format!("random {i}"), random_matrix_game(&mut rng, rows, cols), StrategyPair::uniform(rows, cols))
        })
        .collect();
    // the uniform pair is already the RPS equilibrium
    let start = Distribution::new(vec![0.5, 0.3, 0.2]).expect("valid start");
    games.push((
        "rps".into(),
        MatrixGame::rock_paper_scissors(),
        StrategyPair::new(start.clone(), start),
    ));
    games
}

fn regularized_omwu(m: &mut Measure) -> CliResult<()> {
    for (label, game, start) in game_battery(107) {
        for tau in [0.05f64, 0.2] {
            let eta = (1.0 / (2.0 * tau + 2.0)).min(0.25);
            let reference = solve_qre(&game, tau, 1e-13)?;
            let eps0 = qre_gap(&game, &start, tau)?;
            let budget = ((eps0 / 1e-8).ln() / -(1.0 - eta * tau).ln()).ceil() as usize + 200;
            let mut state = OmwuState::from_pair(&start, eta, tau)?;
            let (mut iters, mut kls) = (Vec::new(), Vec::new());
            let mut hit = None;
            for t in 0..=budget {
                let pair = state.pair();
                pair_on_simplex(m, &pair, "OMWU iterate");
                iters.push(t as f64);
                kls.push(pair.kl_from(&reference)?);
                if qre_gap(&game, &pair, tau)? <= 1e-8 {
                    hit = Some(t);
                    break;
                }
                state.step(&game)?;
            }
            let Some(hit) = hit else {
                m.require(false, || format!("{label}, tau {tau}: QRE gap above 1e-8 after {budget} iterations"));
                continue;
            };
            m.max("max_iters_over_budget", hit as f64 / budget as f64);
            // KL contraction after a short burn-in, above its rounding floor
            let end = kls.iter().rposition(|k| *k >= 1e-13).unwrap_or(0);
            if end >= 30 {
                let fit = fit_rate(&iters, &kls, 20.0, iters[end])?;
                let allowed = 1.0 - eta * tau + 0.02;
                m.max("max_fit_factor_minus_allowed", fit.factor - allowed);
                m.require(fit.factor <= allowed, || {
                    format!("{label}, tau {tau}: fitted factor {} > {allowed}", fit.factor)
                });
            }
        }
    }
    Ok(())
}

fn regularized_mwu(m: &mut Measure) -> CliResult<()> {
    const CAP: usize = 2_000_000;
    for (label, game, start) in game_battery(107) {
        for tau in [0.05, 0.2] {
            let eta = tau / 4.0;
            let reference = solve_qre(&game, tau, 1e-13)?;
            let mut pair = start.clone();
            let mut reached = None;
            for t in 0..=CAP {
                if t % 50 == 0 && pair.max_tv(&reference) <= 1e-7 {
                    reached = Some(t);
                    break;
                }
                pair = reg_mwu_step(&game, &pair, eta, tau)?;
            }
            pair_on_simplex(m, &pair, "regularized MWU iterate");
            match reached {
                Some(t) => m.max("max_iters_to_tv_1e-7", t as f64),
                None => m.require(false, || format!("{label}, tau {tau}: TV above 1e-7 after {CAP} iterations")),
            }
        }
    }
    Ok(())
}

fn qre_distance(state: &ActorCriticState, v_star: &Vector, reference: &polgrad_core::markov_game::JointPolicy) -> CliResult<f64> {
    let value_error = (&state.v - v_star).amax();
    Ok(value_error.max(state.policy().max_kl_from(reference)?))
}

fn actor_critic(m: &mut Measure) -> CliResult<()> {
    let (gamma, tau, n_states) = (0.8, 0.1, 3);
    let mut rng = seeded(109);
    for g in 0..3 {
        let game = random_markov_game(&mut rng, n_states, 2, 2, gamma);
        let oracle = soft_minimax_oracle(&game, tau, 1e-12)?;
        for c in [0.25, 0.125, 0.0625] {
            let eta = c * (1.0 - gamma).powi(3) / n_states as f64;
            let config = ActorCriticConfig::regularized(eta, tau, 0);
            let mut state = ActorCriticState::new(&game, &config)?;
            let eps0 = qre_distance(&state, &oracle.v, &oracle.policy)?;
            // the value update contracts at 1 - (1 - gamma) eta tau
            let cap = (2.0 * (eps0 / 1e-4).ln() / ((1.0 - gamma) * eta * tau)).ceil() as usize;
            let (mut iters, mut gaps) = (Vec::new(), Vec::new());
            let mut hit = None;
            for t in 0..=cap {
                if t % 1000 == 0 {
                    let gap = qre_distance(&state, &oracle.v, &oracle.policy)?;
                    iters.push(t as f64);
                    gaps.push(gap);
                    if gap <= 1e-4 {
                        hit = Some(t);
                        break;
                    }
                }
                state.step(&game)?;
            }
            let policy = state.policy();
            for s in 0..n_states {
                pair_on_simplex(m, &policy.pair(s), "actor-critic policy");
            }
            let Some(hit) = hit else {
                m.require(false, || format!("game {g}, c {c}: QRE gap above 1e-4 after {cap} iterations"));
                continue;
            };
            m.max("max_iters_to_1e-4", hit as f64);
            let fit = fit_rate(&iters, &gaps, (hit / 2) as f64, hit as f64)?;
            let allowed = 1.0 - eta * tau + 0.02;
            m.max("max_fit_factor", fit.factor);
            m.min("min_decay_over_(1-gamma)eta_tau", -fit.slope / ((1.0 - gamma) * eta * tau));
            m.require(fit.factor <= allowed && fit.slope < 0.0, || {
                format!("game {g}, c {c}: fitted factor {} vs allowed {allowed}", fit.factor)
            });
        }
    }

    // one state, gamma = 0: the value learner feeds OMWU the stage payoff
    let rps = MatrixGame::rock_paper_scissors();
    let payoff = rps.payoff().map(|x| (x + 1.0) / 2.0);
    let single = ZeroSumMarkovGame::single_state(&payoff, 0.0)?;
    let (eta, tau) = (0.2, 0.1);
    let mut state = ActorCriticState::new(&single, &ActorCriticConfig::regularized(eta, tau, 0))?;
    let mut direct = OmwuState::new(3, 3, eta, tau)?;
    let mut q = Mat::zeros(3, 3);
    let mut mismatches = 0;
    for _ in 0..200 {
        state.step(&single)?;
        direct.step_payoff(&q)?;
        q = payoff.clone();
        if state.policy().pair(0) != direct.pair() {
            mismatches += 1;
        }
    }
    m.set("one_state_mismatches", mismatches as f64);
    m.require(mismatches == 0, || format!("one-state reduction differs at {mismatches} steps"));
    Ok(())
}

fn scalar_lqr() -> polgrad_core::Result<LqrProblem> {
    let one = Mat::from_element(1, 1, 1.0);
    LqrProblem::new(one.clone(), one.clone(), one.clone(), one.clone(), one)
}

fn lqr_suite(m: &mut Measure) -> CliResult<()> {
    // (a) scalar Riccati
    let (p, k) = solve_dare(&scalar_lqr()?, 1e-14)?;
    let root5 = 5f64.sqrt();
    let (p_err, k_err) = ((p[(0, 0)] - (1.0 + root5) / 2.0).abs(), (k[(0, 0)] - (root5 - 1.0) / 2.0).abs());
    m.set("scalar_p_err", p_err);
    m.set("scalar_k_err", k_err);
    m.require(p_err <= 1e-9 && k_err <= 1e-9, || format!("scalar DARE off by {p_err:e}, {k_err:e}"));

    let mut rng = seeded(110);
    let instance = |i: usize, rng: &mut InstanceRng, scale: f64, radius: f64| -> CliResult<_> {
        let prob = random_lqr(rng, 1 + i % 4, 1 + i % 2);
        let opt = lqr_optimum(&prob)?;
        let k0 = random_stable_gain(rng, &prob, &opt.k, scale, radius);
        Ok((prob, opt, k0))
    };

    // (b) gradient vs finite differences
    for i in 0..20 {
        let (prob, _, k0) = instance(i, &mut rng, 0.3, 0.95)?;
        let analytic = evaluate_gain(&prob, &k0)?.gradient;
        let numeric = central_difference(&k0, |x| Ok(evaluate_gain(&prob, x)?.cost))?;
        let err = relative_error(&analytic, &numeric);
        m.max("max_grad_rel_err", err);
        m.require(err <= 1e-6, || format!("LQR instance {i}: gradient relative error {err:e}"));
    }

    // (c) gradient dominance
    for i in 0..10 {
        let (prob, opt, _) = instance(i, &mut rng, 1.0, 0.99)?;
        for _ in 0..10 {
            let k = random_stable_gain(&mut rng, &prob, &opt.k, 1.0, 0.99);
            let check = check_gradient_dominance_with(&prob, &k, &opt)?;
            m.max("max_dominance_lhs_over_rhs", check.lhs / check.rhs);
            m.require(check.holds, || format!("dominance fails: {} > {}", check.lhs, check.rhs));
        }
    }

    // (d) NPG at 1 / (||R|| + ||B||^2 C(K0) / lambda), two instances per dimension
    for i in 0..8 {
        let (prob, opt, k0) = instance(i, &mut rng, 0.5, 0.95)?;
        let d = prob.state_dim();
        let c0 = evaluate_gain(&prob, &k0)?.cost;
        let eta = 1.0 / (spectral_norm(prob.r()) + spectral_norm(prob.b()).powi(2) * c0 / prob.lambda());
        let rate = npg_contraction(&prob, &opt, eta);
        let mut k = k0;
        let mut gap = c0 - opt.cost;
        let mut violations = 0;
        for t in 0..100 {
            let next = lqr_step(&prob, &k, eta, LqrStepKind::Npg)?;
            m.require(next.is_stable(), || format!("NPG iterate {t} unstable"));
            let next_gap = evaluate_gain(&prob, &next.k)?.cost - opt.cost;
            m.max(&format!("max_npg_ratio_over_rate_d{d}"), next_gap / (rate * gap).max(f64::MIN_POSITIVE));
            if next_gap > rate * gap + 1e-12 * opt.cost {
                violations += 1;
                if violations == 1 {
                    m.require(false, || {
                        format!("NPG instance {i} (d={d}) step {t}: {next_gap:e} > {rate} * {gap:e}")
                    });
                }
            }
            k = next.k;
            gap = next_gap;
        }
        m.max(&format!("npg_violating_steps_d{d}"), violations as f64);
    }

    // (e) Gauss-Newton with unit step
    for d in 1..=4 {
        let prob = random_lqr(&mut rng, d, 1 + d % 2);
        let opt = lqr_optimum(&prob)?;
        let k0 = random_stable_gain(&mut rng, &prob, &opt.k, 0.5, 0.98);
        let trace = run_lqr(&prob, &k0, 1.0, LqrStepKind::GaussNewton, 30)?;
        match trace.iter().position(|(_, c)| c - opt.cost <= 1e-10) {
            Some(t) => m.max("max_gauss_newton_iters", t as f64),
            None => m.require(false, || format!("Gauss-Newton on d={d} above 1e-10 after 30 steps")),
        }
    }

    // (f) PG with a backtracked constant step, re-run and checked
    for i in 0..5 {
        let (prob, opt, k0) = instance(i, &mut rng, 0.5, 0.95)?;
        let eta = backtrack_pg_rate(&prob, &k0, default_pg_rate(&prob, &k0)?, LqrStepKind::Pg, 200)?;
        let rate = pg_contraction(&prob, &opt, eta);
        let trace = run_lqr(&prob, &k0, eta, LqrStepKind::Pg, 200)?;
        for (t, w) in trace.windows(2).enumerate() {
            let (before, after) = (w[0].1 - opt.cost, w[1].1 - opt.cost);
            m.require(GainMatrix::new(&prob, w[1].0.clone())?.is_stable(), || format!("PG iterate {t} unstable"));
            m.max("max_pg_ratio_over_rate", after / (rate * before).max(f64::MIN_POSITIVE));
            m.require(after <= rate * before + 1e-12 * opt.cost, || {
                format!("PG instance {i} step {t}: {after:e} > {rate} * {before:e}")
            });
        }
    }
    Ok(())
}

fn structural(m: &mut Measure) -> CliResult<()> {
    let mut rng = seeded(111);

    let mdp = random_mdp(&mut rng, 4, 3, 0.9);
    let rates = [
        (PgMethod::ProjectedPg, projected_pg_rate(0.9, 3), 0.0),
        (PgMethod::SoftmaxPg, 1e-4, 0.0),
        (PgMethod::LogBarrierPg, 1.0, 0.0),
        (PgMethod::Npg, 1.0, 0.0),
        (PgMethod::EntropyNpg, 1.0, 0.1),
        (PgMethod::EntropyPg, 1.0, 0.1),
    ];
    for (method, eta, tau) in rates {
        let mut config = PgConfig::new(method, eta, 50).with_tau(tau).with_policies();
        if method == PgMethod::LogBarrierPg {
            config = config.with_omega(0.01);
        }
        let run = run_single_agent(&mdp, &config, PgInit::Uniform)?;
        for r in &run.records {
            rows_on_simplex(m, r.policy.as_ref().expect("policies recorded"), method.name());
        }
    }

    let game = random_matrix_game(&mut rng, 4, 3);
    let mut pair = StrategyPair::uniform(4, 3);
    let mut omwu = OmwuState::new(4, 3, 0.1, 0.0)?;
    for _ in 0..200 {
        pair = mwu_step(&game, &pair, 0.1)?;
        omwu.step(&game)?;
        pair_on_simplex(m, &pair, "MWU iterate");
        pair_on_simplex(m, &omwu.pair(), "OMWU iterate");
        pair_on_simplex(m, &omwu.predictive(), "OMWU prediction");
    }

    let markov = random_markov_game(&mut rng, 3, 2, 3, 0.7);
    for inner in [InnerSolver::Omwu, InnerSolver::RegOmwu, InnerSolver::ExactQre] {
        let config = ActorCriticConfig {
            inner,
            alpha: AlphaSchedule::Decaying,
            ..ActorCriticConfig::regularized(0.05, if inner == InnerSolver::Omwu { 0.0 } else { 0.1 }, 0)
        };
        let mut state = ActorCriticState::new(&markov, &config)?;
        for _ in 0..100 {
            state.step(&markov)?;
            let policy = state.policy();
            for s in 0..3 {
                pair_on_simplex(m, &policy.pair(s), inner.name());
            }
        }
    }

    // identical configs give byte-identical files
    let random = |seed| ProblemSource::Random(RandomSpec { seed, ..RandomSpec::default() });
    let configs = [
        ExperimentConfig {
            learning_rate: Some(1.0),
            ..ExperimentConfig::new(Family::Mdp, random(5), "npg", 30)
        },
        ExperimentConfig {
            tau: 0.1,
            ..ExperimentConfig::new(Family::MatrixGame, random(6), "omwu", 100)
        },
        ExperimentConfig {
            tau: 0.1,
            record_every: 10,
            ..ExperimentConfig::new(Family::MarkovGame, random(7), "reg_omwu", 100)
        },
        ExperimentConfig::new(Family::Lqr, random(8), "npg", 30),
    ];
    let dir = std::env::temp_dir().join(format!("polgrad-check-{}", std::process::id()));
    let mut identical = 0;
    for (i, config) in configs.iter().enumerate() {
        let mut bytes = Vec::new();
        for copy in 0..2 {
            let path = dir.join(format!("{i}-{copy}.csv"));
            let trace = execute(config)?;
            trace.write(&path)?;
            bytes.push(std::fs::read(&path).map_err(|source| CliError::Io { path, source })?);
            for player in ["mu_", "nu_"] {
                let cols: Vec<usize> = (0..trace.columns.len())
                    .filter(|&c| trace.columns[c].starts_with(player))
                    .collect();
                if cols.is_empty() {
                    continue;
                }
                for row in &trace.rows {
                    let p: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
                    m.simplex(&p, "recorded strategy");
                }
            }
        }
        let same = bytes[0] == bytes[1] && !bytes[0].is_empty();
        identical += usize::from(same);
        m.require(same, || format!("{} run is not reproducible", config.label()));
    }
    let _ = std::fs::remove_dir_all(&dir);
    m.set("deterministic_runs", identical as f64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_select_criteria() {
        assert_eq!(criteria_in("all").unwrap().len(), 12);
        assert_eq!(criteria_in("matrix_game").unwrap(), ["6", "7", "8"]);
        assert!(criteria_in("nope").is_err());
    }

    #[test]
    fn measure_keeps_extremes() {
        let mut m = Measure::default();
        m.max("x", 1.0);
        m.max("x", 3.0);
        m.max("x", 2.0);
        m.min("y", 2.0);
        m.min("y", -1.0);
        m.simplex(&[0.5, 0.6], "p");
        assert_eq!(m.measured[0].value, 3.0);
        assert_eq!(m.measured[1].value, -1.0);
        assert_eq!(m.failures.len(), 1);
    }

    #[test]
    fn core_numeric_passes() {
        let r = run_criterion("core_numeric").unwrap();
        assert!(r.passed, "{}", r.line());
        assert!(r.line().starts_with("criterion=core_numeric suite=core_numeric status=pass"));
    }
}
