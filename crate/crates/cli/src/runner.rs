//! Turning an [`ExperimentConfig`] into a [`Trace`].

use std::path::PathBuf;

use polgrad_core::lqr::{
    default_pg_rate, evaluate_gain, lqr_optimum, lqr_step, npg_safe_rate, GainMatrix, LqrProblem, LqrStepKind,
};
use polgrad_core::markov_game::{
    actor_critic_run, ActorCriticConfig, AlphaSchedule, InnerSolver, ZeroSumMarkovGame,
};
use polgrad_core::matrix_game::{
    mwu_step, ne_gap, qre_gap, qre_learning_rate, reg_mwu_step, MatrixGame, OmwuState, StrategyPair,
};
use polgrad_core::mdp::{StochasticPolicy, TabularMdp};
use polgrad_core::pg::{run_single_agent, PgConfig, PgInit, PgMethod};
use polgrad_core::random::{
    random_lqr, random_markov_game, random_matrix_game, random_mdp, random_stable_gain, seeded,
};
use polgrad_core::{Distribution, Mat};

use crate::config::{ExperimentConfig, Family, ProblemSource, RandomSpec};
use crate::presets::{lqr_preset, matrix_game_preset, mdp_preset};
use crate::problem::{matrix, read_json, LqrFile, MarkovGameFile, MatrixGameFile, MdpFile};
use crate::trace::Trace;
use crate::{invalid, CliError, CliResult};

#[derive(Debug, Clone)]
pub enum Problem {
    Mdp(TabularMdp),
    MatrixGame(MatrixGame),
    MarkovGame(ZeroSumMarkovGame),
    Lqr(LqrProblem),
}

pub fn load_problem(config: &ExperimentConfig) -> CliResult<Problem> {
    match &config.problem {
        ProblemSource::File(path) => Ok(match config.family {
            Family::Mdp => Problem::Mdp(read_json::<MdpFile>(path)?.build()?),
            Family::MatrixGame => Problem::MatrixGame(read_json::<MatrixGameFile>(path)?.build()?),
            Family::MarkovGame => Problem::MarkovGame(read_json::<MarkovGameFile>(path)?.build()?),
            Family::Lqr => Problem::Lqr(read_json::<LqrFile>(path)?.build()?),
        }),
        ProblemSource::Preset(name) => match config.family {
            Family::Mdp => Ok(Problem::Mdp(mdp_preset(name)?)),
            Family::MatrixGame => Ok(Problem::MatrixGame(matrix_game_preset(name)?)),
            Family::Lqr => Ok(Problem::Lqr(lqr_preset(name)?)),
            Family::MarkovGame => Err(CliError::Config("markov_game has no presets".into())),
        },
        ProblemSource::Random(spec) => random_problem(config.family, spec),
    }
}

fn random_problem(family: Family, spec: &RandomSpec) -> CliResult<Problem> {
    let mut rng = seeded(spec.seed);
    let gamma = |default: f64| -> CliResult<f64> {
        let g = spec.gamma.unwrap_or(default);
        if !(0.0..1.0).contains(&g) {
            return Err(CliError::Config(format!("gamma {g} must lie in [0, 1)")));
        }
        Ok(g)
    };
    Ok(match family {
        Family::Mdp => Problem::Mdp(random_mdp(
            &mut rng,
            spec.states.unwrap_or(4),
            spec.actions.unwrap_or(3),
            gamma(0.9)?,
        )),
        Family::MatrixGame => Problem::MatrixGame(random_matrix_game(
            &mut rng,
            spec.actions.unwrap_or(3),
            spec.columns.unwrap_or(3),
        )),
        Family::MarkovGame => Problem::MarkovGame(random_markov_game(
            &mut rng,
            spec.states.unwrap_or(3),
            spec.actions.unwrap_or(2),
            spec.columns.unwrap_or(2),
            gamma(0.8)?,
        )),
        Family::Lqr => Problem::Lqr(random_lqr(&mut rng, spec.state_dim.unwrap_or(3), spec.input_dim.unwrap_or(2))),
    })
}

/// Loads the problem, validates every hyperparameter against it, then runs.
pub fn execute(config: &ExperimentConfig) -> CliResult<Trace> {
    config.check()?;
    let problem = load_problem(config)?;
    let (mut trace, eta) = match &problem {
        Problem::Mdp(mdp) => run_mdp(config, mdp)?,
        Problem::MatrixGame(game) => run_matrix_game(config, game)?,
        Problem::MarkovGame(game) => run_markov_game(config, game)?,
        Problem::Lqr(prob) => run_lqr(config, prob)?,
    };
    let mut metadata = vec![
        ("polgrad".to_owned(), env!("CARGO_PKG_VERSION").to_owned()),
        ("family".to_owned(), config.family.name().to_owned()),
        ("method".to_owned(), config.method.clone()),
        (
            "seed".to_owned(),
            config.instance_seed().map_or_else(|| "none".to_owned(), |s| s.to_string()),
        ),
        ("config_sha256".to_owned(), config.hash()),
        ("learning_rate".to_owned(), eta.to_string()),
    ];
    if config.tau > 0.0 {
        metadata.push(("tau".to_owned(), config.tau.to_string()));
    }
    trace.metadata = metadata;
    Ok(trace)
}

/// [`execute`] and write the CSV; returns the path written.
pub fn run(config: &ExperimentConfig) -> CliResult<PathBuf> {
    let trace = execute(config)?;
    let path = config.output_path();
    trace.write(&path)?;
    Ok(path)
}

fn required_rate(config: &ExperimentConfig) -> CliResult<f64> {
    config
        .learning_rate
        .ok_or_else(|| CliError::Config(format!("{} needs learning_rate", config.method)))
}

fn run_mdp(config: &ExperimentConfig, mdp: &TabularMdp) -> CliResult<(Trace, f64)> {
    let method = PgMethod::from_name(&config.method).expect("checked method name");
    let eta = required_rate(config)?;
    let pg = PgConfig {
        tau: config.tau,
        omega: config.omega,
        record_every: config.record_every,
        ..PgConfig::new(method, eta, config.max_iters)
    };
    pg.validate(mdp.gamma()).map_err(invalid)?;
    let init = match &config.start_policy {
        Some(rows) => PgInit::Policy(StochasticPolicy::new(rows.clone()).map_err(invalid)?),
        None => PgInit::Uniform,
    };
    let run = run_single_agent(mdp, &pg, init)?;
    let mut trace = Trace::new(&["iter", "value_rho", "gap_rho", "gap_sup", "tv_opt"]);
    for r in &run.records {
        trace.push(vec![r.iter as f64, r.value_rho, r.gap_rho, r.gap_sup, r.tv_opt]);
    }
    Ok((trace, eta))
}

fn start_pair(config: &ExperimentConfig, game: &MatrixGame) -> CliResult<StrategyPair> {
    let Some(start) = &config.start_pair else {
        return Ok(StrategyPair::uniform(game.m(), game.n()));
    };
    let pair = StrategyPair::new(
        Distribution::new(start.mu.clone()).map_err(invalid)?,
        Distribution::new(start.nu.clone()).map_err(invalid)?,
    );
    if pair.mu.len() != game.m() || pair.nu.len() != game.n() {
        return Err(CliError::Config("start_pair does not match the payoff shape".into()));
    }
    if !pair.is_strictly_positive() {
        return Err(CliError::Config("multiplicative updates need a strictly positive start".into()));
    }
    Ok(pair)
}

fn run_matrix_game(config: &ExperimentConfig, game: &MatrixGame) -> CliResult<(Trace, f64)> {
    let tau = config.tau;
    let eta = match (config.learning_rate, config.method.as_str()) {
        (Some(eta), _) => eta,
        (None, "omwu") if tau > 0.0 => qre_learning_rate(tau),
        _ => return Err(CliError::Config(format!("{} needs learning_rate", config.method))),
    };
    match config.method.as_str() {
        "mwu" if tau != 0.0 => return Err(CliError::Config("mwu is unregularized; use reg_mwu".into())),
        "reg_mwu" if !(tau > 0.0 && eta * tau < 1.0) => {
            return Err(CliError::Config("reg_mwu needs tau > 0 and eta tau < 1".into()))
        }
        _ => {}
    }
    let start = start_pair(config, game)?;
    let mut omwu = match config.method.as_str() {
        "omwu" => Some(OmwuState::from_pair(&start, eta, tau).map_err(invalid)?),
        _ => None,
    };

    let (m, n) = (game.m(), game.n());
    let mut columns = vec!["iter".to_owned()];
    columns.extend((0..m).map(|i| format!("mu_{i}")));
    columns.extend((0..n).map(|j| format!("nu_{j}")));
    columns.extend(["ne_gap", "avg_ne_gap"].map(String::from));
    if tau > 0.0 {
        columns.push("qre_gap".into());
    }
    let mut trace = Trace {
        metadata: Vec::new(),
        columns,
        rows: Vec::new(),
    };

    let mut pair = start;
    let mut sum_mu = vec![0.0; m];
    let mut sum_nu = vec![0.0; n];
    for t in 0..=config.max_iters {
        sum_mu.iter_mut().zip(pair.mu.as_slice()).for_each(|(s, p)| *s += p);
        sum_nu.iter_mut().zip(pair.nu.as_slice()).for_each(|(s, p)| *s += p);
        if t % config.record_every == 0 || t == config.max_iters {
            let count = (t + 1) as f64;
            let average = StrategyPair::new(
                Distribution::new(normalized(&sum_mu, count))?,
                Distribution::new(normalized(&sum_nu, count))?,
            );
            let mut row = vec![t as f64];
            row.extend_from_slice(pair.mu.as_slice());
            row.extend_from_slice(pair.nu.as_slice());
            row.push(ne_gap(game, &pair)?);
            row.push(ne_gap(game, &average)?);
            if tau > 0.0 {
                row.push(qre_gap(game, &pair, tau)?);
            }
            trace.push(row);
        }
        if t == config.max_iters {
            break;
        }
        pair = match (config.method.as_str(), omwu.as_mut()) {
            ("omwu", Some(state)) => {
                state.step(game)?;
                state.pair()
            }
            ("reg_mwu", _) => reg_mwu_step(game, &pair, eta, tau)?,
            _ => mwu_step(game, &pair, eta)?,
        };
    }
    Ok((trace, eta))
}

fn normalized(sum: &[f64], count: f64) -> Vec<f64> {
    let mut p: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

fn run_markov_game(config: &ExperimentConfig, game: &ZeroSumMarkovGame) -> CliResult<(Trace, f64)> {
    let inner = InnerSolver::from_name(&config.method).expect("checked method name");
    let eta = config
        .learning_rate
        .unwrap_or_else(|| ActorCriticConfig::theory_eta(1.0 / 8.0, game.gamma(), game.n_states()));
    let alpha = match config.alpha {
        Some(a) => AlphaSchedule::Constant(a),
        None if config.tau > 0.0 => AlphaSchedule::EtaTau,
        None => AlphaSchedule::Decaying,
    };
    let regularized = config.tau > 0.0;
    let ac = ActorCriticConfig {
        inner,
        eta,
        tau: config.tau,
        alpha,
        max_iters: config.max_iters,
        record_every: config.record_every,
        // without regularization the NE gap is the only progress measure
        track_ne_gap: config.track_ne_gap || !regularized,
        reference_tol: 1e-12,
    };
    ac.validate(game.gamma()).map_err(invalid)?;
    let run = actor_critic_run(game, &ac)?;
    let mut columns = vec!["iter"];
    if regularized {
        columns.extend(["value_error", "policy_kl", "qre_gap"]);
    }
    if ac.track_ne_gap {
        columns.push("ne_gap");
    }
    let mut trace = Trace::new(&columns);
    for r in &run.records {
        let mut row = vec![r.iter as f64];
        if regularized {
            row.extend([r.value_error, r.policy_kl, r.qre_gap].map(|x| x.expect("regularized run has a reference")));
        }
        if let Some(g) = r.ne_gap {
            row.push(g);
        }
        trace.push(row);
    }
    Ok((trace, eta))
}

fn initial_gain(config: &ExperimentConfig, prob: &LqrProblem, optimum: &Mat) -> CliResult<Mat> {
    match &config.initial_gain {
        Some(rows) => {
            let k = matrix(rows, "initial_gain")?;
            let gain = GainMatrix::new(prob, k).map_err(invalid)?;
            if !gain.is_stable() {
                return Err(CliError::Config(format!(
                    "initial_gain is not stabilizing (spectral radius {})",
                    gain.spectral_radius
                )));
            }
            Ok(gain.k)
        }
        None => Ok(random_stable_gain(&mut seeded(config.seed), prob, optimum, 0.5, 0.95)),
    }
}

fn run_lqr(config: &ExperimentConfig, prob: &LqrProblem) -> CliResult<(Trace, f64)> {
    let kind = LqrStepKind::from_name(&config.method).expect("checked method name");
    let opt = lqr_optimum(prob)?;
    let k0 = initial_gain(config, prob, &opt.k)?;
    let eta = match (config.learning_rate, kind) {
        (Some(eta), _) => eta,
        (None, LqrStepKind::Pg) => default_pg_rate(prob, &k0)?,
        (None, LqrStepKind::Npg) => npg_safe_rate(prob, &k0)?,
        (None, LqrStepKind::GaussNewton) => 1.0,
    };
    let mut trace = Trace::new(&["iter", "cost", "gap", "grad_norm", "spectral_radius", "spectral_norm"]);
    let mut gain = GainMatrix::new(prob, k0)?;
    for t in 0..=config.max_iters {
        if t % config.record_every == 0 || t == config.max_iters {
            let eval = evaluate_gain(prob, &gain.k)?;
            trace.push(vec![
                t as f64,
                eval.cost,
                eval.cost - opt.cost,
                eval.gradient.norm(),
                gain.spectral_radius,
                gain.spectral_norm,
            ]);
        }
        if t < config.max_iters {
            gain = lqr_step(prob, &gain.k, eta, kind)?;
        }
    }
    Ok((trace, eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandit(method: &str, eta: f64, iters: usize) -> ExperimentConfig {
        ExperimentConfig {
            learning_rate: Some(eta),
            tau: 0.1,
            ..ExperimentConfig::new(Family::Mdp, ProblemSource::Preset("bandit".into()), method, iters)
        }
    }

    #[test]
    fn zero_iterations_give_one_row() {
        let trace = execute(&bandit("entropy_npg", 1.0, 0)).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0][0], 0.0);
    }

    #[test]
    fn entropy_npg_rate_is_validated_before_running() {
        let err = execute(&bandit("entropy_npg", 20.0, 5)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn destabilizing_lqr_step_is_numeric_failure() {
        let config = ExperimentConfig {
            learning_rate: Some(1e3),
            initial_gain: Some(vec![vec![0.6]]),
            ..ExperimentConfig::new(Family::Lqr, ProblemSource::Preset("scalar".into()), "pg", 3)
        };
        assert_eq!(execute(&config).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn every_family_runs() {
        let random = |seed| ProblemSource::Random(RandomSpec { seed, ..RandomSpec::default() });
        let configs = [
            ExperimentConfig {
                learning_rate: Some(0.1),
                ..ExperimentConfig::new(Family::MatrixGame, random(1), "omwu", 20)
            },
            ExperimentConfig {
                tau: 0.1,
                ..ExperimentConfig::new(Family::MarkovGame, random(2), "reg_omwu", 20)
            },
            ExperimentConfig::new(Family::Lqr, random(3), "gauss_newton", 5),
            ExperimentConfig {
                learning_rate: Some(0.05),
                ..ExperimentConfig::new(Family::Mdp, random(4), "projected_pg", 5)
            },
        ];
        for config in configs {
            let trace = execute(&config).unwrap();
            assert!(trace.rows.len() >= 2, "{}", config.method);
            assert_eq!(trace.meta("config_sha256").unwrap(), config.hash());
        }
    }
}
