//! Named problems and named runs.

use polgrad_core::lqr::LqrProblem;
use polgrad_core::matrix_game::MatrixGame;
use polgrad_core::mdp::TabularMdp;
use polgrad_core::Mat;

use crate::config::{ExperimentConfig, Family, ProblemSource, StartPair};
use crate::{CliError, CliResult};

pub const BANDIT_REWARDS: [f64; 3] = [1.0, 0.9, 0.1];
pub const BANDIT_TAU: f64 = 0.1;
pub const RPS_START: [f64; 3] = [0.4, 0.4, 0.2];

pub const RUN_PRESETS: [&str; 2] = ["fig1-bandit", "fig2-rps"];

fn unknown(kind: &str, name: &str) -> CliError {
    CliError::Config(format!("unknown {kind} preset {name:?}"))
}

/// `bandit`: three arms with rewards 1.0, 0.9, 0.1.
pub fn mdp_preset(name: &str) -> CliResult<TabularMdp> {
    match name {
        "bandit" => Ok(TabularMdp::bandit(&BANDIT_REWARDS)?),
        _ => Err(unknown("mdp", name)),
    }
}

/// `rps`: rock-paper-scissors.
pub fn matrix_game_preset(name: &str) -> CliResult<MatrixGame> {
    match name {
        "rps" => Ok(MatrixGame::rock_paper_scissors()),
        _ => Err(unknown("matrix_game", name)),
    }
}

/// `scalar`: `a = b = q = r = Sigma0 = 1`.
pub fn lqr_preset(name: &str) -> CliResult<LqrProblem> {
    match name {
        "scalar" => {
            let one = Mat::from_element(1, 1, 1.0);
            Ok(LqrProblem::new(one.clone(), one.clone(), one.clone(), one.clone(), one)?)
        }
        _ => Err(unknown("lqr", name)),
    }
}

/// Runs behind `run --preset`.
///
/// `fig1-bandit`: entropy-regularized softmax PG and entropy-regularized NPG
/// on the three-armed bandit, `tau = 0.1`, step 1, 200 iterations.
///
/// `fig2-rps`: MWU on rock-paper-scissors from `(0.4, 0.4, 0.2)` for both
/// players, step 0.1, 1000 iterations.
pub fn run_preset(name: &str) -> CliResult<Vec<ExperimentConfig>> {
    match name {
        "fig1-bandit" => Ok([("pg", "entropy_pg"), ("npg", "entropy_npg")]
            .into_iter()
            .map(|(short, method)| ExperimentConfig {
                name: Some(format!("fig1-bandit-{short}")),
                learning_rate: Some(1.0),
                tau: BANDIT_TAU,
                ..ExperimentConfig::new(Family::Mdp, ProblemSource::Preset("bandit".into()), method, 200)
            })
            .collect()),
        "fig2-rps" => Ok(vec![ExperimentConfig {
            name: Some("fig2-rps-mwu".into()),
            learning_rate: Some(0.1),
            start_pair: Some(StartPair {
                mu: RPS_START.to_vec(),
                nu: RPS_START.to_vec(),
            }),
            ..ExperimentConfig::new(Family::MatrixGame, ProblemSource::Preset("rps".into()), "mwu", 1000)
        }]),
        _ => Err(unknown("run", name)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in RUN_PRESETS {
            for config in run_preset(name).unwrap() {
                config.check().unwrap();
            }
        }
        assert_eq!(mdp_preset("bandit").unwrap().n_actions(), 3);
        assert!(lqr_preset("nope").is_err());
        assert!(run_preset("fig3").is_err());
    }
}
