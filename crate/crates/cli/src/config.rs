//! Experiment configuration files.
//!
//! ```json
//! {
//!   "family": "mdp",
//!   "problem": {"random": {"seed": 7, "states": 4, "actions": 3, "gamma": 0.9}},
//!   "method": "npg",
//!   "learning_rate": 1.0,
//!   "max_iters": 200
//! }
//! ```
//!
//! `problem` is one of `{"file": path}`, `{"preset": name}` or
//! `{"random": {...}}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::problem::read_json;
use crate::{CliError, CliResult, OUT_DIR_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mdp,
    MatrixGame,
    MarkovGame,
    Lqr,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mdp => "mdp",
            Family::MatrixGame => "matrix_game",
            Family::MarkovGame => "markov_game",
            Family::Lqr => "lqr",
        }
    }

    pub fn methods(self) -> &'static [&'static str] {
        match self {
            Family::Mdp => &[
                "projected_pg",
                "softmax_pg",
                "log_barrier_pg",
                "npg",
                "entropy_npg",
                "entropy_pg",
            ],
            Family::MatrixGame => &["mwu", "omwu", "reg_mwu"],
            Family::MarkovGame => &["omwu", "reg_omwu", "exact_qre"],
            Family::Lqr => &["pg", "npg", "gauss_newton"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    File(PathBuf),
    Preset(String),
    Random(RandomSpec),
}

/// Dimensions of a random instance; unset fields take family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    /// MDP actions, or the row player's actions in games.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    /// Column player's actions in games.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPair {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Names the default output file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub family: Family,
    pub problem: ProblemSource,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub tau: f64,
    /// Log-barrier weight.
    #[serde(default)]
    pub omega: f64,
    /// Constant value learning rate for Markov games; `eta tau` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub max_iters: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Markov games: also record the unregularized NE gap.
    #[serde(default)]
    pub track_ne_gap: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_policy: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_pair: Option<StartPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_gain: Option<Vec<Vec<f64>>>,
    /// Seed for randomness outside the problem (the LQR starting gain).
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(family: Family, problem: ProblemSource, method: &str, max_iters: usize) -> Self {
        Self {
            name: None,
            family,
            problem,
            method: method.to_owned(),
            learning_rate: None,
            tau: 0.0,
            omega: 0.0,
            alpha: None,
            max_iters,
            record_every: 1,
            track_ne_gap: false,
            start_policy: None,
            start_pair: None,
            initial_gain: None,
            seed: 0,
            output: None,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let mut config: Self = read_json(path)?;
        // problem files are resolved relative to the config file
        if let ProblemSource::File(p) = &mut config.problem {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// Structural checks that need no problem data. Hyperparameters are
    /// checked against the loaded problem by the runner.
    pub fn check(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !self.family.methods().contains(&self.method.as_str()) {
            return bad(format!(
                "method {:?} is not one of {:?} for {}",
                self.method,
                self.family.methods(),
                self.family.name()
            ));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if let Some(eta) = self.learning_rate {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("learning_rate {eta} must be positive"));
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) || !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad("tau and omega must be finite and nonnegative".into());
        }
        let only = |set: bool, field: &str, family: Family| -> CliResult<()> {
            if set && self.family != family {
                return Err(CliError::Config(format!("{field} applies to {} only", family.name())));
            }
            Ok(())
        };
        only(self.start_policy.is_some(), "start_policy", Family::Mdp)?;
        only(self.start_pair.is_some(), "start_pair", Family::MatrixGame)?;
        only(self.initial_gain.is_some(), "initial_gain", Family::Lqr)?;
        only(self.alpha.is_some(), "alpha", Family::MarkovGame)?;
        only(self.track_ne_gap, "track_ne_gap", Family::MarkovGame)?;
        if let ProblemSource::Random(spec) = &self.problem {
            let dims = [spec.states, spec.actions, spec.columns, spec.state_dim, spec.input_dim];
            if dims.iter().any(|d| *d == Some(0)) {
                return bad("random instance dimensions must be positive".into());
            }
        }
        Ok(())
    }

    /// Seed recorded in trace metadata.
    pub fn instance_seed(&self) -> Option<u64> {
        match &self.problem {
            ProblemSource::Random(spec) => Some(spec.seed),
            _ if self.family == Family::Lqr && self.initial_gain.is_none() => Some(self.seed),
            _ => None,
        }
    }

    /// SHA-256 of the canonical JSON form (output path excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.family.name(), self.method))
    }

    /// `output`, else `<label>.csv` under `$POLGRAD_OUT_DIR` or the working
    /// directory.
    pub fn output_path(&self) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_default();
        dir.join(format!("{}.csv", self.label()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<ExperimentConfig> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    #[test]
    fn parses_documented_example() {
        let c = parse(
            r#"{"family": "mdp", "problem": {"random": {"seed": 7, "states": 4, "actions": 3, "gamma": 0.9}},
                "method": "npg", "learning_rate": 1.0, "max_iters": 200}"#,
        )
        .unwrap();
        assert_eq!(c.instance_seed(), Some(7));
        assert_eq!(c.record_every, 1);
        assert_eq!(c.label(), "mdp-npg");
    }

    #[test]
    fn rejects_mismatched_fields() {
        let base = r#""problem": {"preset": "rps"}, "max_iters": 5"#;
        assert!(parse(&format!(r#"{{"family": "matrix_game", "method": "npg", {base}}}"#)).is_err());
        assert!(parse(&format!(
            r#"{{"family": "matrix_game", "method": "mwu", "learning_rate": -1, {base}}}"#
        ))
        .is_err());
        assert!(parse(&format!(
            r#"{{"family": "matrix_game", "method": "mwu", "initial_gain": [[1]], {base}}}"#
        ))
        .is_err());
        assert!(parse(&format!(r#"{{"family": "matrix_game", "method": "mwu", "typo": 1, {base}}}"#)).is_err());
    }

    #[test]
    fn hash_ignores_output_path() {
        let mut c = ExperimentConfig::new(Family::Lqr, ProblemSource::Preset("scalar".into()), "npg", 3);
        let h = c.hash();
        c.output = Some("elsewhere.csv".into());
        assert_eq!(c.hash(), h);
        c.max_iters = 4;
        assert_ne!(c.hash(), h);
        assert_eq!(h.len(), 64);
    }
}
