//! JSON problem files.
//!
//! | family        | fields                                             |
//! |---------------|----------------------------------------------------|
//! | `mdp`         | `gamma`, `rho[s]`, `r[s][a]`, `P[s][a][s']`        |
//! | `matrix_game` | `payoff[a][b]`                                     |
//! | `markov_game` | `gamma`, `r[s][a][b]`, `P[s][a][b][s']`            |
//! | `lqr`         | `A`, `B`, `Q`, `R`, `Sigma0` (row-major nested)    |

use std::fs;
use std::path::Path;

use polgrad_core::lqr::LqrProblem;
use polgrad_core::markov_game::ZeroSumMarkovGame;
use polgrad_core::matrix_game::MatrixGame;
use polgrad_core::mdp::TabularMdp;
use polgrad_core::Mat;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixGameFile {
    pub payoff: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovGameFile {
    pub gamma: f64,
    pub r: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct LqrFile {
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub Q: Vec<Vec<f64>>,
    pub R: Vec<Vec<f64>>,
    pub Sigma0: Vec<Vec<f64>>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Row-major nested rows to a matrix; rows must have equal length.
pub fn matrix(rows: &[Vec<f64>], name: &str) -> CliResult<Mat> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 || rows.iter().any(|r| r.len() != n_cols) {
        return Err(CliError::Config(format!("{name} must be a non-empty rectangular matrix")));
    }
    Ok(Mat::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl MdpFile {
    pub fn build(self) -> CliResult<TabularMdp> {
        TabularMdp::new(self.p, self.r, self.gamma, self.rho).map_err(invalid)
    }

    pub fn from_model(mdp: &TabularMdp) -> Self {
        let (n, m) = (mdp.n_states(), mdp.n_actions());
        Self {
            gamma: mdp.gamma(),
            rho: mdp.rho().as_slice().to_vec(),
            r: matrix_rows(mdp.rewards()),
            p: (0..n)
                .map(|s| (0..m).map(|a| mdp.transition(s, a).to_vec()).collect())
                .collect(),
        }
    }
}

impl MatrixGameFile {
    pub fn build(self) -> CliResult<MatrixGame> {
        MatrixGame::new(matrix(&self.payoff, "payoff")?).map_err(invalid)
    }
}

impl MarkovGameFile {
    pub fn build(self) -> CliResult<ZeroSumMarkovGame> {
        ZeroSumMarkovGame::new(self.p, self.r, self.gamma).map_err(invalid)
    }
}

impl LqrFile {
    pub fn build(self) -> CliResult<LqrProblem> {
        LqrProblem::new(
            matrix(&self.A, "A")?,
            matrix(&self.B, "B")?,
            matrix(&self.Q, "Q")?,
            matrix(&self.R, "R")?,
            matrix(&self.Sigma0, "Sigma0")?,
        )
        .map_err(invalid)
    }

    pub fn from_model(prob: &LqrProblem) -> Self {
        Self {
            A: matrix_rows(prob.a()),
            B: matrix_rows(prob.b()),
            Q: matrix_rows(prob.q()),
            R: matrix_rows(prob.r()),
            Sigma0: matrix_rows(prob.sigma0()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use polgrad_core::random::{random_mdp, seeded};

    #[test]
    fn mdp_round_trip() {
        let mdp = random_mdp(&mut seeded(3), 3, 2, 0.7);
        let text = serde_json::to_string(&MdpFile::from_model(&mdp)).unwrap();
        assert!(text.contains("\"P\""));
        let back: MdpFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.build().unwrap(), mdp);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        assert!(matrix(&[vec![1.0, 2.0], vec![3.0]], "A").is_err());
        assert!(matrix(&[], "A").is_err());
    }

    #[test]
    fn invalid_models_are_config_errors() {
        let bad = MatrixGameFile {
            payoff: vec![vec![2.0]],
        };
        assert_eq!(bad.build().unwrap_err().exit_code(), 2);
        let unknown = serde_json::from_str::<MatrixGameFile>(r#"{"payoff": [[0.5]], "extra": 1}"#);
        assert!(unknown.is_err());
    }
}
