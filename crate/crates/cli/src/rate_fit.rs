//! Least-squares fit of `log(error)` against the iteration index.

use polgrad_core::Error;
use serde::Serialize;

use crate::trace::Trace;
use crate::{CliError, CliResult};

/// Columns tried, in order, when none is named.
pub const DEFAULT_COLUMNS: [&str; 6] = ["qre_gap", "gap_sup", "gap", "tv_opt", "ne_gap", "value_error"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    /// `exp(slope)`, the fitted per-iteration contraction.
    pub factor: f64,
    pub r_squared: f64,
}

pub fn fit_rate(iters: &[f64], errors: &[f64], from: f64, to: f64) -> CliResult<RateFit> {
    if !(from < to) {
        return Err(CliError::Config(format!("window start {from} must precede its end {to}")));
    }
    let window: Vec<(f64, f64)> = iters
        .iter()
        .zip(errors)
        .filter(|(t, _)| **t >= from && **t <= to)
        .map(|(t, e)| (*t, *e))
        .collect();
    if let Some((t, e)) = window.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(Error::Domain(format!("error {e} at iteration {t} is not positive")).into());
    }
    if window.len() < 2 {
        return Err(CliError::Trace(format!(
            "window [{from}, {to}] holds {} points, need at least 2",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_y = window.iter().map(|(_, e)| e.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, e) in &window {
        let (dx, dy) = (t - mean_t, e.ln() - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    // a flat series is fit exactly by a zero slope
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        from,
        to,
        points: window.len(),
        slope,
        intercept: mean_y - slope * mean_t,
        factor: slope.exp(),
        r_squared,
    })
}

/// Fits `column` (or the first of [`DEFAULT_COLUMNS`] present) against `iter`.
pub fn fit_trace(trace: &Trace, column: Option<&str>, from: f64, to: f64) -> CliResult<RateFit> {
    let name = match column {
        Some(c) => c,
        None => DEFAULT_COLUMNS
            .into_iter()
            .find(|c| trace.column_index(c).is_some())
            .ok_or_else(|| CliError::Trace("no error column found; pass --column".into()))?,
    };
    let errors = trace
        .column(name)
        .ok_or_else(|| CliError::Trace(format!("trace has no column {name:?}")))?;
    let iters = trace
        .column("iter")
        .ok_or_else(|| CliError::Trace("trace has no iter column".into()))?;
    fit_rate(&iters, &errors, from, to)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sequence() {
        let t: Vec<f64> = (0..50).map(f64::from).collect();
        let e: Vec<f64> = t.iter().map(|k| 0.9f64.powf(*k)).collect();
        let fit = fit_rate(&t, &e, 0.0, 49.0).unwrap();
        assert!((fit.factor - 0.9).abs() <= 1e-9);
        assert!((fit.r_squared - 1.0).abs() <= 1e-12);
        assert_eq!(fit.points, 50);
    }

    #[test]
    fn constant_sequence() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let fit = fit_rate(&t, &[0.3; 10], 2.0, 8.0).unwrap();
        assert_eq!(fit.factor, 1.0);
        assert_eq!(fit.points, 7);
    }

    #[test]
    fn window_errors() {
        let t = [0.0, 1.0, 2.0];
        assert!(matches!(fit_rate(&t, &[1.0, 0.0, 0.5], 0.0, 2.0), Err(CliError::Numeric(Error::Domain(_)))));
        assert!(matches!(fit_rate(&t, &[1.0, 0.5, 0.2], 2.0, 1.0), Err(CliError::Config(_))));
        assert!(fit_rate(&t, &[1.0, 0.5, 0.2], 1.5, 1.9).is_err());
    }
}
