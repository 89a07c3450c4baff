//! Forecast error metrics. `actual` is the observed series and `predicted`
//! the approximation throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "metric inputs differ in length: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("metric inputs are empty".into()));
    }
    Ok(())
}

fn smape_term(actual: f64, predicted: f64) -> f64 {
    let denom = (predicted.abs() + actual.abs()) / 2.0;
    if denom == 0.0 {
        // both zero
        0.0
    } else {
        (predicted - actual).abs() / denom * 100.0
    }
}

/// Symmetric mean absolute percentage error in percent, within `[0, 200]`.
pub fn smape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(smape_unchecked(actual, predicted))
}

pub(crate) fn smape_unchecked(actual: &[f64], predicted: &[f64]) -> f64 {
    let sum: f64 = actual.iter().zip(predicted).map(|(&a, &p)| smape_term(a, p)).sum();
    sum / actual.len() as f64
}

/// All error metrics for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub smape: f64,
    /// `None` when `actual` is constant.
    pub nmse: Option<f64>,
    pub mse: f64,
    pub mae: f64,
    /// Mean over samples with nonzero `actual`; `None` if there are none.
    pub mape: Option<f64>,
    pub n: usize,
}

pub fn error_metrics(actual: &[f64], predicted: &[f64]) -> Result<MetricReport> {
    check(actual, predicted)?;
    let n = actual.len();
    let nf = n as f64;
    let sq_err: f64 = actual.iter().zip(predicted).map(|(a, p)| (p - a) * (p - a)).sum();
    let abs_err: f64 = actual.iter().zip(predicted).map(|(a, p)| (p - a).abs()).sum();
    let mean = actual.iter().sum::<f64>() / nf;
    let variance: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let nmse = (variance > 0.0).then(|| sq_err / variance);
    let (ape_sum, ape_n) = actual
        .iter()
        .zip(predicted)
        .filter(|(a, _)| **a != 0.0)
        .fold((0.0, 0usize), |(s, c), (a, p)| (s + (p - a).abs() / a.abs(), c + 1));
    let mape = (ape_n > 0).then(|| ape_sum / ape_n as f64 * 100.0);
    Ok(MetricReport {
        smape: smape_unchecked(actual, predicted),
        nmse,
        mse: sq_err / nf,
        mae: abs_err / nf,
        mape,
        n,
    })
}
