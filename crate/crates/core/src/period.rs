//! Semi-period detection by minimizing the LSG score.
//!
//! For a candidate period `T` the series is cut into segments `F_1..F_n` of
//! length `T` plus a remainder `F_{n+1}` of length `L_rem < T`. The score
//! averages `|F_{i+1}(x_j) - F_i(x_j)| / T` over consecutive pairs, counting
//! the `n - 1` full pairs once each and the (F_n, remainder) pair with weight
//! `L_rem / T`. Summed over segments this is exactly the mean absolute lag-`T`
//! difference of the series, which is how it is computed here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

/// Scores whose difference from the minimum is below this fraction of the
/// series' range count as ties.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// LSG score of `values` at period `period`. Needs at least two full segments.
pub fn lsg_score(values: &[f64], period: usize) -> Result<f64> {
    if period == 0 {
        return Err(Error::InvalidPeriod {
            period,
            len: values.len(),
        });
    }
    if values.len() < 2 * period {
        return Err(Error::InsufficientData {
            what: "LSG score",
            needed: 2 * period,
            got: values.len(),
        });
    }
    Ok(lag_mean_abs_diff(values, period))
}

fn lag_mean_abs_diff(values: &[f64], lag: usize) -> f64 {
    let total: f64 = values[lag..]
        .iter()
        .zip(values)
        .map(|(later, earlier)| (later - earlier).abs())
        .sum();
    total / (values.len() - lag) as f64
}

/// Scores of every candidate period and the chosen semi-period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodScan {
    pub min_period: usize,
    pub max_period: usize,
    /// `scores[k]` belongs to period `min_period + k`.
    pub scores: Vec<f64>,
    pub best_period: usize,
}

impl PeriodScan {
    pub fn score(&self, period: usize) -> Option<f64> {
        period
            .checked_sub(self.min_period)
            .and_then(|k| self.scores.get(k).copied())
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best_period - self.min_period]
    }

    /// `(period, score)` pairs in ascending period order.
    pub fn curve(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.min_period..).zip(self.scores.iter().copied())
    }
}

/// Largest candidate period for a series of `len` samples.
pub fn default_max_period(len: usize) -> usize {
    len / 2
}

/// Scans `min_period..=max_period` and returns the smallest period whose
/// score ties the minimum.
pub fn scan_semi_period(values: &[f64], min_period: usize, max_period: usize) -> Result<PeriodScan> {
    scan_with(values, min_period, max_period, false)
}

/// Like [`scan_semi_period`], evaluating candidates on the rayon pool when
/// available. Scores and the chosen period are identical to the sequential scan.
pub fn scan_semi_period_parallel(values: &[f64], min_period: usize, max_period: usize) -> Result<PeriodScan> {
    scan_with(values, min_period, max_period, true)
}

pub(crate) fn scan_with(values: &[f64], min_period: usize, max_period: usize, parallel: bool) -> Result<PeriodScan> {
    if min_period < 2 || min_period > max_period || max_period > values.len() / 2 {
        return Err(Error::InvalidRange {
            min: min_period,
            max: max_period,
        });
    }
    let periods: Vec<usize> = (min_period..=max_period).collect();
    let scores = exec::map_ordered(&periods, parallel, |&t| lag_mean_abs_diff(values, t));
    let best_period = min_period + argmin_first(&scores, tie_tolerance(values));
    Ok(PeriodScan {
        min_period,
        max_period,
        scores,
        best_period,
    })
}

fn tie_tolerance(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if values.is_empty() {
        0.0
    } else {
        TIE_TOLERANCE * (hi - lo)
    }
}

fn argmin_first(scores: &[f64], tolerance: f64) -> usize {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    scores.iter().position(|&s| s <= min + tolerance).unwrap_or(0)
}

/// Which signal the period scan looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodMethod {
    /// Scan the residual as is.
    LsgRaw,
    /// Scan a 3-point moving average of the residual.
    LsgSmoothed,
}

impl PeriodMethod {
    pub const ALL: [PeriodMethod; 2] = [PeriodMethod::LsgRaw, PeriodMethod::LsgSmoothed];

    /// Scans over `2..=len/2`.
    pub fn detect(self, values: &[f64]) -> Result<PeriodScan> {
        let max = default_max_period(values.len());
        match self {
            PeriodMethod::LsgRaw => scan_semi_period(values, 2, max),
            PeriodMethod::LsgSmoothed => scan_semi_period(&moving_average3(values), 2, max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PeriodMethod::LsgRaw => "lsg-raw",
            PeriodMethod::LsgSmoothed => "lsg-smoothed",
        }
    }
}

/// Centered 3-point moving average; the two ends average their single neighbour.
pub fn moving_average3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let window = &values[lo..=hi];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}
