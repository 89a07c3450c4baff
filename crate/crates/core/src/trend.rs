//! Polynomial trends and fractional-degree blends between them.
//!
//! Fits are solved against the scaled abscissa `t = (x - center) / half_width`,
//! which maps the fitted grid onto `[-1, 1]`; a degree-10 Vandermonde matrix on
//! raw sample indices is far too ill-conditioned to solve. Coefficients are
//! stored in powers of `t`. [`Polynomial::power_coefficients`] converts them
//! back to powers of the raw offset `x`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

/// Default largest integer degree tried when de-trending.
pub const DEFAULT_MAX_DEGREE: usize = 10;
/// Default number of subdivisions between consecutive degrees.
pub const DEFAULT_FRACTIONAL_N: usize = 10;

/// Singular values below this fraction of the largest make a fit singular.
const RANK_TOLERANCE: f64 = 1e-12;

/// Least-squares polynomial in the scaled abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    /// Ascending powers of `t`.
    pub coefficients: Vec<f64>,
    /// Absolute sample index treated as `x = 0`.
    pub domain_offset: i64,
    pub center: f64,
    pub half_width: f64,
}

impl Polynomial {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    fn scaled(&self, index: i64) -> f64 {
        ((index - self.domain_offset) as f64 - self.center) / self.half_width
    }

    /// Horner evaluation at an absolute sample index.
    pub fn value_at(&self, index: i64) -> f64 {
        let t = self.scaled(index);
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Coefficients in ascending powers of `x = index - domain_offset`.
    ///
    /// Only well-conditioned for low degrees; intended for inspection.
    pub fn power_coefficients(&self) -> Vec<f64> {
        let d = self.coefficients.len();
        let mut out = vec![0.0; d];
        let shift = -self.center;
        for (k, &c) in self.coefficients.iter().enumerate() {
            // c * ((x + shift) / h)^k expanded binomially
            let scale = c / self.half_width.powi(k as i32);
            let mut binom = 1.0;
            for (j, slot) in out.iter_mut().enumerate().take(k + 1) {
                *slot += scale * binom * shift.powi((k - j) as i32);
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
        out
    }
}

/// Compact description of a trend choice, used in configurations and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrendSpec {
    Degree {
        degree: usize,
    },
    /// Blend of degrees `lower` and `lower + 1` with index `i` out of `n`.
    Fractional {
        lower: usize,
        i: usize,
        n: usize,
    },
}

impl TrendSpec {
    /// Degree as a real number: `lower + (n - i) / n` for blends.
    pub fn effective_degree(&self) -> f64 {
        match *self {
            TrendSpec::Degree { degree } => degree as f64,
            TrendSpec::Fractional { lower, i, n } => lower as f64 + (n - i) as f64 / n as f64,
        }
    }
}

impl std::fmt::Display for TrendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrendSpec::Degree { degree } => write!(f, "degree {degree}"),
            TrendSpec::Fractional { lower, i, n } => {
                write!(f, "blend({lower},{}; i={i}, N={n})", lower + 1)
            }
        }
    }
}

/// A fitted trend: an integer-degree polynomial or a geometric blend of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrendModel {
    Polynomial(Polynomial),
    /// Pointwise `sign * (|lower|^i * |upper|^(n-i))^(1/n)`.
    Blend {
        lower: Polynomial,
        upper: Polynomial,
        i: usize,
        n: usize,
    },
}

impl TrendModel {
    pub fn spec(&self) -> TrendSpec {
        match self {
            TrendModel::Polynomial(p) => TrendSpec::Degree { degree: p.degree() },
            TrendModel::Blend { lower, i, n, .. } => TrendSpec::Fractional {
                lower: lower.degree(),
                i: *i,
                n: *n,
            },
        }
    }

    /// Value at one absolute sample index.
    pub fn value_at(&self, index: i64) -> Result<f64> {
        match self {
            TrendModel::Polynomial(p) => Ok(p.value_at(index)),
            TrendModel::Blend { lower, upper, i, n } => {
                blend_value(lower.value_at(index), upper.value_at(index), *i, *n).ok_or(Error::SignDomain { index })
            }
        }
    }

    /// Samples the trend over a range of absolute indices.
    pub fn evaluate(&self, range: Range<i64>) -> Result<Vec<f64>> {
        range.map(|x| self.value_at(x)).collect()
    }

    pub fn evaluate_series(&self, range: Range<i64>) -> Result<Series> {
        let start = range.start;
        Series::with_start(self.evaluate(range)?, start)
    }

    /// The bracketing integer fit carrying the larger blend weight.
    pub fn nearest_integer_fit(&self) -> &Polynomial {
        match self {
            TrendModel::Polynomial(p) => p,
            TrendModel::Blend { lower, upper, i, n } => {
                if 2 * i >= *n {
                    lower
                } else {
                    upper
                }
            }
        }
    }
}

fn blend_value(lower: f64, upper: f64, i: usize, n: usize) -> Option<f64> {
    let same_sign = (lower > 0.0 && upper > 0.0) || (lower < 0.0 && upper < 0.0);
    if !same_sign {
        return None;
    }
    if i == n {
        return Some(lower);
    }
    if i == 0 {
        return Some(upper);
    }
    let w = i as f64 / n as f64;
    let magnitude = lower.abs().powf(w) * upper.abs().powf(1.0 - w);
    Some(magnitude.copysign(lower))
}

/// Least-squares polynomial of `degree` over the series' own grid.
pub fn fit_polynomial(series: &Series, degree: usize) -> Result<TrendModel> {
    fit_values(series.values(), series.start_index(), degree).map(TrendModel::Polynomial)
}

pub(crate) fn fit_values(values: &[f64], domain_offset: i64, degree: usize) -> Result<Polynomial> {
    let len = values.len();
    if len < degree + 1 {
        return Err(Error::InsufficientData {
            what: "polynomial fit",
            needed: degree + 1,
            got: len,
        });
    }
    let center = (len - 1) as f64 / 2.0;
    let half_width = if len > 1 { center } else { 1.0 };
    let cols = degree + 1;
    let design = DMatrix::from_fn(len, cols, |row, col| {
        ((row as f64 - center) / half_width).powi(col as i32)
    });
    let rhs = DVector::from_column_slice(values);
    let svd = design.svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    if largest.is_nan() || largest <= 0.0 || smallest < RANK_TOLERANCE * largest {
        return Err(Error::SingularFit { degree });
    }
    let solution = svd.solve(&rhs, 0.0).map_err(|_| Error::SingularFit { degree })?;
    let coefficients: Vec<f64> = solution.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularFit { degree });
    }
    Ok(Polynomial {
        coefficients,
        domain_offset,
        center,
        half_width,
    })
}

/// Geometric blend `f^i_{m,N}` between fits of degree `m` (`lower`) and
/// `m + 1` (`upper`). `i = n` reproduces `lower`, `i = 0` reproduces `upper`.
pub fn fractional_blend(lower: &TrendModel, upper: &TrendModel, i: usize, n: usize) -> Result<TrendModel> {
    let (TrendModel::Polynomial(lo), TrendModel::Polynomial(up)) = (lower, upper) else {
        return Err(Error::InvalidInput(
            "fractional blends need two integer-degree fits".into(),
        ));
    };
    if n == 0 || i > n {
        return Err(Error::InvalidInput(format!("blend index {i} outside 0..={n}")));
    }
    if up.degree() != lo.degree() + 1 {
        return Err(Error::InvalidInput(format!(
            "blend needs consecutive degrees, got {} and {}",
            lo.degree(),
            up.degree()
        )));
    }
    Ok(TrendModel::Blend {
        lower: lo.clone(),
        upper: up.clone(),
        i,
        n,
    })
}

/// Trend samples and the de-trended residual `G = f - Tf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetrendResult {
    pub trend_values: Series,
    pub residual: Series,
}

pub fn detrend(series: &Series, model: &TrendModel) -> Result<DetrendResult> {
    let trend_values = model.evaluate_series(series.start_index()..series.end_index())?;
    let residual = Series::with_start(
        series
            .values()
            .iter()
            .zip(trend_values.values())
            .map(|(f, t)| f - t)
            .collect(),
        series.start_index(),
    )?;
    Ok(DetrendResult { trend_values, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> Series {
        Series::new(v.to_vec()).unwrap()
    }

    fn constant(c: f64) -> TrendModel {
        TrendModel::Polynomial(Polynomial {
            coefficients: vec![c],
            domain_offset: 0,
            center: 0.0,
            half_width: 1.0,
        })
    }

    fn linear(c0: f64, c1: f64) -> TrendModel {
        TrendModel::Polynomial(Polynomial {
            coefficients: vec![c0, c1],
            domain_offset: 0,
            center: 0.0,
            half_width: 1.0,
        })
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn line_fits_exactly() {
        let s = series(&[1.0, 3.0, 5.0, 7.0, 9.0]);
        let TrendModel::Polynomial(p) = fit_polynomial(&s, 1).unwrap() else {
            unreachable!()
        };
        assert_close(&p.power_coefficients(), &[1.0, 2.0], 1e-12);
        let r = detrend(&s, &TrendModel::Polynomial(p)).unwrap();
        assert!(r.residual.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn degree_zero_is_mean() {
        let s = series(&[1.0, 3.0, 5.0]);
        let m = fit_polynomial(&s, 0).unwrap();
        let TrendModel::Polynomial(p) = &m else { unreachable!() };
        assert!((p.coefficients[0] - 3.0).abs() < 1e-12);
        let r = detrend(&s, &m).unwrap();
        assert_close(r.residual.values(), &[-2.0, 0.0, 2.0], 1e-12);
    }

    #[test]
    fn square_fits_exactly() {
        let m = fit_polynomial(&series(&[0.0, 1.0, 4.0, 9.0]), 2).unwrap();
        let TrendModel::Polynomial(p) = m else { unreachable!() };
        assert_close(&p.power_coefficients(), &[0.0, 0.0, 1.0], 1e-9);
    }

    #[test]
    fn underdetermined_fit() {
        assert!(matches!(
            fit_polynomial(&series(&[1.0, 2.0]), 2),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn evaluation_uses_absolute_indices() {
        let s = Series::with_start(vec![10.0, 12.0, 14.0], 100).unwrap();
        let m = fit_polynomial(&s, 1).unwrap();
        assert_close(&m.evaluate(100..105).unwrap(), &[10.0, 12.0, 14.0, 16.0, 18.0], 1e-12);
        assert_close(&linear(1.0, 2.0).evaluate(0..3).unwrap(), &[1.0, 3.0, 5.0], 0.0);
        assert_eq!(constant(7.0).evaluate(-3..2).unwrap(), vec![7.0; 5]);
    }

    #[test]
    fn blend_of_constants() {
        // the degree-1 side is flat
        let b = fractional_blend(&constant(4.0), &linear(9.0, 0.0), 1, 2).unwrap();
        assert_eq!(b.evaluate(0..3).unwrap(), vec![6.0; 3]);
        let b = fractional_blend(&constant(-4.0), &linear(-9.0, 0.0), 1, 2).unwrap();
        assert_eq!(b.evaluate(0..3).unwrap(), vec![-6.0; 3]);
    }

    #[test]
    fn blend_endpoints() {
        let lo = constant(2.5);
        let up = linear(3.0, 0.5);
        let at_lower = fractional_blend(&lo, &up, 10, 10).unwrap();
        let at_upper = fractional_blend(&lo, &up, 0, 10).unwrap();
        assert_eq!(at_lower.evaluate(0..5).unwrap(), lo.evaluate(0..5).unwrap());
        assert_eq!(at_upper.evaluate(0..5).unwrap(), up.evaluate(0..5).unwrap());
    }

    #[test]
    fn blend_sign_domain() {
        let b = fractional_blend(&constant(1.0), &linear(-2.0, 1.0), 5, 10).unwrap();
        assert!(matches!(b.evaluate(0..2), Err(Error::SignDomain { index: 0 })));
        assert!(b.value_at(3).is_ok());
        // zero on either side is outside the domain
        assert!(matches!(b.value_at(2), Err(Error::SignDomain { index: 2 })));
    }

    #[test]
    fn blend_preconditions() {
        assert!(fractional_blend(&constant(1.0), &constant(2.0), 1, 2).is_err());
        assert!(fractional_blend(&constant(1.0), &linear(1.0, 1.0), 3, 2).is_err());
        assert!(fractional_blend(&constant(1.0), &linear(1.0, 1.0), 0, 0).is_err());
    }

    #[test]
    fn effective_degree() {
        let spec = TrendSpec::Fractional { lower: 2, i: 7, n: 10 };
        assert!((spec.effective_degree() - 2.3).abs() < 1e-12);
        assert_eq!(TrendSpec::Degree { degree: 4 }.effective_degree(), 4.0);
    }
}
