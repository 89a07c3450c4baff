//! The basic element: a weighted pointwise average of all period-length
//! segments, and its side-by-side repetition.

use serde::{Deserialize, Serialize};

use crate::series::SegmentSet;

/// Default decay of [`WeightingStrategy::ExponentialRecency`].
pub const DEFAULT_ALPHA: f64 = 0.9;

/// How segments are weighted when averaged. Segment `i` is 1-based; the
/// remainder counts as segment `n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightingStrategy {
    Uniform,
    /// Weight `i`.
    LinearRecency,
    /// Weight `alpha^(n - i)`, `alpha` in (0, 1).
    ExponentialRecency {
        alpha: f64,
    },
}

impl WeightingStrategy {
    /// The three strategies in enumeration order.
    pub fn all(alpha: f64) -> [WeightingStrategy; 3] {
        [
            WeightingStrategy::Uniform,
            WeightingStrategy::LinearRecency,
            WeightingStrategy::ExponentialRecency { alpha },
        ]
    }

    /// Weight of 1-based segment `i` among `n` full segments.
    pub fn weight(&self, i: usize, n: usize) -> f64 {
        match *self {
            WeightingStrategy::Uniform => 1.0,
            WeightingStrategy::LinearRecency => i as f64,
            WeightingStrategy::ExponentialRecency { alpha } => alpha.powi(n as i32 - i as i32),
        }
    }

    pub fn name(&self) -> String {
        match self {
            WeightingStrategy::Uniform => "uniform".into(),
            WeightingStrategy::LinearRecency => "linear-recency".into(),
            WeightingStrategy::ExponentialRecency { alpha } => format!("exponential-recency({alpha})"),
        }
    }
}

/// A length-`period` template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicElement {
    pub values: Vec<f64>,
    pub period: usize,
    /// How many segments covered each position.
    pub contributing_counts: Vec<usize>,
}

/// Weighted average of every segment (remainder included) at each position.
pub fn build_basic_element(segments: &SegmentSet, strategy: WeightingStrategy) -> BasicElement {
    build_with_weights(segments, |i, n| strategy.weight(i, n))
}

/// Same as [`build_basic_element`] with an arbitrary weight `w(i, n)`, `i` 1-based.
pub fn build_with_weights(segments: &SegmentSet, weight: impl Fn(usize, usize) -> f64) -> BasicElement {
    let period = segments.period();
    let n = segments.n();
    let mut sums = vec![0.0; period];
    let mut totals = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (k, segment) in segments.all_segments().enumerate() {
        let w = weight(k + 1, n);
        for (j, &v) in segment.iter().enumerate() {
            sums[j] += w * v;
            totals[j] += w;
            counts[j] += 1;
        }
    }
    let values = sums.iter().zip(&totals).map(|(s, t)| s / t).collect();
    BasicElement {
        values,
        period,
        contributing_counts: counts,
    }
}

impl BasicElement {
    /// Repeats the element `length` times starting at phase `start_phase`:
    /// `out[k] = values[(start_phase + k) % period]`.
    pub fn tile(&self, length: usize, start_phase: usize) -> Vec<f64> {
        debug_assert!(start_phase < self.period);
        (0..length)
            .map(|k| self.values[(start_phase + k) % self.period])
            .collect()
    }
}
