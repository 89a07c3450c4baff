//! Uniformly sampled series, period partitions and train/validation/test splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled real-valued series.
///
/// `start_index` is the absolute sample index of the first value. Labels are
/// opaque (usually timestamps from the input file) and only carried through
/// for output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    values: Vec<f64>,
    start_index: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl Series {
    /// Builds a series starting at index 0, rejecting non-finite samples.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_start(values, 0)
    }

    pub fn with_start(values: Vec<f64>, start_index: i64) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            values,
            start_index,
            labels: None,
        })
    }

    /// Attaches labels; their count must match the number of samples.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} samples",
                labels.len(),
                self.values.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    /// One past the absolute index of the last sample.
    pub fn end_index(&self) -> i64 {
        self.start_index + self.values.len() as i64
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sub-series over `range` (positions relative to this series), keeping
    /// absolute indexing and labels.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Series {
        Series {
            values: self.values[range.clone()].to_vec(),
            start_index: self.start_index + range.start as i64,
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    fn check_aligned(&self, other: &Series) -> Result<()> {
        if self.len() != other.len() || self.start_index != other.start_index {
            return Err(Error::Alignment {
                left: self.len(),
                right: other.len(),
                left_start: self.start_index,
                right_start: other.start_index,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Series, op: impl Fn(f64, f64) -> f64) -> Result<Series> {
        self.check_aligned(other)?;
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Series {
            values,
            start_index: self.start_index,
            labels: self.labels.clone(),
        })
    }

    /// Elementwise `self - other`; labels come from `self`.
    pub fn subtract(&self, other: &Series) -> Result<Series> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise `self + other`; labels come from `self`.
    pub fn add(&self, other: &Series) -> Result<Series> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Cuts the series into segments of length `period`.
    pub fn partition(&self, period: usize) -> Result<SegmentSet> {
        partition(&self.values, period)
    }

    /// Splits into chronologically ordered train, validation and test parts.
    pub fn split(&self, spec: SplitSpec) -> Result<(Series, Series, Series)> {
        let lens = spec.lengths(self.len())?;
        let a = lens.train;
        let b = a + lens.validation;
        Ok((self.slice(0..a), self.slice(a..b), self.slice(b..self.len())))
    }
}

/// A series cut into `n ≥ 1` full segments of length `period` plus a
/// (possibly empty) trailing remainder shorter than `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    period: usize,
    full: Vec<Vec<f64>>,
    remainder: Vec<f64>,
}

impl SegmentSet {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn full_segments(&self) -> &[Vec<f64>] {
        &self.full
    }

    pub fn remainder(&self) -> &[f64] {
        &self.remainder
    }

    /// Number of full segments.
    pub fn n(&self) -> usize {
        self.full.len()
    }

    /// Full segments followed by the remainder when it is non-empty.
    pub fn all_segments(&self) -> impl Iterator<Item = &[f64]> {
        self.full
            .iter()
            .map(Vec::as_slice)
            .chain((!self.remainder.is_empty()).then_some(self.remainder.as_slice()))
    }

    pub fn concat(&self) -> Vec<f64> {
        self.all_segments().flatten().copied().collect()
    }
}

/// Partitions raw samples into `period`-length segments.
pub fn partition(values: &[f64], period: usize) -> Result<SegmentSet> {
    if period == 0 || period > values.len() {
        return Err(Error::InvalidPeriod {
            period,
            len: values.len(),
        });
    }
    let mut chunks = values.chunks_exact(period);
    let full = chunks.by_ref().map(<[f64]>::to_vec).collect();
    let remainder = chunks.remainder().to_vec();
    Ok(SegmentSet {
        period,
        full,
        remainder,
    })
}

/// How a series is divided into train, validation and test parts.
///
/// The test part is the last `test_length` samples; validation is the last
/// `ceil(validation_ratio * (len - test_length))` samples before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_ratio: f64,
    pub test_length: usize,
}

/// Part lengths produced by a [`SplitSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitLengths {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Smallest train part any split may leave.
pub const MIN_TRAIN: usize = 4;

impl SplitSpec {
    pub fn new(validation_ratio: f64, test_length: usize) -> Self {
        Self {
            validation_ratio,
            test_length,
        }
    }

    pub fn lengths(&self, len: usize) -> Result<SplitLengths> {
        if !(self.validation_ratio > 0.0 && self.validation_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "validation ratio {} outside (0, 1)",
                self.validation_ratio
            )));
        }
        if self.test_length >= len {
            return Err(Error::InsufficientData {
                what: "split",
                needed: self.test_length + 1,
                got: len,
            });
        }
        let prefix = len - self.test_length;
        let validation = validation_length(self.validation_ratio, prefix);
        let train = prefix.saturating_sub(validation);
        if train < MIN_TRAIN {
            return Err(Error::InsufficientData {
                what: "train part",
                needed: MIN_TRAIN + validation + self.test_length,
                got: len,
            });
        }
        Ok(SplitLengths {
            train,
            validation,
            test: self.test_length,
        })
    }
}

/// `ceil(ratio * prefix)`, guarded against representation error such as
/// `0.1 * 10 = 1.0000000000000002`.
pub(crate) fn validation_length(ratio: f64, prefix: usize) -> usize {
    let raw = ratio * prefix as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 * raw.abs().max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}
