//! Forecasting by self approximation.
//!
//! A series is explained as a sum of components, each found from the series
//! itself: remove a polynomial (or fractional-degree) trend, find the lag
//! `T*` at which consecutive segments agree best, average all length-`T*`
//! segments into a basic element, and repeat it side by side. The leftover
//! residual feeds the next iteration. Every choice along the way (validation
//! split, period method, weighting, trend degree) is made on a held-out
//! validation window.
//!
//! ```
//! use selfapprox::{fit, synth, FitOptions, PeriodicTerm, Recipe};
//!
//! let recipe = Recipe::default()
//!     .with_trend(&[5.0, 0.01])
//!     .with_term(PeriodicTerm::sine(24.0, 1.0));
//! let series = synth(&recipe, 480, 0).unwrap();
//! let model = fit(&series, &FitOptions::default().with_test_length(48)).unwrap();
//! assert_eq!(model.iterations[0].semi_period, 24);
//! let forecast = model.predict(24).unwrap();
//! assert_eq!(forecast.values.len(), 24);
//! ```

pub mod basic_element;
pub mod error;
mod exec;
pub mod forecaster;
pub mod metrics;
pub mod period;
pub mod series;
pub mod synth;
pub mod trend;

pub use basic_element::{build_basic_element, BasicElement, WeightingStrategy};
pub use error::{Error, Result};
pub use exec::PARALLEL_AVAILABLE;
pub use forecaster::{
    fit, fit_guaranteed, predict, run_candidate, select_configuration, CandidateContext, Configuration, FitMode,
    FitOptions, Forecast, IterationResult, Model, SplitMetrics, StopReason,
};
pub use metrics::{error_metrics, smape, MetricReport};
pub use period::{lsg_score, scan_semi_period, scan_semi_period_parallel, PeriodMethod, PeriodScan};
pub use series::{partition, SegmentSet, Series, SplitSpec};
pub use synth::{synth, PeriodicTerm, Recipe, Waveform};
pub use trend::{detrend, fit_polynomial, fractional_blend, DetrendResult, Polynomial, TrendModel, TrendSpec};
