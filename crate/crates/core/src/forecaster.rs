//! The iterative decomposition engine.
//!
//! Each iteration searches a fixed grid of configurations (validation ratio ×
//! period method × weighting × trend degree), refines the winner with
//! fractional-degree blends, and subtracts the chosen trend plus tiled basic
//! element from the running residual. Candidates are scored on a validation
//! window common to every ratio, so they are compared on the same samples.
//!
//! Only the pre-test prefix of a series is ever used for estimation and
//! selection. The test window is read once, after the loop, for the report.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basic_element::{build_basic_element, BasicElement, WeightingStrategy, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::{error_metrics, smape_unchecked, MetricReport};
use crate::period::PeriodMethod;
use crate::series::{partition, validation_length, Series, SplitSpec};
use crate::trend::{fit_values, fractional_blend, TrendModel, TrendSpec, DEFAULT_FRACTIONAL_N, DEFAULT_MAX_DEGREE};

/// Smallest pre-test prefix `fit` accepts.
pub const MIN_FIT_LENGTH: usize = 16;

/// Smallest residual a single candidate can be run on.
pub const MIN_CANDIDATE_LENGTH: usize = 8;

/// Residual norms at or below this fraction of the input's norm count as
/// fully explained.
pub const CONVERGED_RELATIVE: f64 = 1e-10;

/// One point of the configuration grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub validation_ratio: f64,
    pub period_method: PeriodMethod,
    pub weighting: WeightingStrategy,
    pub trend: TrendSpec,
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ratio {}, {}, {}, {}",
            self.validation_ratio,
            self.period_method.name(),
            self.weighting.name(),
            self.trend
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub validation_ratios: Vec<f64>,
    pub max_degree: usize,
    pub fractional_n: usize,
    /// Decay of the exponential-recency weighting.
    pub alpha: f64,
    pub test_length: usize,
    /// Stop when an iteration's best common-window SMAPE does not improve on
    /// the previous iteration's.
    pub stop_on_no_improvement: bool,
    /// Reserved; the pipeline is deterministic.
    pub random_seed: u64,
    /// Evaluate candidates on the rayon pool when the `parallel` feature is on.
    /// Results are identical either way, so it is not part of the serialized options.
    #[serde(skip, default = "parallel_default")]
    pub parallel: bool,
}

fn parallel_default() -> bool {
    true
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            validation_ratios: vec![0.10, 0.15, 0.20, 0.25],
            max_degree: DEFAULT_MAX_DEGREE,
            fractional_n: DEFAULT_FRACTIONAL_N,
            alpha: DEFAULT_ALPHA,
            test_length: 0,
            stop_on_no_improvement: true,
            random_seed: 0,
            parallel: true,
        }
    }
}

impl FitOptions {
    pub fn with_test_length(mut self, test_length: usize) -> Self {
        self.test_length = test_length;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if self.validation_ratios.is_empty() {
            return Err(Error::InvalidInput("no validation ratios".into()));
        }
        if let Some(r) = self.validation_ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidInput(format!("validation ratio {r} outside (0, 1)")));
        }
        if self.fractional_n == 0 {
            return Err(Error::InvalidInput("fractional N must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    /// Integer-degree grid in enumeration order: ratios, then period
    /// methods, then weightings, then degrees ascending.
    pub fn integer_grid(&self) -> Vec<Configuration> {
        self.grid_for_degrees(0..=self.max_degree)
    }

    fn grid_for_degrees(&self, degrees: impl Iterator<Item = usize> + Clone) -> Vec<Configuration> {
        let mut out = Vec::new();
        for &validation_ratio in &self.validation_ratios {
            for period_method in PeriodMethod::ALL {
                for weighting in WeightingStrategy::all(self.alpha) {
                    for degree in degrees.clone() {
                        out.push(Configuration {
                            validation_ratio,
                            period_method,
                            weighting,
                            trend: TrendSpec::Degree { degree },
                        });
                    }
                }
            }
        }
        out
    }

    /// Blends bracketing the winning degree: `(m-1, m)` then `(m, m+1)`,
    /// `i = 1..N-1` each, keeping the winner's other settings.
    pub fn fractional_candidates(&self, best: &Configuration) -> Vec<Configuration> {
        let TrendSpec::Degree { degree: m } = best.trend else {
            return Vec::new();
        };
        let n = self.fractional_n;
        let mut lowers = Vec::new();
        if m >= 1 {
            lowers.push(m - 1);
        }
        if m < self.max_degree {
            lowers.push(m);
        }
        lowers
            .into_iter()
            .flat_map(|lower| {
                (1..n).map(move |i| Configuration {
                    trend: TrendSpec::Fractional { lower, i, n },
                    ..*best
                })
            })
            .collect()
    }
}

/// The residual a candidate is fitted to, plus what is needed to score it.
#[derive(Debug, Clone)]
pub struct CandidateContext {
    actual: Vec<f64>,
    prior: Vec<f64>,
    residual: Vec<f64>,
    start_index: i64,
    window: usize,
}

impl CandidateContext {
    /// `actual` is the observed prefix, `prior` the prediction accumulated by
    /// earlier iterations and `window` the common validation window length.
    pub fn new(actual: &Series, prior: Vec<f64>, window: usize) -> Result<Self> {
        if prior.len() != actual.len() {
            return Err(Error::Alignment {
                left: actual.len(),
                right: prior.len(),
                left_start: actual.start_index(),
                right_start: actual.start_index(),
            });
        }
        if actual.len() < MIN_CANDIDATE_LENGTH {
            return Err(Error::InsufficientData {
                what: "candidate residual",
                needed: MIN_CANDIDATE_LENGTH,
                got: actual.len(),
            });
        }
        if window == 0 || window > actual.len() {
            return Err(Error::InvalidInput(format!(
                "common window {window} does not fit {} samples",
                actual.len()
            )));
        }
        let residual = actual.values().iter().zip(&prior).map(|(a, p)| a - p).collect();
        Ok(Self {
            actual: actual.values().to_vec(),
            prior,
            residual,
            start_index: actual.start_index(),
            window,
        })
    }

    /// First-iteration context: nothing predicted yet.
    pub fn from_residual(residual: &Series, window: usize) -> Result<Self> {
        Self::new(residual, vec![0.0; residual.len()], window)
    }

    fn from_parts(actual: &[f64], prior: &[f64], residual: &[f64], start_index: i64, window: usize) -> Self {
        Self {
            actual: actual.to_vec(),
            prior: prior.to_vec(),
            residual: residual.to_vec(),
            start_index,
            window,
        }
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }
}

/// One decomposition pass under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub config: Configuration,
    pub trend: TrendModel,
    /// Trend over the whole prefix (train and validation).
    pub trend_values: Series,
    pub semi_period: usize,
    pub period_score: f64,
    pub basic_element: BasicElement,
    /// Tiled basic element over the whole prefix.
    pub periodic_estimate: Series,
    pub train_length: usize,
    /// SMAPE of the cumulative prediction on this candidate's validation part.
    pub validation_smape: f64,
    /// SMAPE of the cumulative prediction on the common window; the selection key.
    pub window_smape: f64,
}

impl IterationResult {
    /// `REG + G` over the prefix.
    pub fn component(&self) -> Vec<f64> {
        self.trend_values
            .values()
            .iter()
            .zip(self.periodic_estimate.values())
            .map(|(r, g)| r + g)
            .collect()
    }
}

struct Prepared {
    train_length: usize,
    trend: TrendModel,
    reg: Vec<f64>,
    detrended_train: Vec<f64>,
    semi_period: usize,
    period_score: f64,
}

fn build_trend(train: &[f64], start_index: i64, spec: TrendSpec) -> Result<TrendModel> {
    match spec {
        TrendSpec::Degree { degree } => fit_values(train, start_index, degree).map(TrendModel::Polynomial),
        TrendSpec::Fractional { lower, i, n } => {
            let lo = TrendModel::Polynomial(fit_values(train, start_index, lower)?);
            let up = TrendModel::Polynomial(fit_values(train, start_index, lower + 1)?);
            fractional_blend(&lo, &up, i, n)
        }
    }
}

fn prepare(ctx: &CandidateContext, ratio: f64, method: PeriodMethod, spec: TrendSpec) -> Result<Prepared> {
    let len = ctx.len();
    let train_length = SplitSpec::new(ratio, 0).lengths(len)?.train;
    let train = &ctx.residual[..train_length];
    let trend = build_trend(train, ctx.start_index, spec)?;
    let reg = trend.evaluate(ctx.start_index..ctx.start_index + len as i64)?;
    if reg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: 0 });
    }
    let detrended_train: Vec<f64> = train.iter().zip(&reg).map(|(f, r)| f - r).collect();
    let scan = method.detect(&detrended_train)?;
    Ok(Prepared {
        train_length,
        trend,
        reg,
        detrended_train,
        semi_period: scan.best_period,
        period_score: scan.best_score(),
    })
}

fn finish(ctx: &CandidateContext, prep: &Prepared, config: Configuration) -> Result<IterationResult> {
    let len = ctx.len();
    let segments = partition(&prep.detrended_train, prep.semi_period)?;
    let element = build_basic_element(&segments, config.weighting);
    let periodic = element.tile(len, 0);
    let prediction: Vec<f64> = ctx
        .prior
        .iter()
        .zip(&prep.reg)
        .zip(&periodic)
        .map(|((p, r), g)| p + r + g)
        .collect();
    if let Some(index) = prediction.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let tail = len - ctx.window;
    let validation_smape = smape_unchecked(&ctx.actual[prep.train_length..], &prediction[prep.train_length..]);
    let window_smape = smape_unchecked(&ctx.actual[tail..], &prediction[tail..]);
    Ok(IterationResult {
        config,
        trend: prep.trend.clone(),
        trend_values: Series::with_start(prep.reg.clone(), ctx.start_index)?,
        semi_period: prep.semi_period,
        period_score: prep.period_score,
        basic_element: element,
        periodic_estimate: Series::with_start(periodic, ctx.start_index)?,
        train_length: prep.train_length,
        validation_smape,
        window_smape,
    })
}

/// Runs one configuration: fits the trend on the train part, scans the
/// de-trended train residual for its semi-period, averages the basic element,
/// tiles it across train and validation, and scores the cumulative prediction.
pub fn run_candidate(ctx: &CandidateContext, config: &Configuration) -> Result<IterationResult> {
    let prep = prepare(ctx, config.validation_ratio, config.period_method, config.trend)?;
    finish(ctx, &prep, *config)
}

#[derive(PartialEq, Eq, Hash)]
struct GroupKey(u64, PeriodMethod, TrendSpec);

/// Evaluates `configs`, sharing trend fits and period scans between
/// configurations that differ only in weighting. Output order matches input.
fn evaluate_grid(ctx: &CandidateContext, configs: &[Configuration], parallel: bool) -> Vec<Option<IterationResult>> {
    let mut index: HashMap<GroupKey, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (ci, c) in configs.iter().enumerate() {
        let key = GroupKey(c.validation_ratio.to_bits(), c.period_method, c.trend);
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(ci);
    }
    let evaluated = exec::map_ordered(&groups, parallel, |members| {
        let first = &configs[members[0]];
        let prep = prepare(ctx, first.validation_ratio, first.period_method, first.trend);
        members
            .iter()
            .map(|&ci| {
                let out = prep.as_ref().ok().and_then(|p| finish(ctx, p, configs[ci]).ok());
                (ci, out)
            })
            .collect::<Vec<_>>()
    });
    let mut out = vec![None; configs.len()];
    for (ci, r) in evaluated.into_iter().flatten() {
        out[ci] = r;
    }
    out
}

/// Lowest common-window SMAPE; ties go to the earliest candidate.
pub fn select_configuration(candidates: &[IterationResult]) -> Option<&IterationResult> {
    candidates
        .iter()
        .reduce(|best, c| if c.window_smape < best.window_smape { c } else { best })
}

fn select_feasible(candidates: &[Option<IterationResult>]) -> Option<&IterationResult> {
    candidates
        .iter()
        .flatten()
        .reduce(|best, c| if c.window_smape < best.window_smape { c } else { best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Standard,
    /// Every accepted iteration removes more than half of the residual norm.
    Guaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    /// Iteration `iteration` did not improve and was discarded.
    NoImprovement {
        iteration: usize,
    },
    IterationFailed {
        iteration: usize,
    },
    /// The residual was fully explained after `iteration` iterations.
    Converged {
        iteration: usize,
    },
    GuaranteeUnreachable {
        iteration: usize,
    },
}

/// Metrics on the disjoint train, validation (common window) and test parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Option<MetricReport>,
    pub validation: Option<MetricReport>,
    pub test: Option<MetricReport>,
}

/// A fitted model together with its fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub mode: FitMode,
    pub options: FitOptions,
    /// Absolute index of the first fitted sample.
    pub start_index: i64,
    /// Length of the pre-test prefix the model was fitted on.
    pub fit_length: usize,
    /// Length of the common validation window at the end of the prefix.
    pub common_window: usize,
    pub iterations: Vec<IterationResult>,
    pub stop_reason: StopReason,
    /// Infeasible candidates per evaluated iteration.
    pub infeasible_counts: Vec<usize>,
    /// Sum of all accepted `REG + G` over the prefix.
    pub fitted: Vec<f64>,
    /// What remains of the prefix after subtracting `fitted`.
    pub residual: Vec<f64>,
    /// `‖f{k}‖₂` over the prefix for `k = 0..=iterations`.
    pub residual_norms: Vec<f64>,
    /// `‖f{0} - mean(f{0})‖₂` over the prefix.
    pub centered_norm: f64,
    /// Cumulative metrics after each accepted iteration.
    pub iteration_metrics: Vec<SplitMetrics>,
    pub final_metrics: SplitMetrics,
}

/// A forecast and its per-iteration components.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub values: Series,
    pub trend_components: Vec<Vec<f64>>,
    pub periodic_components: Vec<Vec<f64>>,
    /// Iterations whose fractional trend left its sign domain on the horizon
    /// and fell back to the nearer bracketing integer fit.
    pub trend_fallbacks: Vec<usize>,
}

impl Model {
    /// Continues the fitted grid for `horizon` samples.
    pub fn predict(&self, horizon: usize) -> Result<Forecast> {
        self.predict_with(horizon, self.iterations.len())
    }

    /// Forecast using only the first `iterations` accepted iterations.
    pub fn predict_with(&self, horizon: usize, iterations: usize) -> Result<Forecast> {
        let from = self.start_index + self.fit_length as i64;
        let range = from..from + horizon as i64;
        let mut total = vec![0.0; horizon];
        let mut trend_components = Vec::new();
        let mut periodic_components = Vec::new();
        let mut trend_fallbacks = Vec::new();
        for (k, it) in self.iterations.iter().take(iterations).enumerate() {
            let trend = match it.trend.evaluate(range.clone()) {
                Ok(v) => v,
                Err(_) => {
                    trend_fallbacks.push(k);
                    let p = it.trend.nearest_integer_fit();
                    range.clone().map(|x| p.value_at(x)).collect()
                }
            };
            let phase = self.fit_length % it.basic_element.period;
            let periodic = it.basic_element.tile(horizon, phase);
            for ((t, r), g) in total.iter_mut().zip(&trend).zip(&periodic) {
                *t += r + g;
            }
            trend_components.push(trend);
            periodic_components.push(periodic);
        }
        Ok(Forecast {
            values: Series::with_start(total, from)?,
            trend_components,
            periodic_components,
            trend_fallbacks,
        })
    }

    /// Semi-periods of the accepted iterations, in order.
    pub fn semi_periods(&self) -> Vec<usize> {
        self.iterations.iter().map(|it| it.semi_period).collect()
    }
}

/// Convenience wrapper around [`Model::predict`].
pub fn predict(model: &Model, horizon: usize) -> Result<Forecast> {
    model.predict(horizon)
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn centered_l2(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt()
}

struct LoopState {
    prefix: Series,
    window: usize,
    fitted: Vec<f64>,
    residual: Vec<f64>,
    iterations: Vec<IterationResult>,
    residual_norms: Vec<f64>,
    infeasible_counts: Vec<usize>,
}

impl LoopState {
    fn new(series: &Series, options: &FitOptions) -> Result<Self> {
        options.validate()?;
        if options.test_length >= series.len() {
            return Err(Error::InsufficientData {
                what: "fit",
                needed: options.test_length + MIN_FIT_LENGTH,
                got: series.len(),
            });
        }
        let prefix_len = series.len() - options.test_length;
        if prefix_len < MIN_FIT_LENGTH {
            return Err(Error::InsufficientData {
                what: "fit (excluding test)",
                needed: MIN_FIT_LENGTH,
                got: prefix_len,
            });
        }
        for &ratio in &options.validation_ratios {
            SplitSpec::new(ratio, 0).lengths(prefix_len)?;
        }
        let window = options
            .validation_ratios
            .iter()
            .map(|&r| validation_length(r, prefix_len))
            .min()
            .expect("ratios validated nonempty");
        let prefix = series.slice(0..prefix_len);
        let residual = prefix.values().to_vec();
        Ok(Self {
            window,
            fitted: vec![0.0; prefix_len],
            residual_norms: vec![l2(&residual)],
            residual,
            prefix,
            iterations: Vec::new(),
            infeasible_counts: Vec::new(),
        })
    }

    fn context(&self) -> CandidateContext {
        CandidateContext::from_parts(
            self.prefix.values(),
            &self.fitted,
            &self.residual,
            self.prefix.start_index(),
            self.window,
        )
    }

    fn accept(&mut self, it: IterationResult) {
        for ((f, r), c) in self.fitted.iter_mut().zip(self.residual.iter_mut()).zip(it.component()) {
            *f += c;
            *r -= c;
        }
        self.residual_norms.push(l2(&self.residual));
        self.iterations.push(it);
    }

    fn into_model(self, series: &Series, options: &FitOptions, mode: FitMode, stop_reason: StopReason) -> Model {
        let mut model = Model {
            mode,
            options: options.clone(),
            start_index: self.prefix.start_index(),
            fit_length: self.prefix.len(),
            common_window: self.window,
            iterations: self.iterations,
            stop_reason,
            infeasible_counts: self.infeasible_counts,
            fitted: self.fitted,
            residual: self.residual,
            residual_norms: self.residual_norms,
            centered_norm: centered_l2(self.prefix.values()),
            iteration_metrics: Vec::new(),
            final_metrics: SplitMetrics {
                train: None,
                validation: None,
                test: None,
            },
        };
        // The test window is read here and nowhere else.
        let test = &series.values()[model.fit_length..];
        let mut cumulative = vec![0.0; model.fit_length];
        for k in 0..model.iterations.len() {
            for (c, v) in cumulative.iter_mut().zip(model.iterations[k].component()) {
                *c += v;
            }
            let m = split_metrics(&model, self.prefix.values(), &cumulative, test, k + 1);
            model.iteration_metrics.push(m);
        }
        model.final_metrics = split_metrics(
            &model,
            self.prefix.values(),
            &model.fitted,
            test,
            model.iterations.len(),
        );
        model
    }
}

fn split_metrics(model: &Model, prefix: &[f64], fitted: &[f64], test: &[f64], iterations: usize) -> SplitMetrics {
    let cut = model.fit_length - model.common_window;
    let test = model
        .predict_with(test.len(), iterations)
        .ok()
        .and_then(|f| error_metrics(test, f.values.values()).ok());
    SplitMetrics {
        train: error_metrics(&prefix[..cut], &fitted[..cut]).ok(),
        validation: error_metrics(&prefix[cut..], &fitted[cut..]).ok(),
        test,
    }
}

/// Fits the iterative model on everything except the last
/// `options.test_length` samples.
pub fn fit(series: &Series, options: &FitOptions) -> Result<Model> {
    let mut state = LoopState::new(series, options)?;
    let mut previous_best: Option<f64> = None;
    let mut stop = StopReason::MaxIterations;
    for iteration in 1..=options.max_iterations {
        let ctx = state.context();
        let grid = options.integer_grid();
        let results = evaluate_grid(&ctx, &grid, options.parallel);
        let mut infeasible = results.iter().filter(|r| r.is_none()).count();
        let Some(best_integer) = select_feasible(&results).cloned() else {
            state.infeasible_counts.push(infeasible);
            if iteration == 1 {
                return Err(Error::IterationFailed { iteration });
            }
            stop = StopReason::IterationFailed { iteration };
            break;
        };
        let fractional = options.fractional_candidates(&best_integer.config);
        let refined = evaluate_grid(&ctx, &fractional, options.parallel);
        infeasible += refined.iter().filter(|r| r.is_none()).count();
        state.infeasible_counts.push(infeasible);
        let mut pool = vec![Some(best_integer)];
        pool.extend(refined);
        let best = select_feasible(&pool).cloned().expect("pool holds the integer winner");

        if options.stop_on_no_improvement {
            if let Some(prev) = previous_best {
                if best.window_smape >= prev {
                    stop = StopReason::NoImprovement { iteration };
                    break;
                }
            }
        }
        previous_best = Some(best.window_smape);
        state.accept(best);
    }
    Ok(state.into_model(series, options, FitMode::Standard, stop))
}

/// Like [`fit`], but only accepts a candidate if it leaves a residual norm
/// strictly below half of the previous one (half of the centered input norm
/// for the first iteration), so `‖f{k}‖₂ ≤ 0.5^k · ‖f{0} − mean‖₂`.
///
/// When no candidate of the usual grid qualifies, integer degrees above
/// `max_degree` are tried in turn. If none qualifies either, the iterations
/// accepted so far come back inside [`Error::GuaranteeUnreachable`].
pub fn fit_guaranteed(series: &Series, options: &FitOptions) -> Result<Model> {
    let mut state = LoopState::new(series, options)?;
    let initial_norm = state.residual_norms[0];
    let mut bound = centered_l2(state.prefix.values());
    let mut previous_best: Option<f64> = None;
    let mut stop = StopReason::MaxIterations;

    let admissible = |it: &IterationResult, residual: &[f64], bound: f64| -> bool {
        let after: Vec<f64> = residual.iter().zip(it.component()).map(|(r, c)| r - c).collect();
        let norm = l2(&after);
        norm < 0.5 * bound || norm <= CONVERGED_RELATIVE * initial_norm
    };

    for iteration in 1..=options.max_iterations {
        if bound <= CONVERGED_RELATIVE * initial_norm && iteration > 1 {
            stop = StopReason::Converged {
                iteration: iteration - 1,
            };
            break;
        }
        let ctx = state.context();
        let results = evaluate_grid(&ctx, &options.integer_grid(), options.parallel);
        let mut infeasible = results.iter().filter(|r| r.is_none()).count();
        let mut pool: Vec<IterationResult> = results
            .iter()
            .flatten()
            .filter(|it| admissible(it, &state.residual, bound))
            .cloned()
            .collect();

        let anchor = select_configuration(&pool)
            .or_else(|| select_feasible(&results))
            .map(|it| it.config);
        if let Some(anchor) = anchor {
            let refined = evaluate_grid(&ctx, &options.fractional_candidates(&anchor), options.parallel);
            infeasible += refined.iter().filter(|r| r.is_none()).count();
            pool.extend(
                refined
                    .into_iter()
                    .flatten()
                    .filter(|it| admissible(it, &state.residual, bound)),
            );
        }

        // Raise the degree past the usual grid until something halves the residual.
        let max_train = options
            .validation_ratios
            .iter()
            .filter_map(|&r| SplitSpec::new(r, 0).lengths(ctx.len()).ok())
            .map(|l| l.train)
            .max()
            .unwrap_or(0);
        let mut degree = options.max_degree + 1;
        while pool.is_empty() && degree < max_train {
            // Adding columns never improves conditioning, so the first
            // singular fit ends the climb.
            if let Err(Error::SingularFit { .. }) = fit_values(&ctx.residual[..max_train], ctx.start_index, degree) {
                break;
            }
            let grid = options.grid_for_degrees(std::iter::once(degree));
            let results = evaluate_grid(&ctx, &grid, options.parallel);
            infeasible += results.iter().filter(|r| r.is_none()).count();
            pool.extend(
                results
                    .into_iter()
                    .flatten()
                    .filter(|it| admissible(it, &state.residual, bound)),
            );
            degree += 1;
        }
        state.infeasible_counts.push(infeasible);

        let Some(best) = select_configuration(&pool).cloned() else {
            let stop = StopReason::GuaranteeUnreachable { iteration };
            let partial = state.into_model(series, options, FitMode::Guaranteed, stop);
            return Err(Error::GuaranteeUnreachable {
                iteration,
                partial: Box::new(partial),
            });
        };
        if options.stop_on_no_improvement {
            if let Some(prev) = previous_best {
                if best.window_smape >= prev {
                    stop = StopReason::NoImprovement { iteration };
                    break;
                }
            }
        }
        previous_best = Some(best.window_smape);
        state.accept(best);
        bound = *state.residual_norms.last().expect("pushed on accept");
        if bound <= CONVERGED_RELATIVE * initial_norm {
            stop = StopReason::Converged { iteration };
            break;
        }
    }
    Ok(state.into_model(series, options, FitMode::Guaranteed, stop))
}
