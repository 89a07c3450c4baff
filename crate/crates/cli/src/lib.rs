//! File-level plumbing for the `selfapprox` command: CSV ingestion, the run
//! manifest, and forecast/plot emission.
//!
//! # Manifest schema (`manifest.json`)
//!
//! | key          | content                                                              |
//! |--------------|----------------------------------------------------------------------|
//! | `schema`     | `"selfapprox-manifest/1"`                                            |
//! | `dataset`    | source path, value column, data row count, SHA-256 of the file bytes |
//! | `ranges`     | half-open sample ranges of `train`, `validation` (common window), `test` |
//! | `iterations` | per accepted iteration: configuration, semi-period, scores          |
//! | `table`      | `train_nmse`, `train_smape`, `test_nmse`, `test_smape`               |
//! | `metrics`    | full metric reports on train, validation and test                   |
//! | `stop`       | why the iteration loop ended                                         |
//! | `model`      | the complete fitted model; `forecast` rebuilds predictions from it   |
//!
//! Numbers are written in shortest round-trip decimal form, so re-reading any
//! emitted file reproduces the exact `f64` values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub mod app;

use selfapprox::{Forecast, IterationResult, MetricReport, Model, Series, SplitMetrics, StopReason};

pub const MANIFEST_SCHEMA: &str = "selfapprox-manifest/1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: row {row}: cannot parse '{cell}' in column {column} as a finite number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        cell: String,
    },
    #[error("{path}: row {row} has no column {column}")]
    MissingCell { path: PathBuf, row: usize, column: usize },
    #[error("{0}: no data rows")]
    Empty(PathBuf),
    #[error("{0}")]
    Column(String),
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] selfapprox::Error),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 when the data were readable but the fit was infeasible.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(selfapprox::Error::IterationFailed { .. })
            | CliError::Core(selfapprox::Error::GuaranteeUnreachable { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(s.parse::<usize>()
            .map(ColumnRef::Index)
            .unwrap_or_else(|_| ColumnRef::Name(s.to_string())))
    }
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Name(n) => f.write_str(n),
        }
    }
}

/// Where and how to read a series. Decimal points are always `.`.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// `None` picks the last column.
    pub value_column: Option<ColumnRef>,
    /// `None` treats the first row as a header when its value cell is not a number.
    pub has_header: Option<bool>,
    pub delimiter: u8,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            value_column: None,
            has_header: None,
            delimiter: b',',
        }
    }

    pub fn column(mut self, column: ColumnRef) -> Self {
        self.value_column = Some(column);
        self
    }

    pub fn header(mut self, has_header: bool) -> Self {
        self.has_header = Some(has_header);
        self
    }
}

/// Row count and content hash of an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub sha256: String,
}

/// A loaded series plus what is needed to identify its source.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Series,
    pub value_column: usize,
    pub column_name: Option<String>,
    pub fingerprint: Fingerprint,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_csv(spec: &DatasetSpec) -> Result<Series> {
    Ok(load_dataset(spec)?.series)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let path = &spec.path;
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(spec.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(record);
    }
    let Some(first) = rows.first() else {
        return Err(CliError::Empty(path.clone()));
    };

    let has_header = match (&spec.value_column, spec.has_header) {
        (_, Some(h)) => h,
        (Some(ColumnRef::Name(_)), None) => true,
        (Some(ColumnRef::Index(i)), None) => first.get(*i).is_some_and(|c| parse_cell(c).is_none()),
        (None, None) => first.iter().next_back().is_some_and(|c| parse_cell(c).is_none()),
    };
    let header = has_header.then(|| first.clone());
    let value_column = match &spec.value_column {
        Some(ColumnRef::Index(i)) => *i,
        Some(ColumnRef::Name(name)) => {
            let header = header
                .as_ref()
                .ok_or_else(|| CliError::Column(format!("column '{name}' requested but the file has no header")))?;
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Column(format!("no column named '{name}' in {}", path.display())))?
        }
        None => first.len() - 1,
    };
    let column_name = header.as_ref().and_then(|h| h.get(value_column)).map(str::to_string);
    let data = &rows[usize::from(has_header)..];
    if data.is_empty() {
        return Err(CliError::Empty(path.clone()));
    }

    let mut values = Vec::with_capacity(data.len());
    let mut labels = Vec::new();
    let with_labels = value_column != 0;
    for (k, record) in data.iter().enumerate() {
        let row = k + 1 + usize::from(has_header);
        let cell = record.get(value_column).ok_or_else(|| CliError::MissingCell {
            path: path.clone(),
            row,
            column: value_column,
        })?;
        let v = parse_cell(cell).ok_or_else(|| CliError::Parse {
            path: path.clone(),
            row,
            column: value_column,
            cell: cell.to_string(),
        })?;
        values.push(v);
        if with_labels {
            labels.push(record.get(0).unwrap_or_default().to_string());
        }
    }
    let mut series = Series::new(values)?;
    if with_labels {
        series = series.with_labels(labels)?;
    }
    Ok(Dataset {
        fingerprint: Fingerprint {
            rows: series.len(),
            sha256: sha256_hex(&bytes),
        },
        series,
        value_column,
        column_name,
    })
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub value_column: String,
    #[serde(flatten)]
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub train: [usize; 2],
    pub validation: [usize; 2],
    pub test: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub configuration: String,
    pub validation_ratio: f64,
    pub period_method: String,
    pub weighting: String,
    pub trend_degree: f64,
    pub semi_period: usize,
    pub period_score: f64,
    pub validation_smape: f64,
    pub window_smape: f64,
    pub residual_norm: f64,
}

/// The four columns of the classic results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub train_nmse: Option<f64>,
    pub train_smape: Option<f64>,
    pub test_nmse: Option<f64>,
    pub test_smape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub dataset: DatasetInfo,
    pub ranges: Ranges,
    pub iterations: Vec<IterationSummary>,
    pub table: TableRow,
    pub metrics: SplitMetrics,
    pub stop: StopReason,
    pub trend_fallbacks: Vec<usize>,
    pub model: Model,
}

fn summarize(k: usize, it: &IterationResult, residual_norm: f64) -> IterationSummary {
    IterationSummary {
        iteration: k + 1,
        configuration: it.config.to_string(),
        validation_ratio: it.config.validation_ratio,
        period_method: it.config.period_method.name().to_string(),
        weighting: it.config.weighting.name(),
        trend_degree: it.config.trend.effective_degree(),
        semi_period: it.semi_period,
        period_score: it.period_score,
        validation_smape: it.validation_smape,
        window_smape: it.window_smape,
        residual_norm,
    }
}

impl RunManifest {
    pub fn new(model: &Model, dataset: &Dataset, path: &Path, forecast: &Forecast) -> Self {
        let cut = model.fit_length - model.common_window;
        let m = &model.final_metrics;
        let value_column = dataset
            .column_name
            .clone()
            .unwrap_or_else(|| dataset.value_column.to_string());
        RunManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            dataset: DatasetInfo {
                path: path.display().to_string(),
                value_column,
                fingerprint: dataset.fingerprint.clone(),
            },
            ranges: Ranges {
                train: [0, cut],
                validation: [cut, model.fit_length],
                test: [model.fit_length, model.fit_length + model.options.test_length],
            },
            iterations: model
                .iterations
                .iter()
                .enumerate()
                .map(|(k, it)| summarize(k, it, model.residual_norms[k + 1]))
                .collect(),
            table: TableRow {
                train_nmse: m.train.and_then(|r| r.nmse),
                train_smape: m.train.map(|r| r.smape),
                test_nmse: m.test.and_then(|r| r.nmse),
                test_smape: m.test.map(|r| r.smape),
            },
            metrics: *m,
            stop: model.stop_reason,
            trend_fallbacks: forecast.trend_fallbacks.clone(),
            model: model.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Manifest {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Forecast table: `index,[label,][actual,]predicted`, then
/// `component_trend_k,component_periodic_k` for each iteration `k`.
/// `actual` holds observed values where the horizon overlaps the data.
pub fn forecast_csv(forecast: &Forecast, observed: Option<&Series>) -> String {
    let start = forecast.values.start_index();
    let lookup = |index: i64| -> Option<(f64, Option<&str>)> {
        let s = observed?;
        let pos = usize::try_from(index - s.start_index()).ok()?;
        let v = *s.values().get(pos)?;
        Some((v, s.labels().map(|l| l[pos].as_str())))
    };
    let with_actual = (0..forecast.values.len()).any(|k| lookup(start + k as i64).is_some());
    let with_labels = observed.is_some_and(|s| s.labels().is_some()) && with_actual;

    let mut out = String::from("index");
    if with_labels {
        out.push_str(",label");
    }
    if with_actual {
        out.push_str(",actual");
    }
    out.push_str(",predicted");
    for k in 1..=forecast.trend_components.len() {
        out.push_str(&format!(",component_trend_{k},component_periodic_{k}"));
    }
    out.push('\n');
    for (k, predicted) in forecast.values.values().iter().enumerate() {
        let index = start + k as i64;
        let hit = lookup(index);
        out.push_str(&index.to_string());
        if with_labels {
            out.push(',');
            if let Some((_, Some(label))) = hit {
                out.push_str(&csv_field(label));
            }
        }
        if with_actual {
            out.push(',');
            if let Some((v, _)) = hit {
                out.push_str(&v.to_string());
            }
        }
        out.push_str(&format!(",{predicted}"));
        for (trend, periodic) in forecast.trend_components.iter().zip(&forecast.periodic_components) {
            out.push_str(&format!(",{},{}", trend[k], periodic[k]));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Two-column `index,value` file.
pub fn plot_csv(start_index: i64, values: &[f64]) -> String {
    let mut out = String::from("index,value\n");
    for (k, v) in values.iter().enumerate() {
        out.push_str(&format!("{},{v}\n", start_index + k as i64));
    }
    out
}

/// Paths written by [`emit`].
#[derive(Debug, Clone)]
pub struct Emitted {
    pub manifest: PathBuf,
    pub forecast: PathBuf,
    pub plot_actual: PathBuf,
    pub plot_predicted: PathBuf,
}

/// Writes the manifest, the forecast table and the actual/predicted plot
/// series into `dir`.
pub fn emit(dir: &Path, manifest: &RunManifest, forecast: &Forecast, series: &Series) -> Result<Emitted> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let model = &manifest.model;
    let paths = Emitted {
        manifest: dir.join("manifest.json"),
        forecast: dir.join("forecast.csv"),
        plot_actual: dir.join("plot_actual.csv"),
        plot_predicted: dir.join("plot_predicted.csv"),
    };
    let mut predicted = model.fitted.clone();
    predicted.extend_from_slice(forecast.values.values());

    write_atomic(&paths.manifest, manifest.to_json().as_bytes())?;
    write_atomic(&paths.forecast, forecast_csv(forecast, Some(series)).as_bytes())?;
    write_atomic(
        &paths.plot_actual,
        plot_csv(series.start_index(), series.values()).as_bytes(),
    )?;
    write_atomic(
        &paths.plot_predicted,
        plot_csv(model.start_index, &predicted).as_bytes(),
    )?;
    Ok(paths)
}

/// Formats a metric report line for terminal output.
pub fn describe_metrics(name: &str, report: Option<&MetricReport>) -> String {
    match report {
        None => format!("{name:<10} n/a"),
        Some(r) => format!(
            "{name:<10} n={:<6} SMAPE={:<12.6} NMSE={:<12} MSE={:<12.6e} MAE={:.6e}",
            r.n,
            r.smape,
            r.nmse.map_or("undefined".to_string(), |v| format!("{v:.6}")),
            r.mse,
            r.mae
        ),
    }
}
