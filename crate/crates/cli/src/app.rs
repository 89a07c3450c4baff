//! The command-line surface. `main.rs` only forwards process arguments here,
//! so the commands can also be driven in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use selfapprox::period::default_max_period;
use selfapprox::{fit, fit_guaranteed, scan_semi_period, synth, Error, FitOptions, Model, Recipe};

use crate::{
    describe_metrics, emit, forecast_csv, load_dataset, plot_csv, write_atomic, CliError, ColumnRef, DatasetSpec,
    Result, RunManifest,
};

#[derive(Parser)]
#[command(name = "selfapprox", version, about = "Forecasting by self approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// CSV file to read.
    file: PathBuf,
    /// Value column, by 0-based index or header name. Defaults to the last column.
    #[arg(long = "col")]
    column: Option<ColumnRef>,
    /// Whether the first row is a header: yes, no or auto.
    #[arg(long, default_value = "auto")]
    header: String,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl Input {
    fn spec(&self) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::new(&self.file);
        spec.value_column = self.column.clone();
        spec.has_header = match self.header.as_str() {
            "auto" => None,
            "yes" | "true" => Some(true),
            "no" | "false" => Some(false),
            other => {
                return Err(CliError::Column(format!(
                    "--header expects yes, no or auto, got '{other}'"
                )))
            }
        };
        spec.delimiter = u8::try_from(self.delimiter)
            .map_err(|_| CliError::Column(format!("delimiter '{}' is not a single byte", self.delimiter)))?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the LSG curve and the semi-period.
    Period {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 2)]
        tmin: usize,
        /// Largest candidate period, or "auto" for half the series length.
        #[arg(long, default_value = "auto")]
        tmax: String,
    },
    /// Run the iterative fit and write manifest, forecast and plot data.
    Fit {
        #[command(flatten)]
        input: Input,
        /// Samples held out at the end for the final test.
        #[arg(long, default_value_t = 0)]
        test: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.10,0.15,0.20,0.25")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        max_degree: usize,
        #[arg(long, default_value_t = 10)]
        frac_n: usize,
        #[arg(long, default_value_t = 10)]
        max_iter: usize,
        /// Decay of the exponential-recency weighting.
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        /// Only accept iterations that more than halve the residual norm.
        #[arg(long)]
        guaranteed: bool,
        /// Forecast horizon; defaults to the test length.
        #[arg(long)]
        horizon: Option<usize>,
        /// Evaluate candidates on a single thread.
        #[arg(long)]
        sequential: bool,
        #[arg(long, default_value = "selfapprox-out")]
        out: PathBuf,
    },
    /// Extend a fitted model from its manifest.
    Forecast {
        manifest: PathBuf,
        #[arg(long)]
        horizon: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic test signal.
    Synth {
        /// e.g. "trend=1,0.01;sin=24:1:0;saw=7:0.5;noise=0.01"
        #[arg(long)]
        recipe: String,
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to stderr. Returns the process exit code:
/// 0 on success, 2 for usage, input and numeric errors, 3 when the fit
/// could not run or its guarantee could not be met.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Period { input, tmin, tmax } => period(&input, tmin, &tmax, out),
        Command::Fit {
            input,
            test,
            ratios,
            max_degree,
            frac_n,
            max_iter,
            alpha,
            guaranteed,
            horizon,
            sequential,
            out: out_dir,
        } => {
            let options = FitOptions {
                max_iterations: max_iter,
                validation_ratios: ratios,
                max_degree,
                fractional_n: frac_n,
                alpha,
                test_length: test,
                parallel: !sequential,
                ..FitOptions::default()
            };
            fit_command(&input, options, guaranteed, horizon, &out_dir, out)
        }
        Command::Forecast {
            manifest,
            horizon,
            out: path,
        } => forecast(&manifest, horizon, path.as_deref(), out),
        Command::Synth {
            recipe,
            len,
            seed,
            out: path,
        } => {
            let recipe: Recipe = recipe.parse()?;
            let series = synth(&recipe, len, seed)?;
            write_atomic(&path, plot_csv(0, series.values()).as_bytes())?;
            Ok(0)
        }
    }
}

fn period(input: &Input, tmin: usize, tmax: &str, out: &mut dyn Write) -> Result<i32> {
    let series = load_dataset(&input.spec()?)?.series;
    let tmax = if tmax == "auto" {
        default_max_period(series.len())
    } else {
        tmax.parse()
            .map_err(|_| CliError::Column(format!("--tmax expects an integer or 'auto', got '{tmax}'")))?
    };
    let scan = scan_semi_period(series.values(), tmin, tmax)?;
    let mut text = String::from("period,score\n");
    for (t, score) in scan.curve() {
        text.push_str(&format!("{t},{score}\n"));
    }
    text.push_str(&format!("# semi_period={}\n", scan.best_period));
    out.write_all(text.as_bytes())?;
    Ok(0)
}

fn fit_command(
    input: &Input,
    options: FitOptions,
    guaranteed: bool,
    horizon: Option<usize>,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let dataset = load_dataset(&input.spec()?)?;
    let series = &dataset.series;
    let (model, unreachable) = match if guaranteed {
        fit_guaranteed(series, &options)
    } else {
        fit(series, &options)
    } {
        Ok(m) => (m, None),
        Err(Error::GuaranteeUnreachable { iteration, partial }) => (*partial, Some(iteration)),
        Err(e) => return Err(e.into()),
    };
    let horizon = horizon.unwrap_or(options.test_length);
    let forecast = model.predict(horizon)?;
    let manifest = RunManifest::new(&model, &dataset, &input.file, &forecast);
    let paths = emit(dir, &manifest, &forecast, series)?;
    print_summary(&model, out)?;
    for path in [
        &paths.manifest,
        &paths.forecast,
        &paths.plot_actual,
        &paths.plot_predicted,
    ] {
        writeln!(out, "wrote {}", path.display())?;
    }
    if let Some(iteration) = unreachable {
        eprintln!("error: no candidate halves the residual at iteration {iteration}; partial model written");
        return Ok(3);
    }
    Ok(0)
}

fn print_summary(model: &Model, out: &mut dyn Write) -> Result<()> {
    for (k, it) in model.iterations.iter().enumerate() {
        writeln!(
            out,
            "iteration {}: T*={} [{}] common-window SMAPE={:.6}",
            k + 1,
            it.semi_period,
            it.config,
            it.window_smape
        )?;
    }
    writeln!(out, "stop: {:?}", model.stop_reason)?;
    let m = &model.final_metrics;
    writeln!(out, "{}", describe_metrics("train", m.train.as_ref()))?;
    writeln!(out, "{}", describe_metrics("validation", m.validation.as_ref()))?;
    writeln!(out, "{}", describe_metrics("test", m.test.as_ref()))?;
    Ok(())
}

fn forecast(manifest: &Path, horizon: usize, path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let manifest = RunManifest::read(manifest)?;
    let forecast = manifest.model.predict(horizon)?;
    let text = forecast_csv(&forecast, None);
    match path {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}
