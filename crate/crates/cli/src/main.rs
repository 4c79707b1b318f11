use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use wmc_cli::pipeline::{self, ModelFile, StationModel};
use wmc_cli::simulate::{simulate_csv, SimulationConfig};
use wmc_cli::{ingest, CliError, InputKind, MaxLag, OutputFormat, RunConfig, StationDataset};
use wmc_core::{
    steady_state_lag, ClassificationScheme, EstimationMode, Grouping, IterationMode, WeightBasis,
    WmcModel, YearMonth,
};

/// Weighted Markov chain forecasts of monthly drought classes.
///
/// Inputs are CSV files with a header row: raw climate
/// (`station,period,precip_mm,tmean_c` or `station,period,aggregate`), a
/// standardized index (`station,period,index`) or classes
/// (`station,period,class`). Periods are YYYY-MM; empty fields are missing.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
/// Set WMC_LOG (e.g. `info`, `debug`) for progress messages on stderr.
#[derive(Debug, Parser)]
#[command(name = "wmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit distributions to raw monthly aggregates and write the standardized index
    Standardize(InputArgs),
    /// Convert raw or index input into drought classes
    Classify(InputArgs),
    /// Estimate transition matrices and lag weights and save a model file
    Fit(InputArgs),
    /// Forecast the next month(s) from data or a saved model
    Predict(ModelArgs),
    /// Rolling-origin backtest against lag-1 Markov and climatology baselines
    Backtest(InputArgs),
    /// Stationary distribution of the one-step chain and the steady-state lag
    Steady(ModelArgs),
    /// Run everything and write report.json, summary.txt, forecast.csv and confusion.csv
    Report(ReportArgs),
    /// Write a seeded synthetic raw-climate CSV
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input CSV file
    input: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Input CSV file; omit when --model is given
    input: Option<PathBuf>,
    /// Saved model file written by `fit`
    #[arg(long, conflicts_with = "input")]
    model: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Input CSV file; omit when --model is given
    input: Option<PathBuf>,
    /// Saved model file written by `fit`
    #[arg(long, conflicts_with = "input")]
    model: Option<PathBuf>,
    /// Directory receiving the report files
    #[arg(long, default_value = "wmc-report")]
    out_dir: PathBuf,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output file (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    stations: usize,
    /// First month, YYYY-MM
    #[arg(long, default_value = "1955-01")]
    start: YearMonth,
    #[arg(long, default_value_t = 756)]
    months: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    RawClimate,
    Index,
    Classes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Kappa,
    Z,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupingArg {
    PerCalendarMonth,
    Pooled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimationArg {
    Direct,
    MatrixPower,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IterationArg {
    PointFeedback,
    DistributionPropagation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

/// Settings shared by every data command. Flags override values read from
/// `--config`.
#[derive(Debug, Args)]
struct Opts {
    /// JSON run configuration; any field may be omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input kind; detected from the header when omitted
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Number of lags (1-60) or `auto` for the steady-state lag [default: 7]
    #[arg(long)]
    max_lag: Option<MaxLag>,
    /// Tolerance used by `--max-lag auto` [default: 0.01]
    #[arg(long)]
    auto_tolerance: Option<f64>,
    /// Largest lag searched by `--max-lag auto` [default: 12]
    #[arg(long)]
    auto_cap: Option<usize>,
    /// Statistic normalized into lag weights [default: kappa]
    #[arg(long, value_enum)]
    basis: Option<BasisArg>,
    /// JSON classification scheme with `labels` and `cuts`
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Fit one distribution per calendar month or one for all months [default: per-calendar-month]
    #[arg(long, value_enum)]
    grouping: Option<GroupingArg>,
    /// Smallest sample per fitting group [default: 20]
    #[arg(long)]
    min_samples: Option<usize>,
    /// Shift non-positive samples so gamma and log-normal can be fitted
    #[arg(long)]
    shift_nonpositive: bool,
    /// Additive smoothing of transition counts [default: 0]
    #[arg(long)]
    smoothing: Option<f64>,
    /// Transition estimation for lags above one [default: direct]
    #[arg(long, value_enum)]
    estimation: Option<EstimationArg>,
    /// Months ahead to forecast (1-120) [default: 1]
    #[arg(long)]
    horizon: Option<usize>,
    /// How forecasts beyond one month are chained [default: point-feedback]
    #[arg(long, value_enum)]
    iteration: Option<IterationArg>,
    /// Final months used as backtest targets [default: 12]
    #[arg(long)]
    holdout: Option<usize>,
    /// Fit once on the first training window instead of before every fold
    #[arg(long)]
    no_refit: bool,
    /// Observed months required per lag in the first training window [default: 10]
    #[arg(long)]
    min_train_factor: Option<usize>,
    /// Seed recorded in the report [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Output format for predict, backtest and steady [default: json]
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl Opts {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = read(path)?;
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let mut merged =
                    serde_json::to_value(RunConfig::default()).expect("config serializes");
                if let (Some(base), Some(over)) = (merged.as_object_mut(), value.as_object()) {
                    for (k, v) in over {
                        base.insert(k.clone(), v.clone());
                    }
                }
                serde_json::from_value(merged)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(path) = &self.scheme {
            let text = read(path)?;
            cfg.scheme = serde_json::from_str::<ClassificationScheme>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
                .and_then(|s| {
                    ClassificationScheme::new(s.labels().to_vec(), s.cuts().to_vec())
                        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
                })?;
        }
        if let Some(v) = self.max_lag {
            cfg.max_lag = v;
        }
        if let Some(v) = self.auto_tolerance {
            cfg.auto_tolerance = v;
        }
        if let Some(v) = self.auto_cap {
            cfg.auto_cap = v;
        }
        if let Some(v) = self.basis {
            cfg.weight_basis = match v {
                BasisArg::Kappa => WeightBasis::Kappa,
                BasisArg::Z => WeightBasis::Z,
            };
        }
        if let Some(v) = self.grouping {
            cfg.grouping = match v {
                GroupingArg::PerCalendarMonth => Grouping::PerCalendarMonth,
                GroupingArg::Pooled => Grouping::Pooled,
            };
        }
        if let Some(v) = self.min_samples {
            cfg.min_samples = v;
        }
        if self.shift_nonpositive {
            cfg.shift_nonpositive = true;
        }
        if let Some(v) = self.smoothing {
            cfg.smoothing = v;
        }
        if let Some(v) = self.estimation {
            cfg.estimation = match v {
                EstimationArg::Direct => EstimationMode::Direct,
                EstimationArg::MatrixPower => EstimationMode::MatrixPower,
            };
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.iteration {
            cfg.iteration = match v {
                IterationArg::PointFeedback => IterationMode::PointFeedback,
                IterationArg::DistributionPropagation => IterationMode::DistributionPropagation,
            };
        }
        if let Some(v) = self.holdout {
            cfg.holdout = v;
        }
        if self.no_refit {
            cfg.refit = false;
        }
        if let Some(v) = self.min_train_factor {
            cfg.min_train_factor = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.format {
            cfg.format = match v {
                FormatArg::Json => OutputFormat::Json,
                FormatArg::Text => OutputFormat::Text,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn kind(&self) -> Option<InputKind> {
        self.kind.map(|k| match k {
            KindArg::RawClimate => InputKind::RawClimate,
            KindArg::Index => InputKind::Index,
            KindArg::Classes => InputKind::Classes,
        })
    }

    fn load(&self, input: &Path, cfg: &RunConfig) -> Result<Vec<StationDataset>, CliError> {
        let datasets = ingest(input, self.kind(), &cfg.scheme)?;
        info!(
            "read {} station(s) from {}",
            datasets.len(),
            input.display()
        );
        Ok(datasets)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(output: Option<&Path>, contents: String) -> Result<(), CliError> {
    match output {
        Some(path) => pipeline::write_files(&[(path.to_path_buf(), contents)]),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

type Loaded = (StationModel, WmcModel, Vec<Option<usize>>);

/// Models and histories either fitted from an input file or read from a model file.
fn models(
    input: Option<&Path>,
    model: Option<&Path>,
    opts: &Opts,
    cfg: &RunConfig,
) -> Result<Vec<Loaded>, CliError> {
    match (input, model) {
        (_, Some(path)) => ModelFile::read(path)?
            .stations
            .into_iter()
            .map(|sm| {
                let (m, h) = sm.to_model()?;
                Ok((sm, m, h))
            })
            .collect(),
        (Some(input), None) => opts
            .load(input, cfg)?
            .iter()
            .map(|d| {
                let (seq, _) = pipeline::to_classes(d, cfg)?;
                let model = WmcModel::fit(&seq, &cfg.model_config())
                    .map_err(|e| CliError::station(&d.station_id, e))?;
                let history = seq.states().to_vec();
                Ok((StationModel::from_fit(&seq, &model), model, history))
            })
            .collect(),
        (None, None) => Err(CliError::Usage("give an input file or --model".into())),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Standardize(a) => {
            let cfg = a.opts.run_config()?;
            let mut csv = String::from("station,period,index\n");
            let mut fitted = Vec::new();
            for d in a.opts.load(&a.input, &cfg)? {
                let (index, models) = pipeline::to_index(&d, &cfg)?;
                let Some(index) = index else {
                    return Err(CliError::Usage("class input cannot be standardized".into()));
                };
                for (i, v) in index.values().iter().enumerate() {
                    let v = v.map_or(String::new(), |x| format!("{x:.6}"));
                    let _ = writeln!(csv, "{},{},{v}", d.station_id, index.period(i));
                }
                fitted.push(serde_json::json!({ "station": d.station_id, "models": models.map(|m| m.models) }));
            }
            match cfg.format {
                OutputFormat::Json => {
                    let doc = serde_json::json!({
                        "software": pipeline::SOFTWARE,
                        "version": pipeline::VERSION,
                        "config": cfg,
                        "stations": fitted,
                    });
                    match &a.output {
                        Some(path) => pipeline::write_files(&[
                            (path.clone(), csv),
                            (path.with_extension("models.json"), pipeline::to_json(&doc)),
                        ]),
                        None => emit(None, csv),
                    }
                }
                OutputFormat::Text => emit(a.output.as_deref(), csv),
            }
        }
        Command::Classify(a) => {
            let cfg = a.opts.run_config()?;
            let mut csv = String::from("station,period,class\n");
            for d in a.opts.load(&a.input, &cfg)? {
                let (seq, _) = pipeline::to_classes(&d, &cfg)?;
                for (i, s) in seq.states().iter().enumerate() {
                    let label = s.map_or("", |s| seq.label(s));
                    let _ = writeln!(csv, "{},{},{label}", seq.station_id(), seq.period(i));
                }
            }
            emit(a.output.as_deref(), csv)
        }
        Command::Fit(a) => {
            let cfg = a.opts.run_config()?;
            let stations = models(Some(&a.input), None, &a.opts, &cfg)?
                .into_iter()
                .map(|(sm, _, _)| sm)
                .collect();
            emit(
                a.output.as_deref(),
                pipeline::to_json(&ModelFile::new(stations)),
            )
        }
        Command::Predict(a) => {
            let cfg = a.opts.run_config()?;
            let mut out = Vec::new();
            for (sm, model, history) in
                models(a.input.as_deref(), a.model.as_deref(), &a.opts, &cfg)?
            {
                let records =
                    pipeline::forecast_records(&model, &history, sm.last_period, &sm.classes, &cfg)
                        .map_err(|e| CliError::station(&sm.station, e))?;
                out.push((sm, records));
            }
            let text = match cfg.format {
                OutputFormat::Json => pipeline::to_json(&serde_json::json!({
                    "software": pipeline::SOFTWARE,
                    "version": pipeline::VERSION,
                    "config": cfg,
                    "stations": out.iter().map(|(sm, r)| serde_json::json!({
                        "station": sm.station,
                        "classes": sm.classes,
                        "forecasts": r,
                    })).collect::<Vec<_>>(),
                })),
                OutputFormat::Text => {
                    let mut s = String::new();
                    for (sm, records) in &out {
                        let _ = writeln!(s, "Station {}", sm.station);
                        for r in records {
                            pipeline::render_trace(&mut s, &sm.classes, r);
                            s.push('\n');
                        }
                    }
                    s
                }
            };
            emit(a.output.as_deref(), text)
        }
        Command::Backtest(a) => {
            let cfg = a.opts.run_config()?;
            let mut reports = Vec::new();
            for d in a.opts.load(&a.input, &cfg)? {
                let (seq, _) = pipeline::to_classes(&d, &cfg)?;
                let report = wmc_core::backtest(&seq, &cfg.backtest_config())
                    .map_err(|e| CliError::station(&d.station_id, e))?;
                reports.push((seq.labels().to_vec(), report));
            }
            let text = match cfg.format {
                OutputFormat::Json => pipeline::to_json(&serde_json::json!({
                    "software": pipeline::SOFTWARE,
                    "version": pipeline::VERSION,
                    "config": cfg,
                    "stations": reports.iter().map(|(_, r)| r).collect::<Vec<_>>(),
                })),
                OutputFormat::Text => {
                    let mut s = String::new();
                    for (labels, b) in &reports {
                        let _ = writeln!(
                            s,
                            "Station {}: {} folds, {} skipped",
                            b.station_id,
                            b.folds.len(),
                            b.skipped_folds
                        );
                        for sc in &b.scores {
                            let _ = writeln!(
                                s,
                                "  {:<12} {:>3}/{:<3} hit rate {:.3}",
                                sc.method.name(),
                                sc.hits,
                                sc.scored,
                                sc.hit_rate
                            );
                        }
                        let _ = writeln!(
                            s,
                            "  confusion (rows observed, columns predicted): {}",
                            labels.join(" ")
                        );
                        for (i, row) in b.confusion.iter().enumerate() {
                            let counts: Vec<String> = row.iter().map(u64::to_string).collect();
                            let _ = writeln!(s, "  {:<4}{}", labels[i], counts.join(" "));
                        }
                    }
                    s
                }
            };
            emit(a.output.as_deref(), text)
        }
        Command::Steady(a) => {
            let cfg = a.opts.run_config()?;
            let mut rows = Vec::new();
            for (sm, model, _) in models(a.input.as_deref(), a.model.as_deref(), &a.opts, &cfg)? {
                let st = pipeline::stationary_of(&model)
                    .map_err(|e| CliError::station(&sm.station, e))?;
                let lag = steady_state_lag(&model.matrices, cfg.auto_tolerance).ok();
                rows.push((sm, st, lag));
            }
            let text = match cfg.format {
                OutputFormat::Json => pipeline::to_json(&serde_json::json!({
                    "software": pipeline::SOFTWARE,
                    "version": pipeline::VERSION,
                    "config": cfg,
                    "stations": rows.iter().map(|(sm, st, lag)| serde_json::json!({
                        "station": sm.station,
                        "classes": sm.classes,
                        "stationary": st,
                        "steady_state_lag": lag,
                    })).collect::<Vec<_>>(),
                })),
                OutputFormat::Text => {
                    let mut s = String::new();
                    for (sm, st, lag) in &rows {
                        let _ = writeln!(
                            s,
                            "Station {} ({}, residual {:.2e})",
                            sm.station, st.method, st.residual
                        );
                        for (label, p) in sm.classes.iter().zip(&st.probabilities) {
                            let _ = writeln!(s, "  {label:<4}{p:.4}");
                        }
                        match lag {
                            Some(l) => {
                                let _ = writeln!(s, "  steady-state lag {l}");
                            }
                            None => s.push_str("  steady-state lag unavailable\n"),
                        }
                    }
                    s
                }
            };
            emit(a.output.as_deref(), text)
        }
        Command::Report(a) => {
            let cfg = a.opts.run_config()?;
            let report = match (&a.input, &a.model) {
                (Some(input), None) => pipeline::run_pipeline(&a.opts.load(input, &cfg)?, &cfg)?,
                (None, Some(path)) => {
                    let mut stations = Vec::new();
                    for sm in ModelFile::read(path)?.stations {
                        pipeline::check_labels(&cfg.scheme, &sm.classes)?;
                        let (model, history) = sm.to_model()?;
                        let seq = sm.sequence(&history)?;
                        stations.push(pipeline::analyse(&seq, &model, "model", None, &cfg, false)?);
                    }
                    pipeline::report(stations, &cfg)
                }
                _ => return Err(CliError::Usage("give an input file or --model".into())),
            };
            pipeline::write_files(&pipeline::report_files(&a.out_dir, &report))?;
            info!("wrote report to {}", a.out_dir.display());
            Ok(())
        }
        Command::Simulate(a) => {
            if a.stations == 0 || a.months == 0 {
                return Err(CliError::Usage(
                    "stations and months must be positive".into(),
                ));
            }
            let cfg = SimulationConfig {
                seed: a.seed,
                start: a.start,
                months: a.months,
                stations: a.stations,
            };
            emit(a.output.as_deref(), simulate_csv(&cfg))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WMC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !e.to_string().contains(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
