//! Per-station pipeline and report emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wmc_core::{
    backtest, compare_steady, stationary_from, BacktestReport, ClassSequence, ClassificationScheme,
    Forecast, ForecastDistribution, ForecastTrace, IndexSeries, LagWeightProfile, Matrix,
    StationaryDistribution, StationaryOptions, SteadyComparison, TransitionMatrixSet, WeightBasis,
    WmcError, WmcModel, YearMonth,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ingest::{StationData, StationDataset};

pub const SOFTWARE: &str = "wmc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Index series and fitted distributions, present when the input was raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub models: Vec<wmc_core::FittedModel>,
}

/// Bring any input kind down to a class sequence.
pub fn to_index(
    dataset: &StationDataset,
    config: &RunConfig,
) -> Result<(Option<IndexSeries>, Option<Standardization>), CliError> {
    let station = &dataset.station_id;
    match &dataset.data {
        StationData::Raw(raw) => {
            let out = wmc_core::standardize(raw, config.grouping, &config.fit_config())
                .map_err(|e| CliError::station(station, e))?;
            Ok((
                Some(out.index),
                Some(Standardization { models: out.models }),
            ))
        }
        StationData::Index(index) => Ok((Some(index.clone()), None)),
        StationData::Classes(_) => Ok((None, None)),
    }
}

pub fn to_classes(
    dataset: &StationDataset,
    config: &RunConfig,
) -> Result<(ClassSequence, Option<Standardization>), CliError> {
    if let StationData::Classes(seq) = &dataset.data {
        return Ok((seq.clone(), None));
    }
    let (index, standardization) = to_index(dataset, config)?;
    let index = index.expect("non-class input yields an index");
    let seq = config
        .scheme
        .classify_series(&index)
        .map_err(|e| CliError::station(&dataset.station_id, e))?;
    Ok((seq, standardization))
}

/// A fitted or loaded model together with the history it forecasts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationModel {
    pub station: String,
    pub classes: Vec<String>,
    /// Period of the last history entry.
    pub last_period: YearMonth,
    pub basis: WeightBasis,
    /// Per-lag kappa or z values. When present the weights are recomputed
    /// from them.
    #[serde(default)]
    pub lag_values: Option<Vec<Option<f64>>>,
    pub weights: Vec<f64>,
    pub matrices: Vec<Matrix>,
    #[serde(default)]
    pub class_frequencies: Vec<u64>,
    /// Class labels, oldest first; `null` marks a missing month.
    pub history: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub software: String,
    pub version: String,
    pub stations: Vec<StationModel>,
}

impl ModelFile {
    pub fn new(stations: Vec<StationModel>) -> Self {
        Self {
            software: SOFTWARE.into(),
            version: VERSION.into(),
            stations,
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::ModelFile(format!("{}: {e}", path.display())))
    }
}

impl StationModel {
    pub fn from_fit(seq: &ClassSequence, model: &WmcModel) -> Self {
        let basis = model.weights.basis;
        Self {
            station: seq.station_id().to_string(),
            classes: seq.labels().to_vec(),
            last_period: seq.end().unwrap_or(seq.start()),
            basis,
            lag_values: Some(
                model
                    .weights
                    .records
                    .iter()
                    .map(|r| match basis {
                        WeightBasis::Kappa => r.kappa,
                        WeightBasis::Z => r.z_stat,
                    })
                    .collect(),
            ),
            weights: model.weights.weights(),
            matrices: model
                .matrices
                .lags
                .iter()
                .map(|l| l.probabilities.clone())
                .collect(),
            class_frequencies: model.class_frequencies.clone(),
            history: seq
                .states()
                .iter()
                .map(|s| s.map(|s| seq.label(s).to_string()))
                .collect(),
        }
    }

    /// Validate and rebuild the model and its history states.
    pub fn to_model(&self) -> Result<(WmcModel, Vec<Option<usize>>), CliError> {
        let bad = |msg: String| CliError::ModelFile(format!("station {}: {msg}", self.station));
        let d = self.classes.len();
        let matrices = TransitionMatrixSet::from_probabilities(self.matrices.clone())
            .map_err(|e| bad(e.to_string()))?;
        if matrices.class_count != d {
            return Err(bad(format!(
                "{d} classes but {0}x{0} matrices",
                matrices.class_count
            )));
        }
        let weights = match &self.lag_values {
            Some(values) => {
                let profile = LagWeightProfile::from_basis_values(self.basis, values)
                    .map_err(|e| bad(e.to_string()))?;
                if !self.weights.is_empty() {
                    let w = profile.weights();
                    if w.len() != self.weights.len()
                        || w.iter()
                            .zip(&self.weights)
                            .any(|(a, b)| (a - b).abs() > 1e-3)
                    {
                        return Err(bad("weights do not match lag_values".into()));
                    }
                }
                profile
            }
            None => LagWeightProfile::from_weights(self.basis, &self.weights)
                .map_err(|e| bad(e.to_string()))?,
        };
        if weights.max_lag != matrices.max_lag {
            return Err(bad(format!(
                "{} weights for {} matrices",
                weights.max_lag, matrices.max_lag
            )));
        }
        if !self.class_frequencies.is_empty() && self.class_frequencies.len() != d {
            return Err(bad("class_frequencies length differs from classes".into()));
        }
        let history = self
            .history
            .iter()
            .map(|h| match h {
                None => Ok(None),
                Some(label) => self
                    .classes
                    .iter()
                    .position(|c| c == label)
                    .map(Some)
                    .ok_or_else(|| bad(format!("unknown class `{label}` in history"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = WmcModel {
            matrices,
            weights,
            class_frequencies: self.class_frequencies.clone(),
        };
        Ok((model, history))
    }

    pub fn sequence(&self, history: &[Option<usize>]) -> Result<ClassSequence, CliError> {
        let start = self.last_period.offset(1 - history.len() as i64);
        ClassSequence::new(
            self.station.clone(),
            start,
            self.classes.clone(),
            history.to_vec(),
        )
        .map_err(|e| CliError::station(&self.station, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub step: usize,
    pub period: YearMonth,
    pub predicted: String,
    pub distribution: ForecastDistribution,
    pub trace: ForecastTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub start: YearMonth,
    pub end: YearMonth,
    pub months: usize,
    pub observed: usize,
    pub class_frequencies: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationReport {
    pub station: String,
    pub input_kind: String,
    pub sequence: SequenceSummary,
    pub standardization: Option<Standardization>,
    pub max_lag: usize,
    pub weights: LagWeightProfile,
    pub transitions: TransitionMatrixSet,
    pub forecasts: Vec<ForecastRecord>,
    pub stationary: Option<StationaryDistribution>,
    pub steady_comparison: Option<SteadyComparison>,
    pub backtest: Option<BacktestReport>,
    /// Non-fatal problems, e.g. a chain without a unique stationary distribution.
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub software: String,
    pub version: String,
    pub config: RunConfig,
    pub classes: Vec<String>,
    pub stations: Vec<StationReport>,
}

pub fn forecast_records(
    model: &WmcModel,
    history: &[Option<usize>],
    last_period: YearMonth,
    labels: &[String],
    config: &RunConfig,
) -> Result<Vec<ForecastRecord>, WmcError> {
    let forecasts: Vec<Forecast> =
        model.predict_iterated(history, config.horizon, config.iteration)?;
    Ok(forecasts
        .into_iter()
        .enumerate()
        .map(|(k, f)| ForecastRecord {
            step: k + 1,
            period: last_period.offset(k as i64 + 1),
            predicted: labels[f.distribution.predicted_class].clone(),
            distribution: f.distribution,
            trace: f.trace,
        })
        .collect())
}

pub fn stationary_of(model: &WmcModel) -> Result<StationaryDistribution, WmcError> {
    let one_step = model
        .matrices
        .one_step()
        .ok_or(WmcError::NoAvailableLag { max_lag: 1 })?;
    let freq: Vec<f64> = model.class_frequencies.iter().map(|c| *c as f64).collect();
    let initial = (freq.iter().sum::<f64>() > 0.0).then_some(freq.as_slice());
    stationary_from(one_step, initial, &StationaryOptions::default())
}

/// Forecast, stationary distribution and optional backtest for a model and
/// its history.
pub fn analyse(
    seq: &ClassSequence,
    model: &WmcModel,
    input_kind: &str,
    standardization: Option<Standardization>,
    config: &RunConfig,
    run_backtest: bool,
) -> Result<StationReport, CliError> {
    let station = seq.station_id().to_string();
    let end = seq.end().unwrap_or(seq.start());
    let forecasts = forecast_records(model, seq.states(), end, seq.labels(), config)
        .map_err(|e| CliError::station(&station, e))?;

    let mut diagnostics = Vec::new();
    let stationary = match stationary_of(model) {
        Ok(st) => Some(st),
        Err(e) => {
            diagnostics.push(format!("stationary distribution: {e}"));
            None
        }
    };
    let steady_comparison = stationary
        .as_ref()
        .and_then(|st| compare_steady(&forecasts[0].distribution, st).ok());
    let backtest = if run_backtest {
        match backtest(seq, &config.backtest_config()) {
            Ok(b) => Some(b),
            Err(e) => {
                diagnostics.push(format!("backtest: {e}"));
                None
            }
        }
    } else {
        None
    };
    if model.weights.uniform_fallback {
        diagnostics.push("every lag statistic was undefined or zero; weights are uniform".into());
    }

    Ok(StationReport {
        station,
        input_kind: input_kind.to_string(),
        sequence: SequenceSummary {
            start: seq.start(),
            end,
            months: seq.len(),
            observed: seq.valid_len(),
            class_frequencies: seq.class_frequencies(),
        },
        standardization,
        max_lag: model.max_lag(),
        weights: model.weights.clone(),
        transitions: model.matrices.clone(),
        forecasts,
        stationary,
        steady_comparison,
        backtest,
        diagnostics,
    })
}

pub fn run_station(
    dataset: &StationDataset,
    config: &RunConfig,
    run_backtest: bool,
) -> Result<StationReport, CliError> {
    let (seq, standardization) = to_classes(dataset, config)?;
    let model = WmcModel::fit(&seq, &config.model_config())
        .map_err(|e| CliError::station(&dataset.station_id, e))?;
    analyse(
        &seq,
        &model,
        &dataset.kind.to_string(),
        standardization,
        config,
        run_backtest,
    )
}

pub fn run_pipeline(datasets: &[StationDataset], config: &RunConfig) -> Result<Report, CliError> {
    let stations = datasets
        .iter()
        .map(|d| run_station(d, config, true))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report(stations, config))
}

pub fn report(stations: Vec<StationReport>, config: &RunConfig) -> Report {
    Report {
        software: SOFTWARE.into(),
        version: VERSION.into(),
        config: config.clone(),
        classes: config.scheme.labels().to_vec(),
        stations,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Lag-by-lag weighted sum for one forecast, one row per lag.
pub fn render_trace(out: &mut String, labels: &[String], record: &ForecastRecord) {
    let _ = writeln!(out, "Forecast for {} (step {})", record.period, record.step);
    let _ = write!(out, "{:<6}{:<7}{:>8}", "Lag", "State", "Weight");
    for l in labels {
        let _ = write!(out, "{l:>8}");
    }
    let _ = writeln!(out, "  Status");
    for r in &record.trace.records {
        let state = r.source_state.map_or("-", |s| labels[s].as_str());
        let _ = write!(out, "{:<6}{:<7}{:>8.4}", r.lag, state, r.weight);
        match &r.row {
            Some(row) => row.iter().for_each(|p| {
                let _ = write!(out, "{p:>8.4}");
            }),
            None => labels.iter().for_each(|_| {
                let _ = write!(out, "{:>8}", "-");
            }),
        }
        let _ = writeln!(
            out,
            "  {}",
            serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        );
    }
    let _ = write!(out, "{:<6}{:<7}{:>8}", "P*", "", "");
    for p in &record.distribution.probabilities {
        let _ = write!(out, "{p:>8.4}");
    }
    let _ = writeln!(out, "  -> {}", record.predicted);
}

fn render_row(out: &mut String, name: &str, values: impl Iterator<Item = String>) {
    let _ = write!(out, "{name:<14}");
    for v in values {
        let _ = write!(out, "{v:>9}");
    }
    out.push('\n');
}

pub fn render_station(out: &mut String, labels: &[String], s: &StationReport) {
    let _ = writeln!(out, "Station {}", s.station);
    let _ = writeln!(
        out,
        "  input {}, {} to {}, {} months ({} observed), max lag {}",
        s.input_kind,
        s.sequence.start,
        s.sequence.end,
        s.sequence.months,
        s.sequence.observed,
        s.max_lag
    );
    out.push('\n');
    render_row(
        out,
        "Lag",
        s.weights.records.iter().map(|r| r.lag.to_string()),
    );
    render_row(
        out,
        "Kappa",
        s.weights.records.iter().map(|r| fmt_opt(r.kappa)),
    );
    render_row(
        out,
        "z",
        s.weights.records.iter().map(|r| fmt_opt(r.z_stat)),
    );
    render_row(
        out,
        "p-value",
        s.weights.records.iter().map(|r| fmt_opt(r.p_value)),
    );
    render_row(
        out,
        "Weight",
        s.weights.records.iter().map(|r| format!("{:.4}", r.weight)),
    );
    out.push('\n');
    render_row(out, "Class", labels.iter().cloned());
    if let Some(f) = s.forecasts.first() {
        render_row(
            out,
            "Forecast",
            f.distribution
                .probabilities
                .iter()
                .map(|p| format!("{p:.4}")),
        );
    }
    match &s.stationary {
        Some(st) => render_row(
            out,
            "Steady state",
            st.probabilities.iter().map(|p| format!("{p:.4}")),
        ),
        None => {
            let _ = writeln!(out, "{:<14}unavailable", "Steady state");
        }
    }
    if let Some(c) = &s.steady_comparison {
        render_row(
            out,
            "Difference",
            c.differences.iter().map(|p| format!("{p:+.4}")),
        );
        let _ = writeln!(
            out,
            "  largest forecast vs steady-state gap {:.4}",
            c.max_abs_difference
        );
    }
    out.push('\n');
    for f in &s.forecasts {
        render_trace(out, labels, f);
        out.push('\n');
    }
    if let Some(b) = &s.backtest {
        let _ = writeln!(
            out,
            "Backtest over {} months ({} skipped)",
            b.folds.len(),
            b.skipped_folds
        );
        for sc in &b.scores {
            let _ = writeln!(
                out,
                "  {:<12} {:>3}/{:<3} hit rate {:.3}",
                sc.method.name(),
                sc.hits,
                sc.scored,
                sc.hit_rate
            );
        }
        let _ = writeln!(out, "  confusion (rows observed, columns predicted)");
        render_row(out, "", labels.iter().cloned());
        for (i, row) in b.confusion.iter().enumerate() {
            render_row(
                out,
                &format!("  {}", labels[i]),
                row.iter().map(u64::to_string),
            );
        }
        out.push('\n');
    }
    for d in &s.diagnostics {
        let _ = writeln!(out, "  note: {d}");
    }
}

pub fn render_summary(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", report.software, report.version);
    out.push('\n');
    for s in &report.stations {
        render_station(&mut out, &report.classes, s);
        out.push('\n');
    }
    out
}

pub fn forecast_csv(report: &Report) -> String {
    let mut out = format!(
        "station,step,period,predicted,{}\n",
        report.classes.join(",")
    );
    for s in &report.stations {
        for f in &s.forecasts {
            let probs: Vec<String> = f
                .distribution
                .probabilities
                .iter()
                .map(|p| format!("{p:.6}"))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.station,
                f.step,
                f.period,
                f.predicted,
                probs.join(",")
            );
        }
    }
    out
}

pub fn confusion_csv(report: &Report) -> String {
    let mut out = format!("station,observed,{}\n", report.classes.join(","));
    for s in &report.stations {
        if let Some(b) = &s.backtest {
            for (i, row) in b.confusion.iter().enumerate() {
                let counts: Vec<String> = row.iter().map(u64::to_string).collect();
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    s.station,
                    report.classes[i],
                    counts.join(",")
                );
            }
        }
    }
    out
}

/// Write every file to a temporary name first and rename once all writes
/// succeeded.
pub fn write_files(files: &[(PathBuf, String)]) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("")
        ));
        if let Err(e) = fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(io(&tmp)(e));
        }
        staged.push((tmp, path));
    }
    for (tmp, path) in &staged {
        fs::rename(tmp, path).map_err(io(path))?;
    }
    Ok(())
}

pub fn report_files(dir: &Path, report: &Report) -> Vec<(PathBuf, String)> {
    vec![
        (dir.join("report.json"), to_json(report)),
        (dir.join("summary.txt"), render_summary(report)),
        (dir.join("forecast.csv"), forecast_csv(report)),
        (dir.join("confusion.csv"), confusion_csv(report)),
    ]
}

/// Scheme labels must match the sequence labels for a combined report.
pub fn check_labels(scheme: &ClassificationScheme, labels: &[String]) -> Result<(), CliError> {
    if scheme.labels() != labels {
        return Err(CliError::Usage(format!(
            "model classes {} differ from the classification scheme {}",
            labels.join(","),
            scheme.labels().join(",")
        )));
    }
    Ok(())
}
