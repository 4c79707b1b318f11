//! Rolling-origin backtests of the weighted chain against a lag-1 Markov
//! chain and climatology, and comparison of forecasts with steady states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassSequence, YearMonth};
use crate::error::{Result, WmcError};
use crate::forecast::{
    argmax_class, ForecastDistribution, IterationMode, LagSelection, ModelConfig, WmcModel,
};
use crate::markov::{stationary_from, StationaryDistribution, StationaryOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub model: ModelConfig,
    /// Number of final months used as forecast targets.
    pub holdout: usize,
    /// Refit matrices and weights before every fold.
    pub refit: bool,
    /// The first training window needs `min_train_factor × max_lag` observed months.
    pub min_train_factor: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            holdout: 12,
            refit: true,
            min_train_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Wmc,
    MarkovLag1,
    Climatology,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Wmc, Method::MarkovLag1, Method::Climatology];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wmc => "wmc",
            Method::MarkovLag1 => "markov-lag1",
            Method::Climatology => "climatology",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub origin: YearMonth,
    pub observed: Option<usize>,
    pub wmc: Option<ForecastDistribution>,
    pub markov_lag1: Option<usize>,
    pub climatology: Option<usize>,
    /// Reason the fold was not scored for the weighted chain.
    pub skipped: Option<String>,
}

impl FoldRecord {
    fn prediction(&self, method: Method) -> Option<usize> {
        match method {
            Method::Wmc => self.wmc.as_ref().map(|d| d.predicted_class),
            Method::MarkovLag1 => self.markov_lag1,
            Method::Climatology => self.climatology,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub hits: usize,
    pub scored: usize,
    pub hit_rate: f64,
}

/// Per-class gap between a forecast and the stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyComparison {
    pub forecast: Vec<f64>,
    pub stationary: Vec<f64>,
    /// `forecast - stationary`.
    pub differences: Vec<f64>,
    pub max_abs_difference: f64,
}

pub fn compare_steady(
    forecast: &ForecastDistribution,
    stationary: &StationaryDistribution,
) -> Result<SteadyComparison> {
    if forecast.probabilities.len() != stationary.probabilities.len() {
        return Err(WmcError::InvalidInput(format!(
            "forecast has {} classes, stationary distribution {}",
            forecast.probabilities.len(),
            stationary.probabilities.len()
        )));
    }
    let differences: Vec<f64> = forecast
        .probabilities
        .iter()
        .zip(&stationary.probabilities)
        .map(|(f, s)| f - s)
        .collect();
    let max_abs_difference = differences.iter().map(|d| d.abs()).fold(0.0, f64::max);
    Ok(SteadyComparison {
        forecast: forecast.probabilities.clone(),
        stationary: stationary.probabilities.clone(),
        differences,
        max_abs_difference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub station_id: String,
    pub config: BacktestConfig,
    pub folds: Vec<FoldRecord>,
    /// Weighted chain hit rate, `trace(confusion) / Σ confusion`.
    pub hit_rate: f64,
    /// Rows are observed classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub scores: Vec<MethodScore>,
    pub skipped_folds: usize,
    /// Last scored fold's forecast against the stationary distribution of
    /// that fold's one-step matrix.
    pub steady_state_comparison: Option<SteadyComparison>,
}

impl BacktestReport {
    pub fn score(&self, method: Method) -> &MethodScore {
        self.scores
            .iter()
            .find(|s| s.method == method)
            .expect("every method is scored")
    }
}

/// Modal class of a training window, ties resolved like forecasts.
pub fn climatology_class(class_frequencies: &[u64]) -> Option<usize> {
    if class_frequencies.iter().all(|c| *c == 0) {
        return None;
    }
    let probs: Vec<f64> = class_frequencies.iter().map(|c| *c as f64).collect();
    Some(argmax_class(&probs, class_frequencies).0)
}

fn lag_requirement(config: &ModelConfig) -> usize {
    match config.lags {
        LagSelection::Fixed(m) => m,
        LagSelection::SteadyState { cap, .. } => cap,
    }
}

pub fn backtest(seq: &ClassSequence, config: &BacktestConfig) -> Result<BacktestReport> {
    let n = seq.len();
    if config.holdout == 0 {
        return Err(WmcError::InvalidInput("holdout must be at least 1".into()));
    }
    if config.holdout >= n {
        return Err(WmcError::InsufficientData(format!(
            "holdout of {} months leaves no training data in a {n}-month sequence",
            config.holdout
        )));
    }
    let first_origin = n - config.holdout;
    let required = config.min_train_factor * lag_requirement(&config.model).max(1);
    let available = seq.prefix(first_origin).valid_len();
    if available < required {
        return Err(WmcError::InsufficientData(format!(
            "first training window has {available} observed months, {required} required ({}× max lag)",
            config.min_train_factor
        )));
    }

    let fixed = if config.refit {
        None
    } else {
        Some(WmcModel::fit(&seq.prefix(first_origin), &config.model)?)
    };

    let folds: Vec<FoldRecord> = (first_origin..n)
        .into_par_iter()
        .map(|origin| run_fold(seq, origin, fixed.as_ref(), &config.model))
        .collect();

    let d = seq.class_count();
    let mut confusion = vec![vec![0u64; d]; d];
    for fold in &folds {
        if let (Some(obs), Some(pred)) = (fold.observed, fold.prediction(Method::Wmc)) {
            confusion[obs][pred] += 1;
        }
    }
    let scores: Vec<MethodScore> = Method::ALL
        .iter()
        .map(|&method| {
            let (hits, scored) = folds.iter().fold((0, 0), |(h, s), f| {
                match (f.observed, f.prediction(method)) {
                    (Some(o), Some(p)) => (h + usize::from(o == p), s + 1),
                    _ => (h, s),
                }
            });
            MethodScore {
                method,
                hits,
                scored,
                hit_rate: if scored > 0 {
                    hits as f64 / scored as f64
                } else {
                    0.0
                },
            }
        })
        .collect();
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(WmcError::InsufficientData(
            "no holdout fold could be scored".into(),
        ));
    }
    let diagonal: u64 = (0..d).map(|i| confusion[i][i]).sum();

    let steady_state_comparison = folds
        .iter()
        .enumerate()
        .rev()
        .find(|(_, f)| f.wmc.is_some())
        .and_then(|(k, f)| {
            let origin = first_origin + k;
            let model = match &fixed {
                Some(m) => m.clone(),
                None => WmcModel::fit(&seq.prefix(origin), &config.model).ok()?,
            };
            let freq: Vec<f64> = model.class_frequencies.iter().map(|c| *c as f64).collect();
            let st = stationary_from(
                model.matrices.one_step()?,
                Some(&freq),
                &StationaryOptions::default(),
            )
            .ok()?;
            compare_steady(f.wmc.as_ref()?, &st).ok()
        });

    Ok(BacktestReport {
        station_id: seq.station_id().to_string(),
        config: *config,
        skipped_folds: folds.iter().filter(|f| f.skipped.is_some()).count(),
        folds,
        hit_rate: diagonal as f64 / total as f64,
        confusion,
        scores,
        steady_state_comparison,
    })
}

/// Forecast month `origin` from data strictly before it.
fn run_fold(
    seq: &ClassSequence,
    origin: usize,
    fixed: Option<&WmcModel>,
    config: &ModelConfig,
) -> FoldRecord {
    let train = seq.prefix(origin);
    let observed = seq.states()[origin];
    let mut record = FoldRecord {
        origin: seq.period(origin),
        observed,
        wmc: None,
        markov_lag1: None,
        climatology: None,
        skipped: None,
    };
    if observed.is_none() {
        record.skipped = Some("observed class missing".into());
        return record;
    }
    let fitted;
    let model = match fixed {
        Some(m) => m,
        None => match WmcModel::fit(&train, config) {
            Ok(m) => {
                fitted = m;
                &fitted
            }
            Err(e) => {
                record.skipped = Some(e.to_string());
                return record;
            }
        },
    };
    let history = train.states();
    match model.predict_iterated(history, 1, IterationMode::PointFeedback) {
        Ok(mut f) => record.wmc = Some(f.remove(0).distribution),
        Err(e) => record.skipped = Some(e.to_string()),
    }
    record.markov_lag1 = model
        .lag_one()
        .and_then(|m| m.predict_one(history))
        .ok()
        .map(|f| f.distribution.predicted_class);
    record.climatology = climatology_class(&model.class_frequencies);
    record
}
