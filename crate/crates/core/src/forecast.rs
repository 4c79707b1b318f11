//! Weighted Markov chain prediction.
//!
//! The forecast distribution is `P* = Σ_t W_t · row(P(t), s_t)` where `s_t` is
//! the class observed `t` months before the target month. The predicted class
//! is the argmax of `P*`.

use serde::{Deserialize, Serialize};

use crate::agreement::{weight_profile, LagWeightProfile, WeightBasis};
use crate::domain::ClassSequence;
use crate::error::{Result, WmcError};
use crate::markov::{
    estimate_transitions_with, steady_state_lag, vec_mul, TransitionMatrixSet, TransitionOptions,
};

/// Probabilities closer than this to the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Why a lag did or did not contribute to a forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagStatus {
    Used,
    ZeroWeight,
    BeyondHistory,
    MissingState,
    UnavailableLag,
    UnsupportedRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub lag: usize,
    pub source_state: Option<usize>,
    pub row: Option<Vec<f64>>,
    pub weight: f64,
    /// Weight actually applied after renormalization.
    pub applied_weight: f64,
    pub status: LagStatus,
}

/// Per-lag inputs of a forecast, enough to recompute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrace {
    pub records: Vec<TraceRecord>,
    pub weighted_sum: Vec<f64>,
    pub predicted_class: usize,
}

impl ForecastTrace {
    /// `Σ applied_weight · row` over used lags.
    pub fn recompute(&self) -> Vec<f64> {
        let d = self.weighted_sum.len();
        let mut sum = vec![0.0; d];
        for r in self.records.iter().filter(|r| r.status == LagStatus::Used) {
            let row = r.row.as_ref().expect("used lags carry their row");
            for (s, p) in sum.iter_mut().zip(row) {
                *s += r.applied_weight * p;
            }
        }
        sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    pub used_lags: Vec<usize>,
    /// Some positively weighted lag was dropped and the rest rescaled.
    pub renormalized: bool,
    pub tie_break_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub distribution: ForecastDistribution,
    pub trace: ForecastTrace,
}

/// Class index at the middle of the ordinal scale (NN for seven classes).
pub fn neutral_class(class_count: usize) -> usize {
    class_count.saturating_sub(1) / 2
}

/// Index of the most probable class, and whether a tie had to be broken.
///
/// Ties go to the class seen more often historically, then to the class
/// closer to the neutral class, then to the lower rank.
pub fn argmax_class(probabilities: &[f64], class_frequencies: &[u64]) -> (usize, bool) {
    let max = probabilities
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..probabilities.len())
        .filter(|&i| max - probabilities[i] <= TIE_TOLERANCE)
        .collect();
    if tied.len() == 1 {
        return (tied[0], false);
    }
    let neutral = neutral_class(probabilities.len());
    let freq = |i: usize| class_frequencies.get(i).copied().unwrap_or(0);
    let best = tied
        .iter()
        .copied()
        .min_by_key(|&i| (std::cmp::Reverse(freq(i)), i.abs_diff(neutral), i))
        .expect("at least one class");
    (best, true)
}

/// One-step forecast from `history` (chronological, last entry most recent;
/// `None` marks a missing month).
pub fn predict_one(
    history: &[Option<usize>],
    matrices: &TransitionMatrixSet,
    weights: &LagWeightProfile,
    class_frequencies: &[u64],
) -> Result<Forecast> {
    let d = matrices.class_count;
    if history.is_empty() {
        return Err(WmcError::InvalidInput("history is empty".into()));
    }
    if history.iter().flatten().any(|&s| s >= d) {
        return Err(WmcError::InvalidInput(format!(
            "history state out of range for {d} classes"
        )));
    }
    let m = weights.max_lag.min(matrices.max_lag);

    let mut records: Vec<TraceRecord> = (1..=m)
        .map(|lag| {
            let weight = weights.weight(lag);
            let source_state = history.len().checked_sub(lag).and_then(|i| history[i]);
            let status = if weight <= 0.0 {
                LagStatus::ZeroWeight
            } else if lag > history.len() {
                LagStatus::BeyondHistory
            } else if let Some(s) = source_state {
                if !matrices.lag(lag).is_some_and(|l| l.available) {
                    LagStatus::UnavailableLag
                } else if matrices.row(lag, s).is_none() {
                    LagStatus::UnsupportedRow
                } else {
                    LagStatus::Used
                }
            } else {
                LagStatus::MissingState
            };
            let row = source_state
                .and_then(|s| matrices.row(lag, s))
                .map(<[f64]>::to_vec);
            TraceRecord {
                lag,
                source_state,
                row,
                weight,
                applied_weight: 0.0,
                status,
            }
        })
        .collect();

    let used_weight: f64 = records
        .iter()
        .filter(|r| r.status == LagStatus::Used)
        .map(|r| r.weight)
        .sum();
    if used_weight <= 0.0 {
        return Err(WmcError::NoForecast);
    }
    let renormalized = records
        .iter()
        .any(|r| r.weight > 0.0 && r.status != LagStatus::Used);
    for r in records.iter_mut().filter(|r| r.status == LagStatus::Used) {
        r.applied_weight = if renormalized {
            r.weight / used_weight
        } else {
            r.weight
        };
    }

    let mut trace = ForecastTrace {
        records,
        weighted_sum: vec![0.0; d],
        predicted_class: 0,
    };
    trace.weighted_sum = trace.recompute();
    let (predicted_class, tie_break_applied) = argmax_class(&trace.weighted_sum, class_frequencies);
    trace.predicted_class = predicted_class;
    let used_lags = trace
        .records
        .iter()
        .filter(|r| r.status == LagStatus::Used)
        .map(|r| r.lag)
        .collect();
    Ok(Forecast {
        distribution: ForecastDistribution {
            probabilities: trace.weighted_sum.clone(),
            predicted_class,
            used_lags,
            renormalized,
            tie_break_applied,
        },
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationMode {
    /// Append each predicted class to the history and forecast again.
    #[default]
    PointFeedback,
    /// Extension: push the previous distribution through `P(1)` instead.
    DistributionPropagation,
}

/// `horizon` successive forecasts.
pub fn predict_iterated(
    history: &[Option<usize>],
    matrices: &TransitionMatrixSet,
    weights: &LagWeightProfile,
    class_frequencies: &[u64],
    horizon: usize,
    mode: IterationMode,
) -> Result<Vec<Forecast>> {
    if horizon == 0 {
        return Err(WmcError::InvalidInput("horizon must be at least 1".into()));
    }
    let first = predict_one(history, matrices, weights, class_frequencies)?;
    let mut out = Vec::with_capacity(horizon);
    match mode {
        IterationMode::PointFeedback => {
            let mut history = history.to_vec();
            history.push(Some(first.distribution.predicted_class));
            out.push(first);
            for _ in 1..horizon {
                let next = predict_one(&history, matrices, weights, class_frequencies)?;
                history.push(Some(next.distribution.predicted_class));
                out.push(next);
            }
        }
        IterationMode::DistributionPropagation => {
            let one_step = matrices.one_step().ok_or(WmcError::NoForecast)?;
            let mut current = first.distribution.probabilities.clone();
            out.push(first);
            for _ in 1..horizon {
                let mut next = vec_mul(&current, one_step);
                let total: f64 = next.iter().sum();
                if total <= 0.0 {
                    return Err(WmcError::NoForecast);
                }
                let renormalized = (total - 1.0).abs() > 1e-12;
                if renormalized {
                    next.iter_mut().for_each(|p| *p /= total);
                }
                let (predicted_class, tie_break_applied) = argmax_class(&next, class_frequencies);
                out.push(Forecast {
                    distribution: ForecastDistribution {
                        probabilities: next.clone(),
                        predicted_class,
                        used_lags: vec![1],
                        renormalized,
                        tie_break_applied,
                    },
                    trace: ForecastTrace {
                        records: Vec::new(),
                        weighted_sum: next.clone(),
                        predicted_class,
                    },
                });
                current = next;
            }
        }
    }
    Ok(out)
}

/// How many lags the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagSelection {
    Fixed(usize),
    /// First lag whose matrix is within `tolerance` of the stationary
    /// distribution, searched up to `cap`.
    SteadyState {
        tolerance: f64,
        cap: usize,
    },
}

impl Default for LagSelection {
    fn default() -> Self {
        LagSelection::Fixed(7)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lags: LagSelection,
    pub basis: WeightBasis,
    pub transitions: TransitionOptions,
}

/// Transition matrices, lag weights and class frequencies fitted on one
/// training sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmcModel {
    pub matrices: TransitionMatrixSet,
    pub weights: LagWeightProfile,
    pub class_frequencies: Vec<u64>,
}

impl WmcModel {
    pub fn fit(seq: &ClassSequence, config: &ModelConfig) -> Result<Self> {
        let max_lag = match config.lags {
            LagSelection::Fixed(m) => m,
            LagSelection::SteadyState { tolerance, cap } => {
                let probe = estimate_transitions_with(seq, cap, &config.transitions)?;
                match steady_state_lag(&probe, tolerance) {
                    Ok(s) => s,
                    Err(WmcError::InsufficientLags { .. }) => 1,
                    Err(e) => return Err(e),
                }
            }
        };
        let matrices = estimate_transitions_with(seq, max_lag, &config.transitions)?;
        let weights = weight_profile(seq, max_lag, config.basis)?;
        Ok(Self {
            matrices,
            weights,
            class_frequencies: seq.class_frequencies(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.matrices.class_count
    }

    pub fn max_lag(&self) -> usize {
        self.weights.max_lag.min(self.matrices.max_lag)
    }

    pub fn predict_one(&self, history: &[Option<usize>]) -> Result<Forecast> {
        predict_one(
            history,
            &self.matrices,
            &self.weights,
            &self.class_frequencies,
        )
    }

    pub fn predict_iterated(
        &self,
        history: &[Option<usize>],
        horizon: usize,
        mode: IterationMode,
    ) -> Result<Vec<Forecast>> {
        predict_iterated(
            history,
            &self.matrices,
            &self.weights,
            &self.class_frequencies,
            horizon,
            mode,
        )
    }

    /// The same matrices with all weight on lag 1: a plain Markov chain.
    pub fn lag_one(&self) -> Result<Self> {
        Ok(Self {
            matrices: self.matrices.clone(),
            weights: LagWeightProfile::from_basis_values(WeightBasis::Kappa, &[Some(1.0)])?,
            class_frequencies: self.class_frequencies.clone(),
        })
    }
}
