//! Weighted Markov chain forecasting of ordinal drought classes.
//!
//! A monthly climate aggregate is standardized into an index ([`index`]),
//! classified into seven ordinal drought classes ([`domain`]), and modelled
//! as a first-order chain whose lag-specific transition matrices
//! ([`markov`]) are combined with weights derived from quadratic-weighted
//! Cohen's kappa between the sequence and its lagged self ([`agreement`]).
//! [`forecast`] produces the next-month class distribution and
//! [`evaluate`] backtests it against simpler baselines.
//!
//! ```
//! use wmc_core::{ClassSequence, DroughtClass::*, ModelConfig, WmcModel};
//!
//! let history: Vec<_> = [NN, NN, MD, NN, MW, NN, NN, MD, NN, NN].map(Some).to_vec();
//! let seq = ClassSequence::from_classes(&history);
//! let model = WmcModel::fit(&seq, &ModelConfig::default()).unwrap();
//! let forecast = model.predict_one(seq.states()).unwrap();
//! assert!((forecast.distribution.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
//! ```

pub mod agreement;
pub mod domain;
mod error;
pub mod evaluate;
pub mod forecast;
pub mod index;
pub mod markov;

pub use agreement::{
    lagged_table, weight_profile, weighted_kappa, ContingencyTable, KappaStatistic, LagRecord,
    LagWeightProfile, WeightBasis,
};
pub use domain::{
    classify, ClassSequence, ClassificationScheme, Cut, DroughtClass, IndexSeries, YearMonth,
};
pub use error::{Result, WmcError};
pub use evaluate::{
    backtest, compare_steady, BacktestConfig, BacktestReport, Method, SteadyComparison,
};
pub use forecast::{
    argmax_class, predict_iterated, predict_one, Forecast, ForecastDistribution, ForecastTrace,
    IterationMode, LagSelection, ModelConfig, WmcModel,
};
pub use index::{
    fit_candidates, select_model, standardize, EstimationMethod, Family, FitConfig, FittedModel,
    Grouping, RawSeries, Standardized,
};
pub use markov::{
    estimate_transitions, estimate_transitions_with, stationary, stationary_from, steady_state_lag,
    EstimationMode, Matrix, StationaryDistribution, StationaryMethod, StationaryOptions,
    TransitionMatrixSet, TransitionOptions,
};
