use thiserror::Error;

/// Errors raised by the forecasting pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WmcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid period `{0}`; expected YYYY-MM")]
    InvalidPeriod(String),

    #[error("unknown class label `{0}`")]
    UnknownClass(String),

    #[error("too few samples: {found} available, {required} required")]
    TooFewSamples { found: usize, required: usize },

    #[error("degenerate sample: all {0} values are equal")]
    DegenerateSample(usize),

    #[error("no viable distribution fit")]
    NoViableModel,

    #[error("groups too small to fit: {}", describe_groups(.0))]
    GroupsTooSmall(Vec<(String, usize)>),

    #[error("no lag in 1..={max_lag} has any observed pair")]
    NoAvailableLag { max_lag: usize },

    #[error("lag {lag} has no valid pairs")]
    EmptyTable { lag: usize },

    #[error("at least {required} available lags are needed, found {found}")]
    InsufficientLags { found: usize, required: usize },

    #[error("transition matrix has no unique stationary distribution: {0}")]
    NoUniqueStationary(String),

    #[error("no lag contributes a supported transition row")]
    NoForecast,

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

fn describe_groups(groups: &[(String, usize)]) -> String {
    groups
        .iter()
        .map(|(name, n)| format!("{name} (n={n})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, WmcError>;
