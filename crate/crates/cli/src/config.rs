//! Effective run configuration, echoed into every report.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use wmc_core::{
    BacktestConfig, ClassificationScheme, EstimationMode, FitConfig, Grouping, IterationMode,
    LagSelection, ModelConfig, TransitionOptions, WeightBasis,
};

use crate::error::CliError;

/// `--max-lag` value: a fixed count or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxLag {
    Fixed(usize),
    Auto,
}

impl FromStr for MaxLag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(MaxLag::Auto);
        }
        s.parse()
            .map(MaxLag::Fixed)
            .map_err(|_| format!("expected a positive integer or `auto`, got `{s}`"))
    }
}

impl fmt::Display for MaxLag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxLag::Fixed(m) => write!(f, "{m}"),
            MaxLag::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_lag: MaxLag,
    /// Tolerance and search cap used when `max_lag` is `auto`.
    pub auto_tolerance: f64,
    pub auto_cap: usize,
    pub weight_basis: WeightBasis,
    pub scheme: ClassificationScheme,
    pub grouping: Grouping,
    pub min_samples: usize,
    pub shift_nonpositive: bool,
    pub smoothing: f64,
    pub estimation: EstimationMode,
    pub horizon: usize,
    pub iteration: IterationMode,
    pub holdout: usize,
    pub refit: bool,
    pub min_train_factor: usize,
    pub seed: u64,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_lag: MaxLag::Fixed(7),
            auto_tolerance: 0.01,
            auto_cap: 12,
            weight_basis: WeightBasis::Kappa,
            scheme: ClassificationScheme::default(),
            grouping: Grouping::PerCalendarMonth,
            min_samples: 20,
            shift_nonpositive: false,
            smoothing: 0.0,
            estimation: EstimationMode::Direct,
            horizon: 1,
            iteration: IterationMode::PointFeedback,
            holdout: 12,
            refit: true,
            min_train_factor: 10,
            seed: 42,
            format: OutputFormat::Json,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if let MaxLag::Fixed(m) = self.max_lag {
            if !(1..=60).contains(&m) {
                return bad(format!("max lag must be in 1..=60, got {m}"));
            }
        }
        if !(self.auto_tolerance > 0.0 && self.auto_tolerance < 1.0) {
            return bad(format!(
                "auto tolerance must be in (0, 1), got {}",
                self.auto_tolerance
            ));
        }
        if !(2..=60).contains(&self.auto_cap) {
            return bad(format!("auto cap must be in 2..=60, got {}", self.auto_cap));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return bad(format!(
                "smoothing must be a non-negative number, got {}",
                self.smoothing
            ));
        }
        if !(1..=120).contains(&self.horizon) {
            return bad(format!("horizon must be in 1..=120, got {}", self.horizon));
        }
        if self.holdout == 0 {
            return bad("holdout must be at least 1".into());
        }
        if self.min_train_factor == 0 {
            return bad("min train factor must be at least 1".into());
        }
        if self.min_samples < 2 {
            return bad(format!(
                "min samples must be at least 2, got {}",
                self.min_samples
            ));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lags: match self.max_lag {
                MaxLag::Fixed(m) => LagSelection::Fixed(m),
                MaxLag::Auto => LagSelection::SteadyState {
                    tolerance: self.auto_tolerance,
                    cap: self.auto_cap,
                },
            },
            basis: self.weight_basis,
            transitions: TransitionOptions {
                mode: self.estimation,
                smoothing: self.smoothing,
            },
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            min_samples: self.min_samples,
            shift_nonpositive: self.shift_nonpositive,
            ..FitConfig::default()
        }
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            model: self.model_config(),
            holdout: self.holdout,
            refit: self.refit,
            min_train_factor: self.min_train_factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(
            RunConfig::default().model_config().lags,
            LagSelection::Fixed(7)
        );
    }

    #[test]
    fn out_of_range_values_are_usage_errors() {
        let cfg = RunConfig {
            max_lag: MaxLag::Fixed(0),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let cfg = RunConfig {
            smoothing: -1.0,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn max_lag_parses() {
        assert_eq!("auto".parse::<MaxLag>(), Ok(MaxLag::Auto));
        assert_eq!("5".parse::<MaxLag>(), Ok(MaxLag::Fixed(5)));
        assert!("x".parse::<MaxLag>().is_err());
    }
}
