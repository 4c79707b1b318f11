//! Standardization of a raw monthly aggregate into a dimensionless index.
//!
//! Each group of samples (a calendar month, or the whole record) is fitted
//! with normal, two-parameter gamma and log-normal candidates by L-moments and
//! by maximum likelihood. The candidate with the smallest AIC becomes the
//! group model `F`, and each value `x` maps to `Φ⁻¹(F(x))`.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, LogNormal, Normal};
use statrs::function::gamma::digamma;

use crate::domain::{check_finite, IndexSeries, YearMonth};
use crate::error::{Result, WmcError};

/// CDF values are clamped to `[CDF_CLAMP, 1 - CDF_CLAMP]` before inversion.
pub const CDF_CLAMP: f64 = 1e-6;

/// Candidate families, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Normal,
    Gamma,
    LogNormal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Normal, Family::Gamma, Family::LogNormal];

    fn needs_positive_support(self) -> bool {
        !matches!(self, Family::Normal)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Normal => "normal",
            Family::Gamma => "gamma",
            Family::LogNormal => "log-normal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    LMoments,
    Mle,
}

impl fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimationMethod::LMoments => "l-moments",
            EstimationMethod::Mle => "mle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    #[default]
    PerCalendarMonth,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub min_samples: usize,
    pub methods: Vec<EstimationMethod>,
    pub families: Vec<Family>,
    /// Shift the data so positive-support families can be fitted to samples
    /// containing non-positive values. Off by default: those families are
    /// skipped instead.
    pub shift_nonpositive: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_samples: 20,
            methods: vec![EstimationMethod::LMoments, EstimationMethod::Mle],
            families: Family::ALL.to_vec(),
            shift_nonpositive: false,
        }
    }
}

/// A fitted candidate distribution.
///
/// Parameters are `[mean, sd]` for normal, `[shape, scale]` for gamma and
/// `[meanlog, sdlog]` for log-normal, all applied to `x - location`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: Family,
    pub method: EstimationMethod,
    pub parameters: Vec<f64>,
    pub location: f64,
    pub aic: f64,
    pub ks_statistic: f64,
    pub sample_count: usize,
    /// Calendar month of the group, `None` when pooled.
    pub calendar_month: Option<u8>,
}

enum Dist {
    Normal(Normal),
    Gamma(Gamma),
    LogNormal(LogNormal),
}

impl Dist {
    fn build(family: Family, p: &[f64]) -> Option<Dist> {
        if p.len() != 2 || p.iter().any(|v| !v.is_finite()) {
            return None;
        }
        match family {
            Family::Normal => Normal::new(p[0], p[1]).ok().map(Dist::Normal),
            Family::Gamma => Gamma::new(p[0], 1.0 / p[1]).ok().map(Dist::Gamma),
            Family::LogNormal => LogNormal::new(p[0], p[1]).ok().map(Dist::LogNormal),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Dist::Normal(d) => d.cdf(x),
            Dist::Gamma(d) => d.cdf(x),
            Dist::LogNormal(d) => d.cdf(x),
        }
    }

    fn inverse_cdf(&self, p: f64) -> f64 {
        match self {
            Dist::Normal(d) => d.inverse_cdf(p),
            Dist::Gamma(d) => d.inverse_cdf(p),
            Dist::LogNormal(d) => d.inverse_cdf(p),
        }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Dist::Normal(d) => d.ln_pdf(x),
            Dist::Gamma(d) => d.ln_pdf(x),
            Dist::LogNormal(d) => d.ln_pdf(x),
        }
    }
}

impl FittedModel {
    fn dist(&self) -> Dist {
        Dist::build(self.family, &self.parameters).expect("fitted parameters are valid")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let y = x - self.location;
        if self.family.needs_positive_support() && y <= 0.0 {
            return 0.0;
        }
        self.dist().cdf(y)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.dist().inverse_cdf(p) + self.location
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let dist = self.dist();
        samples
            .iter()
            .map(|&x| dist.ln_pdf(x - self.location))
            .sum()
    }

    /// Standardized index of `x`: `Φ⁻¹` of the clamped model CDF.
    pub fn standardize(&self, x: f64) -> f64 {
        normal_quantile(self.cdf(x).clamp(CDF_CLAMP, 1.0 - CDF_CLAMP))
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// First two sample L-moments `(l1, l2)` from probability-weighted moments.
pub fn sample_l_moments(samples: &[f64]) -> (f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let b0 = sorted.iter().sum::<f64>() / n;
    let b1 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| i as f64 * x)
        .sum::<f64>()
        / (n * (n - 1.0));
    (b0, 2.0 * b1 - b0)
}

/// Trigamma function via recurrence and the asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Gamma shape from the L-coefficient of variation (Hosking's rational
/// approximation).
fn gamma_shape_from_lcv(t: f64) -> Option<f64> {
    if !(t > 0.0 && t < 1.0) {
        return None;
    }
    let shape = if t < 0.5 {
        let z = std::f64::consts::PI * t * t;
        (1.0 - 0.3080 * z) / (z - 0.05812 * z * z + 0.01765 * z * z * z)
    } else {
        let z = 1.0 - t;
        (0.7213 * z - 0.5947 * z * z) / (1.0 - 2.1817 * z + 1.2113 * z * z)
    };
    (shape.is_finite() && shape > 0.0).then_some(shape)
}

/// Gamma shape MLE: Newton iterations on `ln a - ψ(a) = ln(mean) - mean(ln x)`.
fn gamma_shape_mle(samples: &[f64]) -> Option<f64> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_log = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s.is_finite() && s > 0.0) {
        return None;
    }
    let mut shape = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = shape.ln() - digamma(shape) - s;
        let df = 1.0 / shape - trigamma(shape);
        let mut next = shape - f / df;
        while next <= 0.0 {
            next = (next + shape) / 2.0;
            if (next - shape).abs() < f64::MIN_POSITIVE {
                return None;
            }
        }
        let done = (next - shape).abs() <= 1e-12 * shape;
        shape = next;
        if done {
            break;
        }
    }
    (shape.is_finite() && shape > 0.0).then_some(shape)
}

fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn estimate(family: Family, method: EstimationMethod, data: &[f64]) -> Option<Vec<f64>> {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let params = match (family, method) {
        (Family::Normal, EstimationMethod::LMoments) => {
            let (l1, l2) = sample_l_moments(data);
            vec![l1, l2 * sqrt_pi]
        }
        (Family::Normal, EstimationMethod::Mle) => {
            let (m, s) = mean_sd(data);
            vec![m, s]
        }
        (Family::Gamma, EstimationMethod::LMoments) => {
            let (l1, l2) = sample_l_moments(data);
            let shape = gamma_shape_from_lcv(l2 / l1)?;
            vec![shape, l1 / shape]
        }
        (Family::Gamma, EstimationMethod::Mle) => {
            let shape = gamma_shape_mle(data)?;
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            vec![shape, mean / shape]
        }
        (Family::LogNormal, method) => {
            let logs: Vec<f64> = data.iter().map(|x| x.ln()).collect();
            return estimate(Family::Normal, method, &logs);
        }
    };
    (params.iter().all(|p| p.is_finite()) && params[1] > 0.0).then_some(params)
}

/// Two-sided Kolmogorov-Smirnov distance between the sample and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Fit every configured (family, method) pair. Families whose support
/// excludes the data, or whose estimate does not converge, are skipped.
pub fn fit_candidates(samples: &[f64], config: &FitConfig) -> Result<Vec<FittedModel>> {
    if samples.len() < config.min_samples.max(2) {
        return Err(WmcError::TooFewSamples {
            found: samples.len(),
            required: config.min_samples.max(2),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(WmcError::InvalidInput("samples must be finite".into()));
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Err(WmcError::DegenerateSample(samples.len()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);

    let mut fits = Vec::new();
    for &family in &config.families {
        let location = if family.needs_positive_support() && min <= 0.0 {
            if !config.shift_nonpositive {
                continue;
            }
            min - 1e-9
        } else {
            0.0
        };
        let data: Vec<f64> = samples.iter().map(|x| x - location).collect();
        for &method in &config.methods {
            let Some(parameters) = estimate(family, method, &data) else {
                continue;
            };
            let mut model = FittedModel {
                family,
                method,
                parameters,
                location,
                aic: f64::NAN,
                ks_statistic: f64::NAN,
                sample_count: samples.len(),
                calendar_month: None,
            };
            if Dist::build(family, &model.parameters).is_none() {
                continue;
            }
            let log_lik = model.log_likelihood(samples);
            model.aic = 2.0 * model.parameters.len() as f64 - 2.0 * log_lik;
            model.ks_statistic = ks_statistic(samples, |x| model.cdf(x));
            if model.aic.is_finite() && model.ks_statistic.is_finite() {
                fits.push(model);
            }
        }
    }
    Ok(fits)
}

/// Minimal AIC; ties go to the smaller KS statistic, then to family order.
pub fn select_model(fits: &[FittedModel]) -> Result<FittedModel> {
    fits.iter()
        .min_by(|a, b| {
            a.aic
                .total_cmp(&b.aic)
                .then(a.ks_statistic.total_cmp(&b.ks_statistic))
                .then(a.family.cmp(&b.family))
                .then(a.method.cmp(&b.method))
        })
        .cloned()
        .ok_or(WmcError::NoViableModel)
}

/// A raw monthly aggregate for one station, e.g. precipitation totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    station_id: String,
    start: YearMonth,
    units: String,
    values: Vec<Option<f64>>,
}

impl RawSeries {
    pub fn new(
        station_id: impl Into<String>,
        start: YearMonth,
        units: impl Into<String>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self {
            station_id: station_id.into(),
            start,
            units: units.into(),
            values,
        })
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Output of [`standardize`]: the index series and the model chosen per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub index: IndexSeries,
    pub models: Vec<FittedModel>,
}

pub fn standardize(
    series: &RawSeries,
    grouping: Grouping,
    config: &FitConfig,
) -> Result<Standardized> {
    let group_of = |i: usize| match grouping {
        Grouping::PerCalendarMonth => series.start.offset(i as i64).month() as usize - 1,
        Grouping::Pooled => 0,
    };
    let group_count = match grouping {
        Grouping::PerCalendarMonth => 12,
        Grouping::Pooled => 1,
    };
    let mut groups = vec![Vec::new(); group_count];
    for (i, v) in series.values.iter().enumerate() {
        if let Some(x) = v {
            groups[group_of(i)].push(*x);
        }
    }
    let group_name = |g: usize| match grouping {
        Grouping::PerCalendarMonth => format!("month {:02}", g + 1),
        Grouping::Pooled => "pooled".to_string(),
    };

    let required = config.min_samples.max(2);
    let small: Vec<(String, usize)> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.len() < required)
        .map(|(g, samples)| (group_name(g), samples.len()))
        .collect();
    if !small.is_empty() {
        return Err(WmcError::GroupsTooSmall(small));
    }

    let models = groups
        .iter()
        .enumerate()
        .map(|(g, samples)| {
            let fits = fit_candidates(samples, config)?;
            let mut model = select_model(&fits)?;
            if grouping == Grouping::PerCalendarMonth {
                model.calendar_month = Some(g as u8 + 1);
            }
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;

    let values = series
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v.map(|x| models[group_of(i)].standardize(x)))
        .collect();
    Ok(Standardized {
        index: IndexSeries::new(series.station_id.clone(), series.start, values)?,
        models,
    })
}
