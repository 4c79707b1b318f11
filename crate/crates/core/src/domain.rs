//! Ordinal class taxonomy, index-to-class mapping and gap-aware monthly
//! sequences.
//!
//! Classes are handled downstream as zero-based state indices `0..class_count`
//! so that alternative class schemes (different class counts) flow through the
//! estimation and forecasting code unchanged. [`DroughtClass`] names the seven
//! states of the default scheme.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WmcError};

/// Seven ordinal drought classes, driest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DroughtClass {
    /// Extreme drought.
    ED,
    /// Severe drought.
    SD,
    /// Moderate drought.
    MD,
    /// Near normal.
    NN,
    /// Moderately wet.
    MW,
    /// Severely wet.
    SW,
    /// Extremely wet.
    EW,
}

impl DroughtClass {
    pub const ALL: [DroughtClass; 7] = [
        DroughtClass::ED,
        DroughtClass::SD,
        DroughtClass::MD,
        DroughtClass::NN,
        DroughtClass::MW,
        DroughtClass::SW,
        DroughtClass::EW,
    ];

    /// Ordinal rank in `1..=7`.
    pub fn rank(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based state index used by the estimators.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        (rank as usize).checked_sub(1).and_then(Self::from_index)
    }

    pub fn label(self) -> &'static str {
        match self {
            DroughtClass::ED => "ED",
            DroughtClass::SD => "SD",
            DroughtClass::MD => "MD",
            DroughtClass::NN => "NN",
            DroughtClass::MW => "MW",
            DroughtClass::SW => "SW",
            DroughtClass::EW => "EW",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DroughtClass::ED => "extreme drought",
            DroughtClass::SD => "severe drought",
            DroughtClass::MD => "moderate drought",
            DroughtClass::NN => "near normal",
            DroughtClass::MW => "moderately wet",
            DroughtClass::SW => "severely wet",
            DroughtClass::EW => "extremely wet",
        }
    }

    pub fn labels() -> Vec<String> {
        Self::ALL.iter().map(|c| c.label().to_string()).collect()
    }
}

impl fmt::Display for DroughtClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DroughtClass {
    type Err = WmcError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.label() == s)
            .ok_or_else(|| WmcError::UnknownClass(s.to_string()))
    }
}

/// Classify a standardized index value under the default seven-class scheme.
pub fn classify(value: f64) -> Result<DroughtClass> {
    let index = ClassificationScheme::default().classify(value)?;
    Ok(DroughtClass::ALL[index])
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct YearMonth {
    year: i32,
    month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(WmcError::InvalidPeriod(format!("{year:04}-{month:02}")));
        }
        Ok(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    /// Calendar month in `1..=12`.
    pub fn month(self) -> u8 {
        self.month
    }

    /// Months elapsed since year 0, used for arithmetic.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ordinal: i64) -> Self {
        Self {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = WmcError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || WmcError::InvalidPeriod(s.to_string());
        let (year, month) = s.trim().split_once('-').ok_or_else(bad)?;
        if year.len() != 4 || month.len() != 2 {
            return Err(bad());
        }
        let year: i32 = year.parse().map_err(|_| bad())?;
        let month: u8 = month.parse().map_err(|_| bad())?;
        Self::new(year, month).map_err(|_| bad())
    }
}

impl From<YearMonth> for String {
    fn from(value: YearMonth) -> Self {
        value.to_string()
    }
}

impl TryFrom<String> for YearMonth {
    type Error = WmcError;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

/// One class boundary. A value equal to `at` falls into the upper class when
/// `upper_inclusive` is set, otherwise into the lower class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub at: f64,
    pub upper_inclusive: bool,
}

/// Ordered partition of the real line into ordinal classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScheme {
    labels: Vec<String>,
    cuts: Vec<Cut>,
}

impl Default for ClassificationScheme {
    /// ED ≤ −2 < SD ≤ −1.5 < MD ≤ −1 < NN < 1 ≤ MW < 1.5 ≤ SW < 2 ≤ EW.
    fn default() -> Self {
        let cut = |at, upper_inclusive| Cut {
            at,
            upper_inclusive,
        };
        Self {
            labels: DroughtClass::labels(),
            cuts: vec![
                cut(-2.0, false),
                cut(-1.5, false),
                cut(-1.0, false),
                cut(1.0, true),
                cut(1.5, true),
                cut(2.0, true),
            ],
        }
    }
}

impl ClassificationScheme {
    pub fn new(labels: Vec<String>, cuts: Vec<Cut>) -> Result<Self> {
        if labels.len() < 2 || labels.len() != cuts.len() + 1 {
            return Err(WmcError::InvalidInput(format!(
                "{} labels need {} cuts, got {}",
                labels.len(),
                labels.len().saturating_sub(1),
                cuts.len()
            )));
        }
        if cuts.iter().any(|c| !c.at.is_finite()) {
            return Err(WmcError::InvalidInput("class cuts must be finite".into()));
        }
        if cuts.windows(2).any(|w| w[0].at >= w[1].at) {
            return Err(WmcError::InvalidInput(
                "class cuts must be strictly increasing".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !labels.iter().all(|l| seen.insert(l.as_str())) {
            return Err(WmcError::InvalidInput("class labels must be unique".into()));
        }
        Ok(Self { labels, cuts })
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| WmcError::UnknownClass(label.to_string()))
    }

    /// Zero-based index of the class containing `value`.
    pub fn classify(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(WmcError::InvalidInput(format!(
                "cannot classify non-finite value {value}"
            )));
        }
        Ok(self
            .cuts
            .iter()
            .take_while(|c| value > c.at || (value == c.at && c.upper_inclusive))
            .count())
    }

    pub fn classify_series(&self, series: &IndexSeries) -> Result<ClassSequence> {
        let states = series
            .values()
            .iter()
            .map(|v| v.map(|x| self.classify(x)).transpose())
            .collect::<Result<Vec<_>>>()?;
        ClassSequence::new(
            series.station_id(),
            series.start(),
            self.labels.clone(),
            states,
        )
    }
}

/// Monthly standardized index values for one station; `None` marks a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    station_id: String,
    start: YearMonth,
    values: Vec<Option<f64>>,
}

impl IndexSeries {
    pub fn new(
        station_id: impl Into<String>,
        start: YearMonth,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self {
            station_id: station_id.into(),
            start,
            values,
        })
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn start(&self) -> YearMonth {
        self.start
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

    pub fn period(&self, i: usize) -> YearMonth {
        self.start.offset(i as i64)
    }
}

pub(crate) fn check_finite(values: &[Option<f64>]) -> Result<()> {
    match values.iter().flatten().find(|v| !v.is_finite()) {
        Some(v) => Err(WmcError::InvalidInput(format!(
            "non-finite value {v} in series"
        ))),
        None => Ok(()),
    }
}

/// A consecutive run of months for one station, each carrying a class index or
/// a gap. Transitions are only ever formed inside contiguous runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSequence {
    station_id: String,
    start: YearMonth,
    labels: Vec<String>,
    states: Vec<Option<usize>>,
}

impl ClassSequence {
    pub fn new(
        station_id: impl Into<String>,
        start: YearMonth,
        labels: Vec<String>,
        states: Vec<Option<usize>>,
    ) -> Result<Self> {
        if labels.len() < 2 {
            return Err(WmcError::InvalidInput(
                "at least two classes are required".into(),
            ));
        }
        if let Some(bad) = states.iter().flatten().find(|&&s| s >= labels.len()) {
            return Err(WmcError::InvalidInput(format!(
                "state {bad} out of range for {} classes",
                labels.len()
            )));
        }
        Ok(Self {
            station_id: station_id.into(),
            start,
            labels,
            states,
        })
    }

    /// Anonymous sequence over `class_count` states starting January 2000.
    /// Seven-class sequences get the drought labels.
    pub fn from_states(class_count: usize, states: Vec<Option<usize>>) -> Result<Self> {
        let labels = if class_count == DroughtClass::ALL.len() {
            DroughtClass::labels()
        } else {
            (1..=class_count).map(|k| format!("C{k}")).collect()
        };
        Self::new(
            "",
            YearMonth {
                year: 2000,
                month: 1,
            },
            labels,
            states,
        )
    }

    pub fn from_classes(classes: &[Option<DroughtClass>]) -> Self {
        let states = classes.iter().map(|c| c.map(DroughtClass::index)).collect();
        Self::from_states(DroughtClass::ALL.len(), states).expect("drought classes are in range")
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn states(&self) -> &[Option<usize>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of non-missing entries.
    pub fn valid_len(&self) -> usize {
        self.states.iter().flatten().count()
    }

    pub fn period(&self, i: usize) -> YearMonth {
        self.start.offset(i as i64)
    }

    pub fn end(&self) -> Option<YearMonth> {
        self.len().checked_sub(1).map(|i| self.period(i))
    }

    /// Maximal runs of consecutive non-missing states.
    pub fn runs(&self) -> Vec<&[Option<usize>]> {
        self.states
            .split(Option::is_none)
            .filter(|run| !run.is_empty())
            .collect()
    }

    /// Ordered pairs `(earlier, later)` `lag` months apart inside one run.
    pub fn lagged_pairs(&self, lag: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let lag = lag.max(1);
        self.states
            .iter()
            .zip(self.states.iter().skip(lag))
            .enumerate()
            .filter_map(move |(k, (a, b))| match (a, b) {
                (Some(a), Some(b)) if self.states[k..k + lag].iter().all(Option::is_some) => {
                    Some((*a, *b))
                }
                _ => None,
            })
    }

    /// Occurrences of each class among the non-missing entries.
    pub fn class_frequencies(&self) -> Vec<u64> {
        let mut freq = vec![0u64; self.class_count()];
        for &s in self.states.iter().flatten() {
            freq[s] += 1;
        }
        freq
    }

    /// The first `len` entries.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            station_id: self.station_id.clone(),
            start: self.start,
            labels: self.labels.clone(),
            states: self.states[..len.min(self.len())].to_vec(),
        }
    }

    pub fn label(&self, state: usize) -> &str {
        &self.labels[state]
    }
}
