//! CSV ingestion.
//!
//! Three UTF-8 layouts are accepted, each with a header row:
//!
//! | kind        | columns                                                |
//! |-------------|--------------------------------------------------------|
//! | raw-climate | `station,period,precip_mm,tmean_c` or `station,period,aggregate` |
//! | index       | `station,period,index`                                 |
//! | classes     | `station,period,class` (ED, SD, MD, NN, MW, SW, EW)    |
//!
//! Periods are `YYYY-MM` and must increase per station; an empty field is a
//! missing value. Skipped months become explicit gaps.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use wmc_core::{ClassSequence, ClassificationScheme, IndexSeries, RawSeries, YearMonth};

use crate::error::{CliError, IngestError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    RawClimate,
    Index,
    Classes,
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputKind::RawClimate => "raw-climate",
            InputKind::Index => "index",
            InputKind::Classes => "classes",
        })
    }
}

impl FromStr for InputKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw-climate" | "raw" => Ok(InputKind::RawClimate),
            "index" => Ok(InputKind::Index),
            "classes" => Ok(InputKind::Classes),
            other => Err(format!("unknown input kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StationData {
    Raw(RawSeries),
    Index(IndexSeries),
    Classes(ClassSequence),
}

/// One station's validated series.
#[derive(Debug, Clone, PartialEq)]
pub struct StationDataset {
    pub station_id: String,
    pub kind: InputKind,
    pub data: StationData,
}

impl StationDataset {
    pub fn start(&self) -> YearMonth {
        match &self.data {
            StationData::Raw(s) => s.start(),
            StationData::Index(s) => s.start(),
            StationData::Classes(s) => s.start(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            StationData::Raw(s) => s.len(),
            StationData::Index(s) => s.len(),
            StationData::Classes(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layout {
    Precip { precip: usize, tmean: usize },
    Aggregate(usize),
    Index(usize),
    Classes(usize),
}

impl Layout {
    fn kind(self) -> InputKind {
        match self {
            Layout::Precip { .. } | Layout::Aggregate(_) => InputKind::RawClimate,
            Layout::Index(_) => InputKind::Index,
            Layout::Classes(_) => InputKind::Classes,
        }
    }

    fn units(self) -> &'static str {
        match self {
            Layout::Precip { .. } => "mm",
            _ => "aggregate",
        }
    }
}

const KNOWN: [&str; 7] = [
    "station",
    "period",
    "precip_mm",
    "tmean_c",
    "aggregate",
    "index",
    "class",
];

fn layout(header: &csv::StringRecord) -> Result<(usize, usize, Layout), IngestError> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if let Some(unknown) = names.iter().find(|n| !KNOWN.contains(n)) {
        return Err(IngestError::UnknownColumn(unknown.to_string()));
    }
    let pos = |name: &str| names.iter().position(|n| *n == name);
    let need = |name: &str| pos(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let station = need("station")?;
    let period = need("period")?;
    let layout = match (
        pos("precip_mm"),
        pos("tmean_c"),
        pos("aggregate"),
        pos("index"),
        pos("class"),
    ) {
        (Some(precip), Some(tmean), None, None, None) => Layout::Precip { precip, tmean },
        (Some(_), None, None, None, None) => {
            return Err(IngestError::MissingColumn("tmean_c".into()))
        }
        (None, Some(_), None, None, None) => {
            return Err(IngestError::MissingColumn("precip_mm".into()))
        }
        (None, None, Some(c), None, None) => Layout::Aggregate(c),
        (None, None, None, Some(c), None) => Layout::Index(c),
        (None, None, None, None, Some(c)) => Layout::Classes(c),
        (None, None, None, None, None) => return Err(IngestError::MissingColumn("index".into())),
        _ => {
            return Err(IngestError::Malformed {
                line: 1,
                message: "header mixes columns of different input kinds".into(),
            })
        }
    };
    Ok((station, period, layout))
}

enum Value {
    Number(f64),
    Class(usize),
}

struct Builder {
    station: String,
    start: YearMonth,
    last: YearMonth,
    values: Vec<Option<Value>>,
}

fn parse_number(field: &str, line: u64, column: &str) -> Result<Option<f64>, IngestError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| IngestError::Malformed {
        line,
        message: format!("{column} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Malformed {
            line,
            message: format!("{column} must be finite"),
        });
    }
    Ok(Some(v))
}

/// Parse every station in a CSV document, in order of first appearance.
pub fn ingest_reader<R: Read>(
    reader: R,
    expected: Option<InputKind>,
    scheme: &ClassificationScheme,
) -> Result<Vec<StationDataset>, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| IngestError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let (station_col, period_col, layout) = layout(&header)?;
    if let Some(kind) = expected {
        if kind != layout.kind() {
            return Err(IngestError::KindMismatch {
                expected: kind.to_string(),
            });
        }
    }

    let mut builders: Vec<Builder> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| IngestError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let station = record[station_col].trim().to_string();
        if station.is_empty() {
            return Err(IngestError::Malformed {
                line,
                message: "empty station".into(),
            });
        }
        let period_text = record[period_col].trim();
        let period: YearMonth = period_text.parse().map_err(|_| IngestError::Malformed {
            line,
            message: format!("invalid period `{period_text}`; expected YYYY-MM"),
        })?;
        let value = match layout {
            Layout::Precip { precip, tmean } => {
                parse_number(&record[tmean], line, "tmean_c")?;
                let v = parse_number(&record[precip], line, "precip_mm")?;
                if v.is_some_and(|v| v < 0.0) {
                    return Err(IngestError::Malformed {
                        line,
                        message: "precip_mm must be non-negative".into(),
                    });
                }
                v.map(Value::Number)
            }
            Layout::Aggregate(c) => parse_number(&record[c], line, "aggregate")?.map(Value::Number),
            Layout::Index(c) => parse_number(&record[c], line, "index")?.map(Value::Number),
            Layout::Classes(c) => {
                let label = record[c].trim();
                if label.is_empty() {
                    None
                } else {
                    let class =
                        scheme
                            .label_index(label)
                            .map_err(|_| IngestError::UnknownClass {
                                line,
                                label: label.to_string(),
                            })?;
                    Some(Value::Class(class))
                }
            }
        };

        match builders.iter_mut().find(|b| b.station == station) {
            None => builders.push(Builder {
                station,
                start: period,
                last: period,
                values: vec![value],
            }),
            Some(b) => {
                let step = b.last.months_until(period);
                if step == 0 {
                    return Err(IngestError::DuplicatePeriod {
                        line,
                        station,
                        period: period.to_string(),
                    });
                }
                if step < 0 {
                    let dup = b.start.months_until(period) >= 0
                        && b.values[b.start.months_until(period) as usize].is_some();
                    if dup {
                        return Err(IngestError::DuplicatePeriod {
                            line,
                            station,
                            period: period.to_string(),
                        });
                    }
                    return Err(IngestError::NonMonotonePeriod {
                        line,
                        station,
                        period: period.to_string(),
                        previous: b.last.to_string(),
                    });
                }
                for _ in 1..step {
                    b.values.push(None);
                }
                b.values.push(value);
                b.last = period;
            }
        }
    }
    if builders.is_empty() {
        return Err(IngestError::Empty);
    }

    let build = |b: Builder| -> Result<StationDataset, IngestError> {
        let invalid = |e: wmc_core::WmcError| IngestError::Malformed {
            line: 0,
            message: e.to_string(),
        };
        let numbers = |values: Vec<Option<Value>>| -> Vec<Option<f64>> {
            values
                .into_iter()
                .map(|v| match v {
                    Some(Value::Number(x)) => Some(x),
                    _ => None,
                })
                .collect()
        };
        let data = match layout {
            Layout::Precip { .. } | Layout::Aggregate(_) => StationData::Raw(
                RawSeries::new(
                    b.station.clone(),
                    b.start,
                    layout.units(),
                    numbers(b.values),
                )
                .map_err(invalid)?,
            ),
            Layout::Index(_) => StationData::Index(
                IndexSeries::new(b.station.clone(), b.start, numbers(b.values)).map_err(invalid)?,
            ),
            Layout::Classes(_) => {
                let states = b
                    .values
                    .into_iter()
                    .map(|v| match v {
                        Some(Value::Class(c)) => Some(c),
                        _ => None,
                    })
                    .collect();
                StationData::Classes(
                    ClassSequence::new(
                        b.station.clone(),
                        b.start,
                        scheme.labels().to_vec(),
                        states,
                    )
                    .map_err(invalid)?,
                )
            }
        };
        Ok(StationDataset {
            station_id: b.station,
            kind: layout.kind(),
            data,
        })
    };
    builders.into_iter().map(build).collect()
}

pub fn ingest(
    path: &Path,
    expected: Option<InputKind>,
    scheme: &ClassificationScheme,
) -> Result<Vec<StationDataset>, CliError> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ingest_reader(file, expected, scheme)?)
}
