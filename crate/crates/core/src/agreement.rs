//! Quadratic-weighted Cohen's kappa between a class sequence and its lagged
//! self, and the normalized lag weights derived from it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::domain::ClassSequence;
use crate::error::{Result, WmcError};
use crate::markov::Matrix;

/// Joint proportions of `(earlier, later)` class pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub class_count: usize,
    pub pair_count: u64,
    pub cells: Matrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
}

impl ContingencyTable {
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let d = counts.len();
        if counts.iter().any(|r| r.len() != d) {
            return Err(WmcError::InvalidInput("count table must be square".into()));
        }
        let n: u64 = counts.iter().flatten().sum();
        if n == 0 {
            return Err(WmcError::InvalidInput("count table is empty".into()));
        }
        let cells = counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64 / n as f64).collect())
            .collect();
        Self::from_proportions(cells, n)
    }

    /// Table from proportions summing to one; `pair_count` only enters the
    /// standard error.
    pub fn from_proportions(cells: Matrix, pair_count: u64) -> Result<Self> {
        let d = cells.len();
        if d < 2 || cells.iter().any(|r| r.len() != d) {
            return Err(WmcError::InvalidInput(
                "table must be square with two or more classes".into(),
            ));
        }
        if cells
            .iter()
            .flatten()
            .any(|p| !(p.is_finite() && *p >= 0.0))
        {
            return Err(WmcError::InvalidInput(
                "table cells must be finite and non-negative".into(),
            ));
        }
        let total: f64 = cells.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(WmcError::InvalidInput(format!(
                "table proportions sum to {total}"
            )));
        }
        let row_marginals = cells.iter().map(|r| r.iter().sum()).collect();
        let col_marginals = (0..d).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            class_count: d,
            pair_count,
            cells,
            row_marginals,
            col_marginals,
        })
    }
}

/// Table of all pairs `(X_{k-lag}, X_k)` within contiguous runs.
pub fn lagged_table(seq: &ClassSequence, lag: usize) -> Result<ContingencyTable> {
    if lag == 0 {
        return Err(WmcError::InvalidInput("lag must be at least 1".into()));
    }
    let d = seq.class_count();
    let mut counts = vec![vec![0u64; d]; d];
    for run in seq.runs() {
        for (a, b) in run.iter().zip(run.iter().skip(lag)) {
            if let (Some(a), Some(b)) = (a, b) {
                counts[*a][*b] += 1;
            }
        }
    }
    if counts.iter().flatten().all(|c| *c == 0) {
        return Err(WmcError::EmptyTable { lag });
    }
    ContingencyTable::from_counts(&counts)
}

/// Weighted kappa with its null-hypothesis z statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaStatistic {
    /// `None` when expected disagreement is zero.
    pub kappa: Option<f64>,
    pub standard_error: Option<f64>,
    pub z_stat: Option<f64>,
    /// Two-sided, normal approximation.
    pub p_value: Option<f64>,
}

/// `κ = 1 - Σ w p_ij / Σ w p_i· p_·j` with `w_ij = (i - j)²`.
///
/// The standard error is the large-sample variance under independence
/// (Fleiss, Cohen and Everitt), written for the equivalent agreement weights
/// `1 - (i - j)² / (d - 1)²`.
pub fn weighted_kappa(table: &ContingencyTable) -> KappaStatistic {
    let d = table.class_count;
    let (pr, pc) = (&table.row_marginals, &table.col_marginals);
    let w = |i: usize, j: usize| ((i as f64) - (j as f64)).powi(2);

    let mut observed = 0.0;
    let mut expected = 0.0;
    for i in 0..d {
        for j in 0..d {
            observed += w(i, j) * table.cells[i][j];
            expected += w(i, j) * pr[i] * pc[j];
        }
    }
    if expected <= 0.0 {
        return KappaStatistic {
            kappa: None,
            standard_error: None,
            z_stat: None,
            p_value: None,
        };
    }
    let kappa = 1.0 - observed / expected;

    let scale = ((d - 1) as f64).powi(2);
    let a = |i: usize, j: usize| 1.0 - w(i, j) / scale;
    let pe: f64 = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| a(i, j) * pr[i] * pc[j])
        .sum();
    let row_bar: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| pc[j] * a(i, j)).sum())
        .collect();
    let col_bar: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| pr[i] * a(i, j)).sum())
        .collect();
    let spread: f64 = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| pr[i] * pc[j] * (a(i, j) - (row_bar[i] + col_bar[j])).powi(2))
        .sum();
    let variance = (spread - pe * pe) / (table.pair_count as f64 * (1.0 - pe).powi(2));

    let standard_error = (variance > 0.0 && variance.is_finite()).then(|| variance.sqrt());
    let z_stat = standard_error.map(|se| kappa / se);
    let p_value = z_stat.map(|z| erfc(z.abs() / std::f64::consts::SQRT_2));
    KappaStatistic {
        kappa: Some(kappa),
        standard_error,
        z_stat,
        p_value,
    }
}

/// Which per-lag statistic is normalized into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightBasis {
    #[default]
    Kappa,
    Z,
}

impl fmt::Display for WeightBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightBasis::Kappa => "kappa",
            WeightBasis::Z => "z",
        })
    }
}

impl FromStr for WeightBasis {
    type Err = WmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(WeightBasis::Kappa),
            "z" => Ok(WeightBasis::Z),
            other => Err(WmcError::InvalidInput(format!(
                "unknown weight basis `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagRecord {
    pub lag: usize,
    pub pair_count: u64,
    pub kappa: Option<f64>,
    pub z_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub weight: f64,
}

impl LagRecord {
    fn basis_value(&self, basis: WeightBasis) -> Option<f64> {
        match basis {
            WeightBasis::Kappa => self.kappa,
            WeightBasis::Z => self.z_stat,
        }
    }
}

/// Per-lag agreement statistics and the normalized weights `W_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagWeightProfile {
    pub max_lag: usize,
    pub basis: WeightBasis,
    pub records: Vec<LagRecord>,
    /// Set when every basis value was undefined or zero and the weights fell
    /// back to uniform over lags with observed pairs.
    pub uniform_fallback: bool,
}

impl LagWeightProfile {
    /// Profile from already computed basis values, one per lag starting at 1.
    /// Every lag is treated as observed.
    pub fn from_basis_values(basis: WeightBasis, values: &[Option<f64>]) -> Result<Self> {
        if values.is_empty() {
            return Err(WmcError::InvalidInput(
                "at least one lag is required".into(),
            ));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(WmcError::InvalidInput("basis values must be finite".into()));
        }
        let records = values
            .iter()
            .enumerate()
            .map(|(i, v)| LagRecord {
                lag: i + 1,
                pair_count: 0,
                kappa: if basis == WeightBasis::Kappa {
                    *v
                } else {
                    None
                },
                z_stat: if basis == WeightBasis::Z { *v } else { None },
                p_value: None,
                weight: 0.0,
            })
            .collect();
        let mut profile = Self {
            max_lag: values.len(),
            basis,
            records,
            uniform_fallback: false,
        };
        profile.normalize(&vec![true; values.len()]);
        Ok(profile)
    }

    /// Profile with explicit weights, e.g. read back from a saved model.
    /// Weights must be non-negative and sum to one within 1e-3.
    pub fn from_weights(basis: WeightBasis, weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(WmcError::InvalidInput(
                "at least one lag is required".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(WmcError::InvalidInput(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-3 {
            return Err(WmcError::InvalidInput(format!("weights sum to {total}")));
        }
        let records = weights
            .iter()
            .enumerate()
            .map(|(i, w)| LagRecord {
                lag: i + 1,
                pair_count: 0,
                kappa: None,
                z_stat: None,
                p_value: None,
                weight: *w,
            })
            .collect();
        Ok(Self {
            max_lag: weights.len(),
            basis,
            records,
            uniform_fallback: false,
        })
    }

    /// `W_t = |b_t| / Σ|b_u|` over defined values; uniform over `observed`
    /// lags when that sum is zero.
    fn normalize(&mut self, observed: &[bool]) {
        let basis = self.basis;
        let total: f64 = self
            .records
            .iter()
            .filter_map(|r| r.basis_value(basis))
            .map(f64::abs)
            .sum();
        if total > 0.0 {
            for r in &mut self.records {
                r.weight = r.basis_value(basis).map_or(0.0, |v| v.abs() / total);
            }
            self.uniform_fallback = false;
        } else {
            let n = observed.iter().filter(|o| **o).count() as f64;
            for (r, o) in self.records.iter_mut().zip(observed) {
                r.weight = if *o { 1.0 / n } else { 0.0 };
            }
            self.uniform_fallback = true;
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.weight).collect()
    }

    pub fn weight(&self, lag: usize) -> f64 {
        lag.checked_sub(1)
            .and_then(|i| self.records.get(i))
            .map_or(0.0, |r| r.weight)
    }
}

/// Kappa statistics for lags `1..=max_lag` normalized into weights.
pub fn weight_profile(
    seq: &ClassSequence,
    max_lag: usize,
    basis: WeightBasis,
) -> Result<LagWeightProfile> {
    if max_lag == 0 {
        return Err(WmcError::InvalidInput("max_lag must be at least 1".into()));
    }
    let mut observed = Vec::with_capacity(max_lag);
    let records = (1..=max_lag)
        .map(|lag| match lagged_table(seq, lag) {
            Ok(table) => {
                observed.push(true);
                let stat = weighted_kappa(&table);
                LagRecord {
                    lag,
                    pair_count: table.pair_count,
                    kappa: stat.kappa,
                    z_stat: stat.z_stat,
                    p_value: stat.p_value,
                    weight: 0.0,
                }
            }
            Err(_) => {
                observed.push(false);
                LagRecord {
                    lag,
                    pair_count: 0,
                    kappa: None,
                    z_stat: None,
                    p_value: None,
                    weight: 0.0,
                }
            }
        })
        .collect();
    if !observed.iter().any(|o| *o) {
        return Err(WmcError::NoAvailableLag { max_lag });
    }
    let mut profile = LagWeightProfile {
        max_lag,
        basis,
        records,
        uniform_fallback: false,
    };
    profile.normalize(&observed);
    Ok(profile)
}
