//! Empirical t-step transition matrices and stationary distributions.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::ClassSequence;
use crate::error::{Result, WmcError};

/// Row-major square matrix.
pub type Matrix = Vec<Vec<f64>>;

/// Tolerance on row sums for externally supplied transition rows, which are
/// usually printed with four decimals.
pub const INPUT_ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMode {
    /// Each lag estimated from its own lag-t pairs.
    #[default]
    Direct,
    /// Lag t is the t-th power of the one-step matrix.
    MatrixPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionOptions {
    pub mode: EstimationMode,
    /// Additive smoothing applied to every row when positive.
    pub smoothing: f64,
}

/// Transition counts and probabilities at one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagTransitions {
    pub lag: usize,
    /// False when no pair `lag` months apart exists.
    pub available: bool,
    pub counts: Vec<Vec<u64>>,
    pub probabilities: Matrix,
    /// Rows with at least one observed departure (or smoothed rows).
    pub row_support: Vec<bool>,
}

impl LagTransitions {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row(&self, state: usize) -> Option<&[f64]> {
        (self.available && self.row_support[state]).then(|| self.probabilities[state].as_slice())
    }
}

/// The family `P(1)..P(m)` of lag-specific transition matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrixSet {
    pub class_count: usize,
    pub max_lag: usize,
    pub mode: EstimationMode,
    pub lags: Vec<LagTransitions>,
}

impl TransitionMatrixSet {
    /// Lag `t` (1-based), available or not.
    pub fn lag(&self, t: usize) -> Option<&LagTransitions> {
        t.checked_sub(1).and_then(|i| self.lags.get(i))
    }

    /// Row of `P(t)` for `state`, if that lag is available and the row supported.
    pub fn row(&self, t: usize, state: usize) -> Option<&[f64]> {
        self.lag(t).and_then(|l| l.row(state))
    }

    pub fn available_lags(&self) -> Vec<usize> {
        self.lags
            .iter()
            .filter(|l| l.available)
            .map(|l| l.lag)
            .collect()
    }

    pub fn one_step(&self) -> Option<&Matrix> {
        self.lag(1)
            .filter(|l| l.available)
            .map(|l| &l.probabilities)
    }

    /// Build a set from given lag matrices (lag 1 first). All-zero rows are
    /// treated as unsupported; other rows must sum to one within
    /// [`INPUT_ROW_SUM_TOLERANCE`]. Counts are left at zero.
    pub fn from_probabilities(matrices: Vec<Matrix>) -> Result<Self> {
        let class_count = matrices.first().map_or(0, Vec::len);
        if class_count < 2 {
            return Err(WmcError::InvalidInput(
                "need at least one matrix with two or more classes".into(),
            ));
        }
        let lags = matrices
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                check_square(&m, class_count)?;
                let mut row_support = Vec::with_capacity(class_count);
                for (r, row) in m.iter().enumerate() {
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(WmcError::InvalidInput(format!(
                            "lag {} row {r} has a negative or non-finite entry",
                            i + 1
                        )));
                    }
                    let sum: f64 = row.iter().sum();
                    let supported = sum > 0.0;
                    if supported && (sum - 1.0).abs() > INPUT_ROW_SUM_TOLERANCE {
                        return Err(WmcError::InvalidInput(format!(
                            "lag {} row {r} sums to {sum}",
                            i + 1
                        )));
                    }
                    row_support.push(supported);
                }
                let available = row_support.iter().any(|s| *s);
                Ok(LagTransitions {
                    lag: i + 1,
                    available,
                    counts: vec![vec![0; class_count]; class_count],
                    probabilities: m,
                    row_support,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            class_count,
            max_lag: lags.len(),
            mode: EstimationMode::Direct,
            lags,
        })
    }

    /// Lags `1..=max_lag` as successive powers of a one-step matrix.
    pub fn from_one_step_powers(one_step: Matrix, max_lag: usize) -> Result<Self> {
        if max_lag == 0 {
            return Err(WmcError::InvalidInput("max_lag must be at least 1".into()));
        }
        let base = Self::from_probabilities(vec![one_step])?;
        let first = base.lags.into_iter().next().expect("one matrix");
        Ok(Self {
            class_count: base.class_count,
            max_lag,
            mode: EstimationMode::MatrixPower,
            lags: power_lags(first, max_lag),
        })
    }
}

fn check_square(m: &Matrix, d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|r| r.len() != d) {
        return Err(WmcError::InvalidInput(format!("matrix must be {d}x{d}")));
    }
    Ok(())
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

/// Row vector times matrix.
pub fn vec_mul(v: &[f64], m: &Matrix) -> Vec<f64> {
    let n = m.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| v.iter().zip(m).map(|(x, row)| x * row[j]).sum())
        .collect()
}

/// Powers of the lag-1 matrix. A row whose mass leaks into unsupported
/// states is zeroed and marked unsupported.
fn power_lags(first: LagTransitions, max_lag: usize) -> Vec<LagTransitions> {
    let d = first.probabilities.len();
    let mut lags = Vec::with_capacity(max_lag);
    let mut power = first.probabilities.clone();
    lags.push(first.clone());
    for t in 2..=max_lag {
        power = mat_mul(&power, &first.probabilities);
        let mut probabilities = power.clone();
        let mut row_support = vec![false; d];
        for (i, row) in probabilities.iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if first.row_support[i] && (sum - 1.0).abs() <= 1e-9 {
                row_support[i] = true;
            } else {
                row.iter_mut().for_each(|p| *p = 0.0);
            }
        }
        lags.push(LagTransitions {
            lag: t,
            available: first.available && row_support.iter().any(|s| *s),
            counts: vec![vec![0; d]; d],
            probabilities,
            row_support,
        });
    }
    lags
}

fn count_pairs(seq: &ClassSequence, lag: usize) -> Vec<Vec<u64>> {
    let d = seq.class_count();
    let mut counts = vec![vec![0u64; d]; d];
    for run in seq.runs() {
        for (a, b) in run.iter().zip(run.iter().skip(lag)) {
            if let (Some(a), Some(b)) = (a, b) {
                counts[*a][*b] += 1;
            }
        }
    }
    counts
}

fn normalize_counts(lag: usize, counts: Vec<Vec<u64>>, smoothing: f64) -> LagTransitions {
    let d = counts.len();
    let total: u64 = counts.iter().flatten().sum();
    let mut row_support = vec![false; d];
    let probabilities = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row_total: u64 = row.iter().sum();
            if smoothing > 0.0 {
                row_support[i] = true;
                let denom = row_total as f64 + smoothing * d as f64;
                row.iter()
                    .map(|&c| (c as f64 + smoothing) / denom)
                    .collect()
            } else if row_total > 0 {
                row_support[i] = true;
                row.iter().map(|&c| c as f64 / row_total as f64).collect()
            } else {
                vec![0.0; d]
            }
        })
        .collect();
    LagTransitions {
        lag,
        available: total > 0,
        counts,
        probabilities,
        row_support,
    }
}

/// Direct per-lag estimation with raw frequencies.
pub fn estimate_transitions(seq: &ClassSequence, max_lag: usize) -> Result<TransitionMatrixSet> {
    estimate_transitions_with(seq, max_lag, &TransitionOptions::default())
}

/// Count all pairs `(X_k, X_{k+t})` inside contiguous runs for `t = 1..=max_lag`
/// and normalize supported rows. Lags without any pair are marked
/// unavailable; it is an error only when every lag is.
pub fn estimate_transitions_with(
    seq: &ClassSequence,
    max_lag: usize,
    options: &TransitionOptions,
) -> Result<TransitionMatrixSet> {
    if max_lag == 0 {
        return Err(WmcError::InvalidInput("max_lag must be at least 1".into()));
    }
    if !(options.smoothing >= 0.0 && options.smoothing.is_finite()) {
        return Err(WmcError::InvalidInput(
            "smoothing must be a finite non-negative number".into(),
        ));
    }
    let lags: Vec<LagTransitions> = match options.mode {
        EstimationMode::Direct => (1..=max_lag)
            .map(|t| normalize_counts(t, count_pairs(seq, t), options.smoothing))
            .collect(),
        EstimationMode::MatrixPower => {
            let first = normalize_counts(1, count_pairs(seq, 1), options.smoothing);
            let mut lags = power_lags(first, max_lag);
            for lag in lags.iter_mut().skip(1) {
                lag.counts = count_pairs(seq, lag.lag);
            }
            lags
        }
    };
    if lags.iter().all(|l| !l.available) {
        return Err(WmcError::NoAvailableLag { max_lag });
    }
    Ok(TransitionMatrixSet {
        class_count: seq.class_count(),
        max_lag,
        mode: options.mode,
        lags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    PowerIteration,
    LinearSolve,
}

impl fmt::Display for StationaryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StationaryMethod::PowerIteration => "power-iteration",
            StationaryMethod::LinearSolve => "linear-solve",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub probabilities: Vec<f64>,
    /// ∞-norm of `πP - π`.
    pub residual: f64,
    pub method: StationaryMethod,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryOptions {
    /// Successive-iterate ∞-norm at which power iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest accepted `‖πP - π‖∞`.
    pub residual_tolerance: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100_000,
            residual_tolerance: 1e-8,
        }
    }
}

/// Stationary distribution of a one-step matrix, starting power iteration
/// from the uniform distribution.
pub fn stationary(matrix: &Matrix) -> Result<StationaryDistribution> {
    stationary_from(matrix, None, &StationaryOptions::default())
}

/// Stationary distribution with power iteration started from `initial`
/// (typically the empirical class frequencies).
///
/// All-zero rows are states never seen departing. They are left out of the
/// chain: transitions into them are dropped and the remaining rows
/// renormalized, and they receive zero stationary mass.
pub fn stationary_from(
    matrix: &Matrix,
    initial: Option<&[f64]>,
    options: &StationaryOptions,
) -> Result<StationaryDistribution> {
    let d = matrix.len();
    check_square(matrix, d)?;
    if d == 0 {
        return Err(WmcError::InvalidInput("empty matrix".into()));
    }
    let support: Vec<usize> = (0..d)
        .filter(|&i| matrix[i].iter().any(|p| *p > 0.0))
        .collect();
    let r = support.len();
    if r == 0 {
        return Err(WmcError::NoUniqueStationary("no supported rows".into()));
    }
    let mut reduced: Matrix = support
        .iter()
        .map(|&i| support.iter().map(|&j| matrix[i][j]).collect())
        .collect();
    for (k, row) in reduced.iter_mut().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            return Err(WmcError::NoUniqueStationary(format!(
                "state {} only moves to unsupported states",
                support[k]
            )));
        }
        row.iter_mut().for_each(|p| *p /= sum);
    }

    let closed = closed_class_count(&reduced);
    if closed != 1 {
        return Err(WmcError::NoUniqueStationary(format!(
            "{closed} closed communicating classes"
        )));
    }

    let mut pi: Vec<f64> = match initial {
        Some(init) if init.len() == d => support.iter().map(|&i| init[i].max(0.0)).collect(),
        _ => vec![1.0; r],
    };
    let total: f64 = pi.iter().sum();
    if total > 0.0 && total.is_finite() {
        pi.iter_mut().for_each(|p| *p /= total);
    } else {
        pi = vec![1.0 / r as f64; r];
    }

    let mut found = None;
    for iteration in 1..=options.max_iterations {
        let next = vec_mul(&pi, &reduced);
        let delta = inf_norm_diff(&next, &pi);
        pi = next;
        if delta < options.tolerance {
            found = Some((pi.clone(), StationaryMethod::PowerIteration, iteration));
            break;
        }
    }
    let accept = |p: &[f64]| residual(p, &reduced) < options.residual_tolerance;
    let (pi, method, iterations) = match found {
        Some(f) if accept(&f.0) => f,
        _ => {
            let p = linear_solve(&reduced)?;
            if !accept(&p) {
                return Err(WmcError::NoUniqueStationary(
                    "neither power iteration nor the linear solve converged".into(),
                ));
            }
            (p, StationaryMethod::LinearSolve, 0)
        }
    };
    let res = residual(&pi, &reduced);
    let mut probabilities = vec![0.0; d];
    for (k, &i) in support.iter().enumerate() {
        probabilities[i] = pi[k];
    }
    Ok(StationaryDistribution {
        probabilities,
        residual: res,
        method,
        iterations,
    })
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn residual(pi: &[f64], m: &Matrix) -> f64 {
    inf_norm_diff(&vec_mul(pi, m), pi)
}

/// Solve `(Pᵀ - I)π = 0` with the last equation replaced by `Σπ = 1`.
fn linear_solve(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.len();
    let mut a = DMatrix::from_fn(n, n, |i, j| m[j][i] - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| WmcError::NoUniqueStationary("singular system".into()))?;
    let mut pi: Vec<f64> = x
        .iter()
        .map(|v| if *v < 0.0 && *v > -1e-12 { 0.0 } else { *v })
        .collect();
    if pi.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(WmcError::NoUniqueStationary(
            "linear solve left the simplex".into(),
        ));
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Number of closed communicating classes; a unique stationary distribution
/// exists exactly when this is one.
fn closed_class_count(m: &Matrix) -> usize {
    let n = m.len();
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i == j || m[i][j] > 0.0).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let recurrent = |i: usize| (0..n).all(|j| !reach[i][j] || reach[j][i]);
    // Count each recurrent class once, by its smallest member.
    (0..n)
        .filter(|&i| recurrent(i) && (0..i).all(|j| !(reach[i][j] && reach[j][i])))
        .count()
}

/// Smallest available lag `s` whose supported rows all lie within
/// `tolerance` (∞-norm) of the stationary distribution of `P(1)`, or
/// `max_lag` when none does.
pub fn steady_state_lag(set: &TransitionMatrixSet, tolerance: f64) -> Result<usize> {
    let available = set.available_lags();
    if available.len() < 2 {
        return Err(WmcError::InsufficientLags {
            found: available.len(),
            required: 2,
        });
    }
    let one_step = set
        .one_step()
        .ok_or_else(|| WmcError::NoUniqueStationary("lag 1 is unavailable".into()))?;
    let pi = stationary(one_step)?.probabilities;
    for t in available {
        let lag = set.lag(t).expect("available lag exists");
        let worst = lag
            .probabilities
            .iter()
            .zip(&lag.row_support)
            .filter(|(_, s)| **s)
            .map(|(row, _)| inf_norm_diff(row, &pi))
            .fold(0.0, f64::max);
        if worst < tolerance {
            return Ok(t);
        }
    }
    Ok(set.max_lag)
}
