//! Acceptance criteria, one pass/fail line each.
//!
//! Run with `cargo test -p wmc-cli --test acceptance`. Exits non-zero when
//! any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use wmc_cli::pipeline::{self, ModelFile};
use wmc_cli::{ingest, RunConfig};
use wmc_core::{
    backtest, estimate_transitions, fit_candidates, select_model, standardize, stationary,
    weight_profile, weighted_kappa, BacktestConfig, ClassSequence, ContingencyTable, Family,
    FitConfig, Grouping, LagWeightProfile, Matrix, Method, ModelConfig, RawSeries, WeightBasis,
    WmcError, WmcModel, YearMonth,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Median wall time of `reps` calls.
fn median_time<F: FnMut()>(reps: usize, mut f: F) -> Duration {
    let mut times: Vec<Duration> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    times.sort();
    times[reps / 2]
}

const KAPPAS: [f64; 7] = [0.812, -0.0512, 0.0382, -0.0411, 0.0083, -0.0746, 0.003];
const WEIGHTS: [f64; 7] = [0.7895, 0.0498, 0.0371, 0.0400, 0.0081, 0.0725, 0.0029];

fn weight_normalization() -> Outcome {
    let values: Vec<Option<f64>> = KAPPAS.iter().map(|k| Some(*k)).collect();
    let profile = LagWeightProfile::from_basis_values(WeightBasis::Kappa, &values)
        .map_err(|e| e.to_string())?;
    let dev = profile
        .weights()
        .iter()
        .zip(WEIGHTS)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(dev <= 5e-4, || format!("max deviation {dev:.2e}"))?;
    let t = median_time(101, || {
        std::hint::black_box(
            LagWeightProfile::from_basis_values(WeightBasis::Kappa, &values).unwrap(),
        );
    });
    ensure(t < Duration::from_millis(1), || format!("took {t:?}"))?;
    Ok(format!("max deviation {dev:.2e}, {t:?}"))
}

fn published_forecast() -> Outcome {
    let file = ModelFile::read(&fixture("reference_model.json")).map_err(|e| e.to_string())?;
    let (model, history) = file.stations[0].to_model().map_err(|e| e.to_string())?;
    let f = model.predict_one(&history).map_err(|e| e.to_string())?;
    let p = &f.distribution.probabilities;
    let (md, nn, mw) = (p[2], p[3], p[4]);
    for (name, got, want) in [("NN", nn, 0.7146), ("MW", mw, 0.1146), ("MD", md, 0.0701)] {
        ensure((got - want).abs() <= 1.5e-3, || {
            format!("P*({name}) = {got:.4}, expected {want}")
        })?;
    }
    ensure(f.distribution.predicted_class == 3, || {
        format!("argmax {}", f.distribution.predicted_class)
    })?;
    let t = median_time(101, || {
        std::hint::black_box(model.predict_one(&history).unwrap());
    });
    ensure(t < Duration::from_millis(1), || format!("took {t:?}"))?;
    Ok(format!(
        "P*(NN) {nn:.4}, P*(MW) {mw:.4}, P*(MD) {md:.4}, argmax NN, {t:?}"
    ))
}

fn synthetic_report() -> Outcome {
    let cfg = RunConfig::default();
    let data =
        ingest(&fixture("synthetic_stations.csv"), None, &cfg.scheme).map_err(|e| e.to_string())?;
    ensure(data.len() == 4, || format!("{} stations", data.len()))?;
    let report = pipeline::run_pipeline(&data, &cfg).map_err(|e| e.to_string())?;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    for s in &report.stations {
        let name = &s.station;
        ensure(s.sequence.months == 63 * 12, || {
            format!("{name}: {} months", s.sequence.months)
        })?;
        ensure(s.weights.records.len() == 7, || {
            format!("{name}: {} lags", s.weights.records.len())
        })?;
        let w = s.weights.weights();
        ensure(
            close(w.iter().sum(), 1.0) && w.iter().all(|x| *x >= 0.0),
            || format!("{name}: weights {w:?}"),
        )?;
        for r in &s.weights.records {
            let p = r
                .p_value
                .ok_or_else(|| format!("{name}: lag {} has no p-value", r.lag))?;
            ensure((0.0..=1.0).contains(&p) && r.kappa.is_some(), || {
                format!("{name}: lag {}", r.lag)
            })?;
        }
        let f = &s.forecasts[0].distribution;
        ensure(close(f.probabilities.iter().sum(), 1.0), || {
            format!("{name}: forecast off simplex")
        })?;
        let st = s
            .stationary
            .as_ref()
            .ok_or_else(|| format!("{name}: no stationary distribution"))?;
        ensure(
            close(st.probabilities.iter().sum(), 1.0) && st.residual < 1e-8,
            || format!("{name}: stationary"),
        )?;
        let c = s
            .steady_comparison
            .as_ref()
            .ok_or_else(|| format!("{name}: no steady comparison"))?;
        for ((d, a), b) in c
            .differences
            .iter()
            .zip(&f.probabilities)
            .zip(&st.probabilities)
        {
            ensure(close(*d, a - b), || format!("{name}: difference mismatch"))?;
        }
        let b = s
            .backtest
            .as_ref()
            .ok_or_else(|| format!("{name}: no backtest"))?;
        ensure(b.folds.len() == cfg.holdout, || {
            format!("{name}: {} folds", b.folds.len())
        })?;
        let total: u64 = b.confusion.iter().flatten().sum();
        let diag: u64 = (0..7).map(|i| b.confusion[i][i]).sum();
        ensure(
            total > 0 && b.hit_rate == diag as f64 / total as f64,
            || format!("{name}: hit rate"),
        )?;
        ensure(total as usize + b.skipped_folds <= b.folds.len(), || {
            format!("{name}: confusion total {total}")
        })?;
    }
    let summary = pipeline::render_summary(&report);
    for row in [
        "Kappa",
        "p-value",
        "Weight",
        "Forecast",
        "Steady state",
        "P*",
    ] {
        ensure(summary.matches(&format!("\n{row}")).count() >= 4, || {
            format!("summary lacks `{row}` rows")
        })?;
    }
    ensure(
        report
            .stations
            .iter()
            .any(|s| s.sequence.observed < s.sequence.months),
        || "fixture has no gaps".into(),
    )?;
    Ok(format!(
        "{} stations, all invariants hold",
        report.stations.len()
    ))
}

fn brute_force_counts(states: &[Option<usize>], d: usize, t: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; d]; d];
    for k in 0..states.len().saturating_sub(t) {
        if (k..=k + t).all(|i| states[i].is_some()) {
            counts[states[k].unwrap()][states[k + t].unwrap()] += 1;
        }
    }
    counts
}

fn transition_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for case in 0..100 {
        let d = rng.random_range(2..=7);
        let n = rng.random_range(5..=200);
        let states: Vec<Option<usize>> = (0..n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    None
                } else {
                    Some(rng.random_range(0..d))
                }
            })
            .collect();
        let seq = ClassSequence::from_states(d, states.clone()).unwrap();
        match estimate_transitions(&seq, 7) {
            Ok(set) => {
                for t in 1..=7 {
                    ensure(
                        set.lag(t).unwrap().counts == brute_force_counts(&states, d, t),
                        || format!("case {case} lag {t}"),
                    )?;
                    compared += 1;
                }
            }
            Err(WmcError::NoAvailableLag { .. }) => {
                for t in 1..=7 {
                    ensure(
                        brute_force_counts(&states, d, t)
                            .iter()
                            .flatten()
                            .all(|c| *c == 0),
                        || format!("case {case}: pairs exist but no lag available"),
                    )?;
                }
            }
            Err(e) => return Err(format!("case {case}: {e}")),
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), || format!("took {t:?}"))?;
    Ok(format!("{compared} lag tables equal, {t:?}"))
}

fn agreement_kappa(cells: &Matrix) -> f64 {
    let d = cells.len();
    let scale = ((d - 1) as f64).powi(2);
    let row: Vec<f64> = cells.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..d).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    let (mut po, mut pe) = (0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let a = 1.0 - (i as f64 - j as f64).powi(2) / scale;
            po += a * cells[i][j];
            pe += a * row[i] * col[j];
        }
    }
    (po - pe) / (1.0 - pe)
}

fn random_table(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let m: Matrix = (0..d)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let total: f64 = m.iter().flatten().sum();
    m.into_iter()
        .map(|r| r.into_iter().map(|x| x / total).collect())
        .collect()
}

fn kappa_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(2..=7);
        let cells = random_table(&mut rng, d);
        let k = weighted_kappa(&ContingencyTable::from_proportions(cells.clone(), 1000).unwrap())
            .kappa
            .ok_or("undefined kappa")?;
        worst = worst.max((k - agreement_kappa(&cells)).abs());
    }
    ensure(worst < 1e-12, || {
        format!("weighted formulations differ by {worst:.2e}")
    })?;
    let mut worst2: f64 = 0.0;
    for _ in 0..1000 {
        let c = random_table(&mut rng, 2);
        let po = c[0][0] + c[1][1];
        let (r0, c0) = (c[0][0] + c[0][1], c[0][0] + c[1][0]);
        let pe = r0 * c0 + (1.0 - r0) * (1.0 - c0);
        let k = weighted_kappa(&ContingencyTable::from_proportions(c, 1000).unwrap())
            .kappa
            .ok_or("undefined")?;
        worst2 = worst2.max((k - (po - pe) / (1.0 - pe)).abs());
    }
    ensure(worst2 < 1e-12, || {
        format!("d = 2 differs from Cohen's kappa by {worst2:.2e}")
    })?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), || format!("took {t:?}"))?;
    Ok(format!(
        "max differences {worst:.1e} and {worst2:.1e} (d = 2), {t:?}"
    ))
}

fn degeneracy() -> Outcome {
    let diag =
        ContingencyTable::from_counts(&[vec![5, 0, 0], vec![0, 3, 0], vec![0, 0, 7]]).unwrap();
    ensure(weighted_kappa(&diag).kappa == Some(1.0), || {
        "perfect table kappa != 1".into()
    })?;

    let single = LagWeightProfile::from_basis_values(WeightBasis::Kappa, &[Some(0.3)]).unwrap();
    ensure(single.weights() == vec![1.0], || {
        "single lag weight != 1".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let states: Vec<Option<usize>> = (0..300).map(|_| Some(rng.random_range(0..7))).collect();
    let seq = ClassSequence::from_states(7, states).unwrap();
    let m1 = WmcModel::fit(
        &seq,
        &ModelConfig {
            lags: wmc_core::LagSelection::Fixed(1),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let f = m1.predict_one(seq.states()).map_err(|e| e.to_string())?;
    let last = seq.states().last().unwrap().unwrap();
    ensure(
        f.distribution.probabilities == m1.matrices.row(1, last).unwrap(),
        || "m = 1 forecast differs from the lag-1 row".into(),
    )?;

    let identity: Matrix = (0..3)
        .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    ensure(
        matches!(stationary(&identity), Err(WmcError::NoUniqueStationary(_))),
        || "identity matrix did not fail".into(),
    )?;

    let constant = ClassSequence::from_states(7, vec![Some(3); 50]).unwrap();
    let profile = weight_profile(&constant, 7, WeightBasis::Kappa).map_err(|e| e.to_string())?;
    ensure(
        profile.records.iter().all(|r| r.kappa.is_none()) && profile.uniform_fallback,
        || "constant sequence: kappa defined or no fallback".into(),
    )?;
    Ok("five degenerate cases handled".into())
}

fn stationary_solver() -> Outcome {
    let start = Instant::now();
    let st = stationary(&vec![vec![0.9, 0.1], vec![0.5, 0.5]]).map_err(|e| e.to_string())?;
    let err = (st.probabilities[0] - 5.0 / 6.0)
        .abs()
        .max((st.probabilities[1] - 1.0 / 6.0).abs());
    ensure(err < 1e-9, || format!("two-state error {err:.2e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = rng.random_range(2..=7);
        let p: Matrix = (0..d)
            .map(|_| {
                let r: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let pi = stationary(&p)
            .map_err(|e| format!("case {case}: {e}"))?
            .probabilities;
        ensure(
            (pi.iter().sum::<f64>() - 1.0).abs() < 1e-10 && pi.iter().all(|x| *x >= 0.0),
            || format!("case {case}: off simplex"),
        )?;
        for j in 0..d {
            worst = worst.max(((0..d).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs());
        }
    }
    ensure(worst < 1e-8, || format!("residual {worst:.2e}"))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), || format!("took {t:?}"))?;
    Ok(format!(
        "two-state error {err:.1e}, worst residual {worst:.1e}, {t:?}"
    ))
}

fn sample_states(rng: &mut ChaCha8Rng, probs: &[f64], n: usize) -> Vec<Option<usize>> {
    let dist = rand_distr::weighted::WeightedIndex::new(probs).unwrap();
    (0..n).map(|_| Some(dist.sample(rng))).collect()
}

fn statistical_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = sample_states(&mut rng, &[1.0; 7], 10_000);
    let b = sample_states(&mut rng, &[1.0; 7], 10_000);
    let mut counts = vec![vec![0u64; 7]; 7];
    for (x, y) in a.iter().zip(&b) {
        counts[x.unwrap()][y.unwrap()] += 1;
    }
    let k = weighted_kappa(&ContingencyTable::from_counts(&counts).unwrap())
        .kappa
        .ok_or("undefined")?;
    ensure(k.abs() < 0.05, || format!("independent kappa {k}"))?;

    let marginal = [0.05, 0.08, 0.12, 0.45, 0.15, 0.1, 0.05];
    let seq = ClassSequence::from_states(7, sample_states(&mut rng, &marginal, 20_000)).unwrap();
    let model = WmcModel::fit(&seq, &ModelConfig::default()).map_err(|e| e.to_string())?;
    let f = model.predict_one(seq.states()).map_err(|e| e.to_string())?;
    let gap = f
        .distribution
        .probabilities
        .iter()
        .zip(marginal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(gap < 0.05, || format!("i.i.d. forecast gap {gap}"))?;

    let stay = 0.9;
    let p: Matrix = (0..7)
        .map(|i| {
            (0..7)
                .map(|j| if i == j { stay } else { (1.0 - stay) / 6.0 })
                .collect()
        })
        .collect();
    let rows: Vec<_> = p
        .iter()
        .map(|r| rand_distr::weighted::WeightedIndex::new(r).unwrap())
        .collect();
    let mut s = 3;
    let chain: Vec<Option<usize>> = (0..2_500)
        .map(|_| {
            let out = s;
            s = rows[s].sample(&mut rng);
            Some(out)
        })
        .collect();
    let report = backtest(
        &ClassSequence::from_states(7, chain).unwrap(),
        &BacktestConfig {
            holdout: 2_000,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let (wmc, clim) = (
        report.score(Method::Wmc).hit_rate,
        report.score(Method::Climatology).hit_rate,
    );
    ensure(report.score(Method::Wmc).scored == 2_000, || {
        "not every fold scored".into()
    })?;
    ensure(wmc >= clim, || {
        format!("WMC {wmc:.3} < climatology {clim:.3}")
    })?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:?}"))?;
    Ok(format!(
        "|kappa| {:.4}, i.i.d. gap {gap:.4}, hit rates WMC {wmc:.3} vs climatology {clim:.3}, {t:?}",
        k.abs()
    ))
}

fn index_module() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x: Vec<f64> = (0..5_000)
        .map(|_| rand_distr::Gamma::new(2.0, 30.0).unwrap().sample(&mut rng))
        .collect();
    let raw = RawSeries::new(
        "mc",
        YearMonth::new(1500, 1).unwrap(),
        "mm",
        x.iter().map(|v| Some(*v)).collect(),
    )
    .unwrap();
    let out =
        standardize(&raw, Grouping::Pooled, &FitConfig::default()).map_err(|e| e.to_string())?;
    let model = &out.models[0];
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let z_med = model.standardize((sorted[2_499] + sorted[2_500]) / 2.0);
    ensure(z_med.abs() < 0.05, || format!("median index {z_med}"))?;
    let z_hi = model.standardize(model.quantile(0.977));
    ensure((z_hi - 2.0).abs() < 0.1, || {
        format!("97.7th percentile index {z_hi}")
    })?;

    let families = [Family::Normal, Family::Gamma, Family::LogNormal];
    let mut correct = 0;
    for rep in 0..50 {
        let truth = families[rep % 3];
        let x: Vec<f64> = (0..2_000)
            .map(|_| match truth {
                Family::Normal => rand_distr::Normal::new(50.0, 10.0)
                    .unwrap()
                    .sample(&mut rng),
                Family::Gamma => rand_distr::Gamma::new(2.0, 10.0).unwrap().sample(&mut rng),
                Family::LogNormal => rand_distr::LogNormal::new(3.0, 0.5)
                    .unwrap()
                    .sample(&mut rng),
            })
            .collect();
        let best =
            select_model(&fit_candidates(&x, &FitConfig::default()).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        correct += usize::from(best.family == truth);
    }
    ensure(correct * 10 > 50 * 9, || {
        format!("AIC picked the true family {correct}/50 times")
    })?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))?;
    Ok(format!(
        "median {z_med:+.4}, 97.7th percentile {z_hi:.4}, AIC {correct}/50, {t:?}"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out_dir = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_wmc"))
            .arg("report")
            .arg(fixture("synthetic_stations.csv"))
            .arg("--out-dir")
            .arg(&out_dir)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("wmc exited with {status}"))?;
        std::fs::read(out_dir.join("report.json")).map_err(|e| e.to_string())
    };
    let (a, b) = (run("first")?, run("second")?);
    ensure(a == b, || "reports differ".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("lag weight normalization", weight_normalization),
        ("published one-step forecast", published_forecast),
        ("synthetic station report", synthetic_report),
        ("transition count oracle", transition_oracle),
        ("weighted kappa oracle", kappa_oracle),
        ("degeneracy suite", degeneracy),
        ("stationary solver", stationary_solver),
        ("statistical suite", statistical_suite),
        ("index module", index_module),
        ("report determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
