//! Implementations checked against independent brute-force formulations.

use proptest::prelude::*;
use wmc_core::markov::mat_mul;
use wmc_core::{
    estimate_transitions, predict_one, stationary, steady_state_lag, weighted_kappa, ClassSequence,
    ContingencyTable, LagWeightProfile, Matrix, TransitionMatrixSet, WeightBasis,
};

/// Count pairs `(k, k + t)` by scanning every index and checking that no
/// month in between is missing.
fn brute_force_counts(states: &[Option<usize>], d: usize, t: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; d]; d];
    for k in 0..states.len() {
        if k + t >= states.len() {
            break;
        }
        if (k..=k + t).all(|i| states[i].is_some()) {
            counts[states[k].unwrap()][states[k + t].unwrap()] += 1;
        }
    }
    counts
}

fn sequence_strategy() -> impl Strategy<Value = (usize, Vec<Option<usize>>)> {
    (2usize..=7).prop_flat_map(|d| {
        let state = prop_oneof![1 => Just(None), 9 => (0..d).prop_map(Some)];
        (Just(d), prop::collection::vec(state, 5..=200))
    })
}

proptest! {
    #[test]
    fn transition_counts_match_enumeration((d, states) in sequence_strategy(), max_lag in 1usize..=7) {
        let seq = ClassSequence::from_states(d, states.clone()).unwrap();
        match estimate_transitions(&seq, max_lag) {
            Ok(set) => {
                for t in 1..=max_lag {
                    let lag = set.lag(t).unwrap();
                    prop_assert_eq!(&lag.counts, &brute_force_counts(&states, d, t));
                    let run_total: usize = seq.runs().iter().map(|r| r.len().saturating_sub(t)).sum();
                    prop_assert_eq!(lag.total_count() as usize, run_total);
                    for (i, row) in lag.probabilities.iter().enumerate() {
                        let n: u64 = lag.counts[i].iter().sum();
                        prop_assert_eq!(lag.row_support[i], n > 0);
                        if n > 0 {
                            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                            for (j, p) in row.iter().enumerate() {
                                prop_assert_eq!(*p, lag.counts[i][j] as f64 / n as f64);
                            }
                        } else {
                            prop_assert!(row.iter().all(|p| *p == 0.0));
                        }
                    }
                }
            }
            Err(_) => {
                for t in 1..=max_lag {
                    prop_assert!(brute_force_counts(&states, d, t).iter().flatten().all(|c| *c == 0));
                }
            }
        }
    }
}

/// Agreement-weight formulation `(p_o(w) - p_e(w)) / (1 - p_e(w))`.
fn agreement_kappa(cells: &Matrix) -> f64 {
    let d = cells.len();
    let scale = ((d - 1) as f64).powi(2);
    let row: Vec<f64> = cells.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..d).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    let mut po = 0.0;
    let mut pe = 0.0;
    for i in 0..d {
        for j in 0..d {
            let a = 1.0 - ((i as f64 - j as f64).powi(2)) / scale;
            po += a * cells[i][j];
            pe += a * row[i] * col[j];
        }
    }
    (po - pe) / (1.0 - pe)
}

fn table_strategy() -> impl Strategy<Value = Matrix> {
    (2usize..=7).prop_flat_map(|d| {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), d).prop_map(|m| {
            let total: f64 = m.iter().flatten().sum();
            m.into_iter()
                .map(|r| r.into_iter().map(|x| x / total).collect())
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kappa_formulations_agree(cells in table_strategy()) {
        let table = ContingencyTable::from_proportions(cells.clone(), 500).unwrap();
        let k = weighted_kappa(&table).kappa.unwrap();
        prop_assert!((k - agreement_kappa(&cells)).abs() < 1e-12);
        prop_assert!(k <= 1.0 + 1e-12);
    }

    #[test]
    fn kappa_is_invariant_to_weight_scale(cells in table_strategy(), c in 0.01f64..100.0) {
        let d = cells.len();
        let row: Vec<f64> = cells.iter().map(|r| r.iter().sum()).collect();
        let col: Vec<f64> = (0..d).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                let w = c * (i as f64 - j as f64).powi(2);
                num += w * cells[i][j];
                den += w * row[i] * col[j];
            }
        }
        let table = ContingencyTable::from_proportions(cells, 100).unwrap();
        let k = weighted_kappa(&table).kappa.unwrap();
        prop_assert!((k - (1.0 - num / den)).abs() < 1e-12);
    }

    #[test]
    fn two_class_kappa_is_cohens(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, e in 0.01f64..1.0) {
        let total = a + b + c + e;
        let cells = vec![vec![a / total, b / total], vec![c / total, e / total]];
        let po = cells[0][0] + cells[1][1];
        let r0 = cells[0][0] + cells[0][1];
        let c0 = cells[0][0] + cells[1][0];
        let pe = r0 * c0 + (1.0 - r0) * (1.0 - c0);
        let unweighted = (po - pe) / (1.0 - pe);
        let table = ContingencyTable::from_proportions(cells, 100).unwrap();
        if let Some(k) = weighted_kappa(&table).kappa {
            prop_assert!((k - unweighted).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_lie_on_simplex_and_permute(values in prop::collection::vec(-1.0f64..1.0, 1..10), rot in 0usize..10) {
        let vals: Vec<Option<f64>> = values.iter().map(|v| Some(*v)).collect();
        let profile = LagWeightProfile::from_basis_values(WeightBasis::Kappa, &vals).unwrap();
        let w = profile.weights();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));

        let r = rot % vals.len();
        let mut rotated = vals.clone();
        rotated.rotate_left(r);
        let mut expected = w.clone();
        expected.rotate_left(r);
        let w2 = LagWeightProfile::from_basis_values(WeightBasis::Kappa, &rotated).unwrap().weights();
        for (x, y) in w2.iter().zip(&expected) {
            prop_assert!((x - y).abs() < 1e-15);
        }
    }
}

fn stochastic_strategy() -> impl Strategy<Value = Matrix> {
    (2usize..=7).prop_flat_map(|d| {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, d), d).prop_map(|m| {
            m.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|x| x / s).collect()
                })
                .collect()
        })
    })
}

fn simplex_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, m).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>().max(1e-9);
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stationary_is_a_fixed_point(p in stochastic_strategy()) {
        let st = stationary(&p).unwrap();
        let pi = &st.probabilities;
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(pi.iter().all(|x| *x >= 0.0));
        let d = p.len();
        for j in 0..d {
            let v: f64 = (0..d).map(|i| pi[i] * p[i][j]).sum();
            prop_assert!((v - pi[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn forecast_is_convex_and_traceable(
        mats in prop::collection::vec(stochastic_strategy(), 3),
        history in prop::collection::vec(0usize..2, 3),
        w in simplex_strategy(3),
    ) {
        let d = mats.iter().map(Vec::len).min().unwrap();
        let mats: Vec<Matrix> = mats
            .into_iter()
            .map(|m| m.into_iter().take(d).map(|r| {
                let r: Vec<f64> = r.into_iter().take(d).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            }).collect())
            .collect();
        let set = TransitionMatrixSet::from_probabilities(mats).unwrap();
        let weights = LagWeightProfile::from_basis_values(
            WeightBasis::Kappa,
            &w.iter().map(|x| Some(*x)).collect::<Vec<_>>(),
        ).unwrap();
        let history: Vec<Option<usize>> = history.into_iter().map(Some).collect();
        let f = predict_one(&history, &set, &weights, &[]).unwrap();
        let p = &f.distribution.probabilities;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        let recomputed = f.trace.recompute();
        for (a, b) in recomputed.iter().zip(p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let pred = f.distribution.predicted_class;
        prop_assert!(p.iter().all(|x| *x <= p[pred]));
    }

    #[test]
    fn heavier_weight_pulls_toward_its_row(
        mats in prop::collection::vec(stochastic_strategy(), 2),
    ) {
        let d = mats[0].len().min(mats[1].len());
        let trim = |m: &Matrix| -> Matrix {
            m.iter().take(d).map(|r| {
                let r: Vec<f64> = r.iter().take(d).copied().collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            }).collect()
        };
        let set = TransitionMatrixSet::from_probabilities(vec![trim(&mats[0]), trim(&mats[1])]).unwrap();
        let target = set.row(1, 0).unwrap().to_vec();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let w1 = 0.5 + 0.05 * k as f64;
            let weights = LagWeightProfile::from_basis_values(
                WeightBasis::Kappa, &[Some(w1), Some(1.0 - w1)],
            ).unwrap();
            let f = predict_one(&[Some(1), Some(0)], &set, &weights, &[]).unwrap();
            let dist = f.distribution.probabilities.iter().zip(&target)
                .map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(dist <= last + 1e-12);
            last = dist;
        }
        prop_assert!(last < 1e-12);
    }
}

#[test]
fn steady_state_lag_matches_explicit_powering() {
    let p = vec![vec![0.9, 0.1], vec![0.5, 0.5]];
    let pi: [f64; 2] = [5.0 / 6.0, 1.0 / 6.0];
    let mut power = p.clone();
    let mut expected = None;
    for s in 1..=20 {
        let worst = power
            .iter()
            .flat_map(|row| row.iter().zip(&pi).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if worst < 0.01 {
            expected = Some(s);
            break;
        }
        power = mat_mul(&power, &p);
    }
    let expected = expected.unwrap();
    assert_eq!(expected, 5);
    let set = TransitionMatrixSet::from_one_step_powers(p, 10).unwrap();
    assert_eq!(steady_state_lag(&set, 0.01).unwrap(), expected);
}
