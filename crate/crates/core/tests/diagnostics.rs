mod common;

use common::criteria::*;
use common::*;
use commdecay::design::ModelCase;
use commdecay::diagnostics::*;
use commdecay::sampler::{ChainTrace, ParameterState};
use commdecay::simharness::{replicates, state_predictions};
use commdecay::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn hand_evaluated_single_model_components() {
    let d = variance_decomposition_values(&[vec![1.0, 3.0], vec![2.0, 4.0]], &[vec![0, 0], vec![0, 0]]).unwrap();
    assert_eq!(d.v_hat, 5.0 / 3.0);
    assert_eq!(d.w_c, 2.0);
    assert_eq!(d.models, 1);
    assert_eq!(d.r_cm, vec![vec![2], vec![2]]);
}

#[test]
fn constant_samples_give_zero_components() {
    let d = variance_decomposition_values(&[vec![0.7; 5], vec![0.7; 5]], &[vec![1, 2, 1, 2, 1], vec![2; 5]]).unwrap();
    assert_eq!((d.v_hat, d.w_c, d.w_m, d.w_m_w_c), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(d.psrf(), (1.0, 1.0));
    for row in &d.r_cm {
        assert_eq!(row.iter().sum::<usize>(), 5);
    }
}

#[test]
fn two_model_toy_matches_direct_sums() {
    let x = vec![vec![1.0, 2.5, -0.5, 4.0], vec![0.2, 3.1, 2.2, -1.4]];
    let m = vec![vec![7, 9, 7, 9], vec![9, 9, 7, 9]];
    let d = variance_decomposition_values(&x, &m).unwrap();
    let want = decomposition_brute_force(&x, &m, &[7, 9]);
    let got = [d.v_hat, d.w_c, d.w_m, d.w_m_w_c];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
    assert_eq!(d.r_cm, vec![vec![2, 2], vec![1, 3]]);
}

#[test]
fn iid_normal_chains_have_unit_psrf() {
    let mut r = rng(3);
    let x: Vec<Vec<f64>> = (0..2).map(|_| (0..2000).map(|_| r.sample(StandardNormal)).collect()).collect();
    let labels = vec![vec![0u64; 2000]; 2];
    let (p1, _) = variance_decomposition_values(&x, &labels).unwrap().psrf();
    assert!((0.9..=1.1).contains(&p1), "{p1}");
}

#[test]
fn decomposition_rejects_bad_input() {
    assert!(variance_decomposition_values(&[vec![1.0]], &[vec![0]]).is_err());
    assert!(variance_decomposition_values(&[vec![1.0, 2.0], vec![1.0]], &[vec![0, 0], vec![0]]).is_err());
    assert!(variance_decomposition_values(&[vec![], vec![]], &[vec![], vec![]]).is_err());
}

#[test]
fn zero_denominator_with_spread_is_infinite() {
    // Every draw is its own chain-model cell, so the within-cell variance has no degrees of freedom.
    let d = variance_decomposition_values(&[vec![1.0], vec![2.0]], &[vec![1], vec![2]]).unwrap();
    assert_eq!(d.w_c, 0.0);
    assert_eq!(d.psrf().0, f64::INFINITY);
}

proptest! {
    #[test]
    fn psrf_is_affine_invariant(
        seed in 0u64..10_000,
        t in 5usize..40,
        a in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64],
        b in -100.0..100.0f64,
    ) {
        let mut r = rng(seed);
        let x: Vec<Vec<f64>> = (0..3).map(|_| (0..t).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let m: Vec<Vec<u64>> = (0..3).map(|_| (0..t).map(|_| r.random_range(0..3)).collect()).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|c| c.iter().map(|v| a * v + b).collect()).collect();
        let (p1, p2) = variance_decomposition_values(&x, &m).unwrap().psrf();
        let (q1, q2) = variance_decomposition_values(&y, &m).unwrap().psrf();
        prop_assert!((p1 - q1).abs() <= 1e-10 * p1.abs().max(1.0));
        prop_assert!((p2 - q2).abs() <= 1e-10 * p2.abs().max(1.0));
    }

    #[test]
    fn equal_tailed_interval_widens_as_alpha_shrinks(
        seed in 0u64..10_000,
        n in 1usize..200,
        a1 in 0.001..0.999f64,
        a2 in 0.001..0.999f64,
    ) {
        let mut r = rng(seed);
        let v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let (lo, hi) = (a1.min(a2), a1.max(a2));
        let wide = equal_tailed(&v, lo).unwrap();
        let narrow = equal_tailed(&v, hi).unwrap();
        prop_assert!(wide.0 <= narrow.0 && narrow.1 <= wide.1);
        prop_assert!(narrow.0 <= narrow.1);
    }
}

#[test]
fn quantile_interpolates_between_order_statistics() {
    let v = [1.0, 2.0, 4.0, 8.0];
    assert_eq!(quantile(&v, 0.0), 1.0);
    assert_eq!(quantile(&v, 1.0), 8.0);
    assert_eq!(quantile(&v, 0.5), 3.0);
    assert!(equal_tailed(&[], 0.05).is_none());
}

/// Traces holding `draws` copies of `state` per chain.
fn constant_traces(data: &commdecay::flowdata::FlowDataset, state: &ParameterState, chains: usize, draws: usize) -> Vec<ChainTrace> {
    (0..chains)
        .map(|c| {
            let mut tr = ChainTrace::new(c, data, state.case);
            for k in 0..draws {
                tr.push(k, state.clone());
            }
            tr
        })
        .collect()
}

#[test]
fn constant_chains_summarize_to_degenerate_intervals() {
    let (ds, truth) = simulate(8, 0.38, 11, |_| {});
    let traces = constant_traces(&ds.data, &truth.params, 2, 20);
    let report = summarize(&traces, 0.05).unwrap();
    assert!(report.psrf1_series.iter().all(|&p| p == 1.0));
    assert!(report.psrf2_series.iter().all(|&p| p == 1.0));
    let mu = report.interval("mu").unwrap();
    assert_eq!((mu.lower, mu.upper), (Some(truth.params.mu), Some(truth.params.mu)));
    assert_eq!(report.models_visited, 1);
    for (i, ti) in report.theta_intervals.iter().enumerate() {
        assert_eq!(ti.available(), truth.has_break(i));
        assert_eq!(report.inclusion_probabilities[i], if truth.has_break(i) { 1.0 } else { 0.0 });
        if truth.has_break(i) {
            assert!(ti.covers(truth.params.theta[i]));
            assert!(report.break_present[i]);
        }
    }
    for iv in &report.intervals {
        if let (Some(l), Some(u)) = (iv.lower, iv.upper) {
            assert!(l <= u);
        }
    }
}

#[test]
fn identical_draws_give_zero_width_predictions() {
    let (ds, truth) = simulate(6, 0.0, 12, |_| {});
    let traces = constant_traces(&ds.data, &truth.params, 2, 10);
    let preds = predict(&traces, &NewPair::from_dataset(&ds.data), &PredictOptions::default()).unwrap();
    for (p, pair) in preds.iter().zip(ds.data.pairs()) {
        assert_eq!(p.lower, p.upper);
        assert!((p.mean - p.lower).abs() < 1e-12);
        assert!((p.mean - pair.outcome).abs() < 1e-9);
    }
}

#[test]
fn single_model_prediction_is_posterior_mean() {
    let (ds, truth) = simulate(6, 0.38, 13, |_| {});
    let mut r = rng(14);
    let mut traces = vec![ChainTrace::new(0, &ds.data, ModelCase::I), ChainTrace::new(1, &ds.data, ModelCase::I)];
    let mut states = vec![];
    for k in 0..50 {
        let mut st = truth.params.clone();
        st.mu += 0.1 * r.sample::<f64, _>(StandardNormal);
        st.beta[0] += 0.05 * r.sample::<f64, _>(StandardNormal);
        traces[k % 2].push(k, st.clone());
        states.push(st);
    }
    let preds = posterior_mean_predictions(&traces, &ds.data).unwrap();
    let direct: Vec<Vec<f64>> = states.iter().map(|s| state_predictions(s, &ds.data)).collect();
    for (j, p) in preds.iter().enumerate() {
        let want = mean(&direct.iter().map(|d| d[j]).collect::<Vec<_>>());
        assert!((p - want).abs() < 1e-10);
    }
    let opts = PredictOptions { predictive: true, seed: 3, ..Default::default() };
    let wide = predict(&traces, &NewPair::from_dataset(&ds.data), &opts).unwrap();
    let narrow = predict(&traces, &NewPair::from_dataset(&ds.data), &PredictOptions::default()).unwrap();
    let width = |v: &[Prediction]| v.iter().map(|p| p.upper - p.lower).sum::<f64>();
    assert!(width(&wide) > width(&narrow));
}

#[test]
fn unknown_location_is_an_error() {
    let (ds, truth) = simulate(6, 0.38, 15, |_| {});
    let traces = constant_traces(&ds.data, &truth.params, 2, 3);
    let mut q = NewPair::from_dataset(&ds.data).remove(0);
    q.destination = "nowhere".into();
    assert!(matches!(
        predict(&traces, &[q], &PredictOptions::default()),
        Err(Error::UnknownLocation(_))
    ));
}

#[test]
fn prediction_error_properties() {
    let (ds, truth) = simulate(20, 0.38, 16, |_| {});
    let exact: Vec<f64> = truth.mean.iter().map(|m| m.2).collect();
    let clean = replicates(&truth, 0.0, 3, &mut rng(1)).unwrap();
    assert_eq!(prediction_error(&ds.data, &exact, &clean).unwrap(), 0.0);

    let mut reps = replicates(&truth, 0.38, 200, &mut rng(2)).unwrap();
    let e = prediction_error(&ds.data, &exact, &reps).unwrap();
    assert!((e / 0.38 - 1.0).abs() < 0.03, "{e}");
    reps.reverse();
    reps.swap(3, 50);
    let f = prediction_error(&ds.data, &exact, &reps).unwrap();
    assert!((e - f).abs() < 1e-12);

    let (other, _) = simulate(20, 0.38, 17, |_| {});
    assert!(matches!(
        prediction_error(&ds.data, &exact, &[other.data]),
        Err(Error::CovariateMismatch(_))
    ));
}
