mod common;

use common::oracles::*;
use common::*;
use commdecay::design::*;
use commdecay::init::fit_with_breaks;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn build_design_matches_entrywise_oracle() {
    let mut r = rng(100);
    for instance in 0..50 {
        let s = r.random_range(2..=6);
        let data = tied_instance(s, 0.8, &mut r);
        let (bp, incl) = random_state(&data, &mut r);
        for case in [ModelCase::I, ModelCase::II] {
            let d = build_design(&data, &bp, &incl, case).unwrap();
            assert_eq!(d.columns, expected_columns(case, s, &incl.boundary), "instance {instance}");
            assert_eq!(d.nrows(), data.pairs().len());
            for (row, p) in data.pairs().iter().enumerate() {
                for (c, &col) in d.columns.iter().enumerate() {
                    let want = design_entry(&data, &bp.theta, &incl.eta, case, p.source, p.destination, col);
                    assert_eq!(d.x[(row, c)], want, "instance {instance} row {row} {col:?}");
                }
            }
        }
    }
}

#[test]
fn boundary_rule_matches_counting() {
    let mut r = rng(101);
    for draw in 0..1000 {
        let s = r.random_range(2..=8);
        let data = tied_instance(s, 0.9, &mut r);
        let i = r.random_range(0..s);
        if data.rows_of(i).is_empty() {
            continue;
        }
        let (lo, hi) = data.theta_range(i).unwrap();
        let theta = if r.random_bool(0.2) {
            // Land exactly on an observed distance.
            let rows = data.rows_of(i);
            data.pair_log_distance(&data.pairs()[rows[r.random_range(0..rows.len())]])
        } else {
            r.random_range(lo - 0.2..hi + 0.2)
        };
        let fraction = [0.05, 0.2, 0.34, 0.5][draw % 4];
        assert_eq!(
            boundary_check(&data, theta, i, fraction),
            boundary_by_counting(&data, theta, i, fraction),
            "draw {draw}"
        );
    }
}

proptest! {
    #[test]
    fn build_design_is_deterministic(seed in 0u64..5000) {
        let mut r = rng(seed);
        let s = r.random_range(2..=7);
        let data = tied_instance(s, 0.7, &mut r);
        let (bp, incl) = random_state(&data, &mut r);
        for case in [ModelCase::I, ModelCase::II] {
            let a = build_design(&data, &bp, &incl, case).unwrap();
            let b = build_design(&data, &bp, &incl, case).unwrap();
            prop_assert_eq!(a.columns, b.columns);
            prop_assert!(a.x.iter().zip(b.x.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn dropped_hinge_equals_zero_coefficient(seed in 0u64..5000) {
        let mut r = rng(seed);
        let s = r.random_range(2..=7);
        let data = tied_instance(s, 0.8, &mut r);
        let (bp, mut incl) = random_state(&data, &mut r);
        let case = if r.random() { ModelCase::I } else { ModelCase::II };
        let beta: Vec<f64> = (0..full_layout(case, s).len()).map(|_| r.random_range(-2.0..2.0)).collect();
        let k = r.random_range(0..s);
        incl.boundary[k] = false;
        let kept = build_design(&data, &bp, &incl, case).unwrap();
        incl.boundary[k] = true;
        let dropped = build_design(&data, &bp, &incl, case).unwrap();
        let fitted = |d: &DesignMatrix, zero_k: bool| -> Vec<f64> {
            (0..d.nrows())
                .map(|row| {
                    d.columns.iter().enumerate().map(|(c, &col)| {
                        let b = if zero_k && col == Column::Hinge(k) { 0.0 } else { beta[full_index(case, s, col)] };
                        b * d.x[(row, c)]
                    }).sum::<f64>()
                })
                .collect()
        };
        let a = fitted(&kept, true);
        let b = fitted(&dropped, false);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}

#[test]
fn case2_with_uniform_eta_matches_case1_fit() {
    let (_, truth) = simulate(10, 0.0, 102, |sc| sc.truth.break_fraction = 1.0);
    let data = truth.dataset_with_noise(&vec![0.0; truth.mean.len()]).unwrap();
    let eta = vec![true; 10];
    let boundary = vec![false; 10];
    let (mu1, b1, _) = fit_with_breaks(&data, &truth.params.theta, &eta, &boundary, ModelCase::I).unwrap();
    let (mu2, b2, _) = fit_with_breaks(&data, &truth.params.theta, &eta, &boundary, ModelCase::II).unwrap();
    let logp = data.log_population();
    for p in data.pairs() {
        let args = (truth.params.theta[p.source], p.source, logp[p.source], logp[p.destination], data.pair_log_distance(p));
        let y1 = linear_predictor(ModelCase::I, mu1, &b1, args.0, true, args.1, args.2, args.3, args.4);
        let y2 = linear_predictor(ModelCase::II, mu2, &b2, args.0, true, args.1, args.2, args.3, args.4);
        assert!((y1 - y2).abs() < 1e-8);
        assert!((y1 - p.outcome).abs() < 1e-8);
    }
}
