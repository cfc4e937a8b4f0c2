#![allow(dead_code)]

use commdecay::design::{Column, DesignMatrix, ModelCase};
use commdecay::sampler::ParameterState;
use commdecay::simharness::{generate, SimDataset, SimScenario, SimTruth};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn simulate(s: usize, sigma2: f64, seed: u64, edit: impl FnOnce(&mut SimScenario)) -> (SimDataset, SimTruth) {
    let mut sc = SimScenario::desk(sigma2);
    sc.s = s;
    edit(&mut sc);
    generate(&sc, &mut rng(seed)).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Batch-means Monte Carlo standard error of the mean.
pub fn mcse(v: &[f64], batches: usize) -> f64 {
    let len = v.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&v[b * len..(b + 1) * len])).collect();
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Normalized CDF of an unnormalized log-density by trapezoidal quadrature
/// on `[lo, hi]`.
pub fn quadrature_cdf(logf: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> impl Fn(f64) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| lo + h * k as f64).collect();
    let lf: Vec<f64> = xs.iter().map(|&x| logf(x)).collect();
    let max = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = lf.iter().map(|v| (v - max).exp()).collect();
    let mut cum = vec![0.0; points];
    for k in 1..points {
        cum[k] = cum[k - 1] + 0.5 * h * (f[k] + f[k - 1]);
    }
    let total = cum[points - 1];
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let k = (((x - lo) / h) as usize).min(points - 2);
        let t = (x - xs[k]) / h;
        (cum[k] + t * (cum[k + 1] - cum[k])) / total
    }
}

/// Single-column design and a matching one-location state.
pub fn toy_block(case: ModelCase, x: &[f64], col: Column) -> (DesignMatrix, ParameterState) {
    let p = match case {
        ModelCase::I => 4,
        ModelCase::II => 7,
    };
    let design = DesignMatrix {
        case,
        x: nalgebra::DMatrix::from_column_slice(x.len(), 1, x),
        columns: vec![col],
    };
    let state = ParameterState {
        case,
        mu: 0.0,
        beta: vec![0.0; p],
        theta: vec![0.0],
        sigma2: 1.0,
        lambda2: 1.0,
        tau2: vec![1.0; p],
        eta: vec![false],
        boundary: vec![false],
        routing: vec![false],
    };
    (design, state)
}

/// `n` values with mean zero and mean square one.
pub fn standardized(raw: Vec<f64>) -> Vec<f64> {
    let n = raw.len() as f64;
    let m = raw.iter().sum::<f64>() / n;
    let c: Vec<f64> = raw.iter().map(|v| v - m).collect();
    let sd = (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    c.iter().map(|v| v / sd).collect()
}

pub mod criteria;
pub mod oracles;
