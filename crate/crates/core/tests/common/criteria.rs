//! Oracle computations shared by the unit tests and the acceptance run.
//! Each returns raw measurements; callers decide on tolerances.

use commdecay::design::{build_design, full_layout, BreakPoints, Column, InclusionState, ModelCase};
use commdecay::flowdata::{FlowDataset, Location};
use commdecay::init::{fit_with_breaks, theta_grid, InitialValues, DEFAULT_GRID_SIZE};
use commdecay::linalg::ols;
use commdecay::sampler::{lasso_gibbs_block, run_chains_from, SamplerConfig};
use commdecay::simharness::SimTruth;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;

/// Hinge column only, with the sampler's standardization (mean 0, mean
/// square 1) built in, so the standardized coefficient equals `beta`.
pub fn one_column(n: usize, slope: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let x = standardized((0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect());
    let y: Vec<f64> = x.iter().map(|v| slope * v + r.sample::<f64, _>(StandardNormal)).collect();
    (x, y)
}

pub fn centered_cross(x: &[f64], y: &[f64]) -> f64 {
    let ybar = mean(y);
    x.iter().zip(y).map(|(a, b)| a * (b - ybar)).sum()
}

/// KS distance between `draws` Gibbs draws of a single coefficient and the
/// exact posterior (Gaussian likelihood with the intercept integrated out,
/// times the Laplace(lambda / sigma) prior) evaluated by quadrature.
pub fn single_coefficient_ks(draws: usize) -> f64 {
    let n = 50;
    let (x, y) = one_column(n, 0.3, 2);
    let (sigma2, lambda2): (f64, f64) = (1.0, 4.0);
    let (g, r) = (n as f64, centered_cross(&x, &y));
    let lambda = f64::sqrt(lambda2);
    let logf = |b: f64| (2.0 * b * r - b * b * g) / (2.0 * sigma2) - lambda * b.abs() / sigma2.sqrt();
    let cdf = quadrature_cdf(logf, -3.0, 3.0, 60_001);

    let (design, mut state) = toy_block(ModelCase::I, &x, Column::Slope(0));
    let mut config = SamplerConfig::for_case(ModelCase::I);
    config.inner_h = 1;
    config.fixed_sigma2 = Some(sigma2);
    config.fixed_lambda2 = Some(lambda2);
    let mut rr = rng(3);
    let k = state.index(Column::Slope(0));
    for _ in 0..200 {
        lasso_gibbs_block(&mut state, &design, &y, &config, &mut rr).unwrap();
    }
    let sample: Vec<f64> = (0..draws)
        .map(|_| {
            lasso_gibbs_block(&mut state, &design, &y, &config, &mut rr).unwrap();
            state.beta[k]
        })
        .collect();
    ks_distance(&sample, cdf)
}

/// Starting values at given break points with every listed hinge.
pub fn fixed_start(data: &FlowDataset, case: ModelCase, theta: &[f64], eta: Vec<bool>) -> InitialValues {
    let s = data.len();
    let boundary = vec![false; s];
    let (mu0, beta0, sigma2_0) = fit_with_breaks(data, theta, &eta, &boundary, case).unwrap();
    InitialValues {
        case,
        theta0: theta.to_vec(),
        mu0,
        beta0,
        sigma2_0,
        eta0: eta,
        boundary0: boundary,
        fallback_sources: vec![],
    }
}

/// One posterior moment compared with its closed form.
pub struct MomentCheck {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub mcse: f64,
}

impl MomentCheck {
    /// Distance from the target in Monte Carlo standard errors.
    pub fn z(&self) -> f64 {
        (self.estimate - self.target).abs() / self.mcse
    }
}

/// Break points fixed at the truth, every hinge present and lambda2 -> 0:
/// posterior means of mu and every coefficient against the flat-prior OLS
/// solution, and the first two moments of sigma2 against
/// inverse-gamma((n - 1) / 2, RSS / 2).
pub fn vanishing_penalty_checks(iterations: usize) -> Vec<MomentCheck> {
    let (ds, truth) = simulate(8, 0.3, 11, |_| {});
    let data = &ds.data;
    let s = data.len();
    let init = fixed_start(data, ModelCase::I, &truth.params.theta, vec![true; s]);
    let mut config = SamplerConfig::for_case(ModelCase::I);
    config.chains = 1;
    config.outer_iterations = iterations + 2_000;
    config.burn_in = 2_000;
    config.update_theta = false;
    config.fixed_lambda2 = Some(1e-12);
    let traces = run_chains_from(data, &config, &init).unwrap();
    let states = &traces[0].states;

    let bp = BreakPoints::new(data, truth.params.theta.clone()).unwrap();
    let design = build_design(data, &bp, &InclusionState::all(s, true), ModelCase::I).unwrap();
    let n = design.nrows();
    let x = DMatrix::from_fn(n, design.ncols() + 1, |r, c| if c == 0 { 1.0 } else { design.x[(r, c - 1)] });
    let names: Vec<String> = (0..x.ncols()).map(|k| format!("c{k}")).collect();
    let fit = ols(&x, &data.outcomes(), &names).unwrap();
    let layout = full_layout(ModelCase::I, s);
    assert_eq!(layout, design.columns);

    let check = |name: String, draws: Vec<f64>, target: f64| MomentCheck {
        name,
        estimate: mean(&draws),
        target,
        mcse: mcse(&draws, 40),
    };
    let mut out = vec![check("mu".into(), states.iter().map(|st| st.mu).collect(), fit.coefficients[0])];
    for (k, col) in layout.iter().enumerate() {
        out.push(check(
            col.name(data),
            states.iter().map(|st| st.beta[k]).collect(),
            fit.coefficients[k + 1],
        ));
    }
    let (a, b) = ((n as f64 - 1.0) / 2.0, fit.rss / 2.0);
    out.push(check("E[sigma2]".into(), states.iter().map(|st| st.sigma2).collect(), b / (a - 1.0)));
    out.push(check(
        "E[sigma2^2]".into(),
        states.iter().map(|st| st.sigma2 * st.sigma2).collect(),
        b * b / ((a - 1.0) * (a - 2.0)),
    ));
    out
}

/// The four variance components by direct triple sums over chain, model
/// and draw.
pub fn decomposition_brute_force(x: &[Vec<f64>], m: &[Vec<u64>], models: &[u64]) -> [f64; 4] {
    let (c, t) = (x.len(), x[0].len());
    let k = models.len();
    let all: Vec<f64> = x.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let mut ss = [0.0; 4];
    for ci in 0..c {
        let chain_mean = x[ci].iter().sum::<f64>() / t as f64;
        for &model in models {
            let mut model_vals = vec![];
            for cj in 0..c {
                for r in 0..t {
                    if m[cj][r] == model {
                        model_vals.push(x[cj][r]);
                    }
                }
            }
            let model_mean = mean(&model_vals);
            let cell: Vec<f64> = (0..t).filter(|&r| m[ci][r] == model).map(|r| x[ci][r]).collect();
            if cell.is_empty() {
                continue;
            }
            let cell_mean = mean(&cell);
            for v in &cell {
                ss[0] += (v - grand).powi(2);
                ss[1] += (v - chain_mean).powi(2);
                ss[2] += (v - model_mean).powi(2);
                ss[3] += (v - cell_mean).powi(2);
            }
        }
    }
    let (c, t, k) = (c as f64, t as f64, k as f64);
    [
        ss[0] / (c * t - 1.0),
        ss[1] / (c * (t - 1.0)),
        ss[2] / (c * t - k),
        ss[3] / (c * (t - k)),
    ]
}

/// Noiseless data whose true break points sit on each source's search grid.
pub fn on_grid(s: usize, seed: u64, break_fraction: f64) -> (FlowDataset, SimTruth) {
    let (_, truth) = simulate(s, 0.0, seed, |sc| sc.truth.break_fraction = break_fraction);
    let frame = truth.dataset_with_noise(&vec![0.0; truth.mean.len()]).unwrap();
    let mut params = truth.params.clone();
    for i in 0..s {
        let grid = theta_grid(&frame, i, DEFAULT_GRID_SIZE);
        params.theta[i] = grid[15 + (i * 7) % 20];
    }
    let truth = truth.with_params(params).unwrap();
    let data = truth.dataset_with_noise(&vec![0.0; truth.mean.len()]).unwrap();
    (data, truth)
}

/// Equal populations on a `k x k` lattice with unit spacing; flows from the
/// central cell to every other cell.
pub fn uniform_grid(k: usize) -> FlowDataset {
    let s = k * k;
    let locs: Vec<Location> = (0..s)
        .map(|n| Location {
            id: format!("g{n}"),
            population: 1000.0,
            latitude: None,
            longitude: None,
        })
        .collect();
    let at = |n: usize| ((n / k) as f64, (n % k) as f64);
    let d = DMatrix::from_fn(s, s, |a, b| {
        let (p, q) = (at(a), at(b));
        ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
    });
    let center = (k / 2) * k + k / 2;
    let outcomes: Vec<_> = (0..s).filter(|&j| j != center).map(|j| (center, j, 0.0)).collect();
    FlowDataset::from_outcomes(locs, Some(d), &outcomes).unwrap()
}

/// Log-log slope of radiation flux against distance on [`uniform_grid`].
pub fn radiation_grid_slope(k: usize) -> f64 {
    let data = uniform_grid(k);
    let logf = commdecay::baselines::radiation_log_predictions(&data).unwrap();
    let d: Vec<f64> = data.pairs().iter().map(|p| data.pair_log_distance(p).exp()).collect();
    let f: Vec<f64> = logf.iter().map(|v| v.exp()).collect();
    commdecay::simharness::loglog_slope(&d, &f)
}
