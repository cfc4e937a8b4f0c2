use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::lasso::LassoBlock;
use super::{lasso_gibbs_block, metropolis_theta_step, ChainTrace, ParameterState, SamplerConfig};
use crate::design::{boundary_check, build_design, full_layout, BreakPoints, Column, InclusionState, ModelCase};
use crate::error::{Error, Result};
use crate::flowdata::FlowDataset;
use crate::init::{initial_values, InitialValues};

/// Chain 1 state built from the crude starting values, with the shrinkage
/// scales and LASSO parameter set from the standardized coefficients.
pub fn initial_state(data: &FlowDataset, init: &InitialValues) -> Result<ParameterState> {
    let s = data.len();
    let p = full_layout(init.case, s).len();
    if init.theta0.len() != s || init.beta0.len() != p {
        return Err(Error::Dimension("initial values do not match the dataset".into()));
    }
    let routing = match init.case {
        ModelCase::I => vec![false; s],
        ModelCase::II => init.eta0.clone(),
    };
    let mut state = ParameterState {
        case: init.case,
        mu: init.mu0,
        beta: init.beta0.clone(),
        theta: init.theta0.clone(),
        sigma2: init.sigma2_0,
        lambda2: 1.0,
        tau2: vec![1.0; p],
        eta: init.eta0.clone(),
        boundary: init.boundary0.clone(),
        routing,
    };
    for i in 0..s {
        if !state.eta[i] || state.boundary[i] {
            let k = state.index(Column::Hinge(i));
            state.beta[k] = 0.0;
        }
    }
    let design = build_design(
        data,
        &BreakPoints::new(data, state.theta.clone())?,
        &InclusionState::new(state.routing.clone(), state.boundary.clone())?,
        init.case,
    )?;
    let block = LassoBlock::new(&design, &data.outcomes(), s)?;
    let b = block.standardized(&state);
    state.lambda2 = block.initial_lambda2(&b, state.sigma2);
    let (lambda, sigma) = (state.lambda2.sqrt(), state.sigma2.sqrt());
    for (k, c) in block.usable_columns().iter().enumerate() {
        let f = state.index(*c);
        state.tau2[f] = if b[k] != 0.0 { (b[k].abs() / (lambda * sigma)).clamp(1e-6, 1e6) } else { 1.0 };
    }
    Ok(state)
}

/// Overdispersed start for chains after the first: break points moved by
/// N(0, 0.1^2) (redrawn until inside their range) and each coefficient
/// scaled by U(0.8, 1.2).
fn jitter<R: Rng + ?Sized>(state: &mut ParameterState, ranges: &BreakPoints, rng: &mut R) {
    for i in 0..state.theta.len() {
        let base = state.theta[i];
        for _ in 0..100 {
            let z: f64 = rng.sample(StandardNormal);
            let t = base + 0.1 * z;
            if ranges.in_range(i, t) {
                state.theta[i] = t;
                break;
            }
        }
    }
    for b in state.beta.iter_mut() {
        *b *= rng.random_range(0.8..1.2);
    }
}

fn metropolis_block<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &FlowDataset,
    ranges: &BreakPoints,
    config: &SamplerConfig,
    rng: &mut R,
) -> Vec<bool> {
    (0..data.len())
        .map(|i| config.update_theta && metropolis_theta_step(state, data, ranges, i, config.sigma2_theta, rng))
        .collect()
}

fn refresh_boundary(state: &mut ParameterState, data: &FlowDataset, config: &SamplerConfig) {
    for i in 0..data.len() {
        let on = boundary_check(data, state.theta[i], i, config.boundary_fraction);
        state.boundary[i] = on;
        if on {
            let k = state.index(Column::Hinge(i));
            state.beta[k] = 0.0;
            if state.case == ModelCase::II {
                state.eta[i] = false;
            }
        }
    }
}

fn lasso_step<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &FlowDataset,
    ranges: &BreakPoints,
    routing: Vec<bool>,
    y: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    let bp = BreakPoints {
        theta: state.theta.clone(),
        range: ranges.range.clone(),
    };
    let incl = InclusionState::new(routing.clone(), state.boundary.clone())?;
    let design = build_design(data, &bp, &incl, state.case)?;
    lasso_gibbs_block(state, &design, y, config, rng)?;
    state.routing = routing;
    Ok(())
}

/// One Case I outer iteration: Metropolis updates of every break point,
/// boundary refresh, design rebuild and `inner_h` Gibbs sweeps. Returns the
/// per-source acceptance flags.
pub fn case1_outer_step<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &FlowDataset,
    ranges: &BreakPoints,
    y: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let accepted = metropolis_block(state, data, ranges, config, rng);
    refresh_boundary(state, data, config);
    for i in 0..data.len() {
        state.eta[i] = !state.boundary[i];
    }
    let routing = vec![false; data.len()];
    lasso_step(state, data, ranges, routing, y, config, rng)?;
    Ok(accepted)
}

/// One Case II outer iteration: as Case I, but rows are routed by the
/// current inclusion flags and the inner sweeps include birth/death moves.
pub fn case2_outer_step<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &FlowDataset,
    ranges: &BreakPoints,
    y: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let accepted = metropolis_block(state, data, ranges, config, rng);
    refresh_boundary(state, data, config);
    let routing = state.eta.clone();
    lasso_step(state, data, ranges, routing, y, config, rng)?;
    Ok(accepted)
}

pub fn outer_step<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &FlowDataset,
    ranges: &BreakPoints,
    y: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<bool>> {
    match state.case {
        ModelCase::I => case1_outer_step(state, data, ranges, y, config, rng),
        ModelCase::II => case2_outer_step(state, data, ranges, y, config, rng),
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_chain(
    data: &FlowDataset,
    config: &SamplerConfig,
    start: &ParameterState,
    ranges: &BreakPoints,
    chain: usize,
) -> Result<ChainTrace> {
    let mut rng = chain_rng(config.seed, chain);
    let mut state = start.clone();
    if chain > 0 {
        jitter(&mut state, ranges, &mut rng);
    }
    let y = data.outcomes();
    let mut trace = ChainTrace::new(chain, data, state.case);
    let fail = |iteration: usize, e: Error| Error::ChainFailure {
        chain,
        iteration,
        message: e.to_string(),
    };
    for t in 1..=config.outer_iterations {
        let accepted = outer_step(&mut state, data, ranges, &y, config, &mut rng).map_err(|e| fail(t, e))?;
        if t > config.burn_in {
            trace.proposals += 1;
            for (c, a) in trace.accept_counts.iter_mut().zip(accepted) {
                *c += a as u64;
            }
            if (t - config.burn_in) % config.thin == 0 {
                state.check().map_err(|e| fail(t, e))?;
                trace.push(t, state.clone());
            }
        }
    }
    Ok(trace)
}

/// Runs `config.chains` chains in parallel from the given starting values.
/// Chain `c` uses a ChaCha8 generator seeded with `config.seed` on stream
/// `c`, so results do not depend on thread scheduling.
pub fn run_chains_from(data: &FlowDataset, config: &SamplerConfig, init: &InitialValues) -> Result<Vec<ChainTrace>> {
    config.validate(init.case)?;
    let start = initial_state(data, init)?;
    let ranges = BreakPoints::new(data, start.theta.clone())?;
    (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(data, config, &start, &ranges, c))
        .collect()
}

/// Crude starting values followed by [`run_chains_from`].
pub fn run_chains(data: &FlowDataset, case: ModelCase, config: &SamplerConfig) -> Result<Vec<ChainTrace>> {
    config.validate(case)?;
    let init = initial_values(data, case, config.grid_size)?;
    run_chains_from(data, config, &init)
}
