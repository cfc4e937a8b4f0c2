//! Fixtures shared by the benchmarks.

use commdecay::init::initial_values;
use commdecay::sampler::initial_state;
use commdecay::simharness::generate;
use commdecay::{BreakPoints, FlowDataset, ModelCase, ParameterState, SamplerConfig, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub data: FlowDataset,
    pub state: ParameterState,
    pub ranges: BreakPoints,
    pub y: Vec<f64>,
    pub config: SamplerConfig,
}

/// Simulated desk-style data with `s` locations, initialized for `case`.
pub fn fixture(s: usize, case: ModelCase, seed: u64) -> Fixture {
    let mut scenario = SimScenario::desk(0.38);
    scenario.s = s;
    let (ds, _) = generate(&scenario, &mut ChaCha8Rng::seed_from_u64(seed)).expect("simulation");
    let data = ds.data;
    let config = SamplerConfig::for_case(case);
    let init = initial_values(&data, case, config.grid_size).expect("initial values");
    let state = initial_state(&data, &init).expect("initial state");
    let ranges = BreakPoints::new(&data, state.theta.clone()).expect("ranges");
    let y = data.outcomes();
    Fixture {
        data,
        state,
        ranges,
        y,
        config,
    }
}
