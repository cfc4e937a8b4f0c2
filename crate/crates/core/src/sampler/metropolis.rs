use rand::Rng;
use rand_distr::StandardNormal;

use super::ParameterState;
use crate::design::{hinge, BreakPoints};
use crate::flowdata::FlowDataset;

/// Random-walk Metropolis update of one source's break point. Out-of-range
/// proposals are rejected; with a zero hinge coefficient the likelihood is
/// flat in `theta_i` and every in-range proposal is accepted. Only the
/// source's own rows depend on `theta_i`, so the likelihood ratio is taken
/// over those rows. Returns whether the proposal was accepted.
pub fn metropolis_theta_step<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &FlowDataset,
    ranges: &BreakPoints,
    source: usize,
    sigma2_theta: f64,
    rng: &mut R,
) -> bool {
    let z: f64 = rng.sample(StandardNormal);
    let current = state.theta[source];
    let proposal = current + sigma2_theta.sqrt() * z;
    if !ranges.in_range(source, proposal) {
        return false;
    }
    let b4 = state.hinge_coef(source);
    if b4 == 0.0 {
        state.theta[source] = proposal;
        return true;
    }
    let pairs = data.pairs();
    let logp = data.log_population();
    let mut delta = 0.0;
    for &r in data.rows_of(source) {
        let p = &pairs[r];
        let d = data.pair_log_distance(p);
        let base = state.base_predictor(source, logp[p.source], logp[p.destination], d);
        let e_cur = p.outcome - base - b4 * hinge(d, current);
        let e_new = p.outcome - base - b4 * hinge(d, proposal);
        delta += e_new * e_new - e_cur * e_cur;
    }
    let log_ratio = -delta / (2.0 * state.sigma2);
    let u: f64 = rng.random();
    if log_ratio >= 0.0 || u.ln() < log_ratio {
        state.theta[source] = proposal;
        true
    } else {
        false
    }
}
