//! MCMC engine: a Metropolis block for the per-source break points
//! alternating with a Bayesian LASSO Gibbs block (Case I) or a
//! reversible-jump Bayesian LASSO block over the hinge columns (Case II).

mod chain;
mod lasso;
mod metropolis;
mod trace;

pub use chain::{case1_outer_step, case2_outer_step, initial_state, outer_step, run_chains, run_chains_from};
pub use lasso::{lasso_gibbs_block, LassoBlock};
pub use metropolis::metropolis_theta_step;
pub use trace::{read_trace, write_trace, ChainTrace};

use serde::{Deserialize, Serialize};

use crate::design::{full_index, hinge, slope_offset, Column, ModelCase};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Variance of the normal random-walk proposal for each break point.
    pub sigma2_theta: f64,
    pub outer_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Gibbs (Case I) or reversible-jump (Case II) sweeps per outer iteration.
    pub inner_h: usize,
    pub chains: usize,
    pub seed: u64,
    /// Gamma(shape, rate) hyperprior on the squared LASSO parameter.
    pub lambda_shape: f64,
    pub lambda_rate: f64,
    pub boundary_fraction: f64,
    pub grid_size: usize,
    /// Disable to hold every break point at its starting value.
    pub update_theta: bool,
    /// Disable to freeze the Case II model (no birth/death moves).
    pub rj_moves: bool,
    pub fixed_sigma2: Option<f64>,
    pub fixed_lambda2: Option<f64>,
}

impl SamplerConfig {
    pub fn for_case(case: ModelCase) -> Self {
        Self {
            sigma2_theta: 0.2,
            outer_iterations: 15_000,
            burn_in: 5_000,
            thin: 1,
            inner_h: match case {
                ModelCase::I => 2,
                ModelCase::II => 3,
            },
            chains: 4,
            seed: 1,
            lambda_shape: 1.0,
            lambda_rate: 0.1,
            boundary_fraction: crate::design::BOUNDARY_FRACTION,
            grid_size: crate::init::DEFAULT_GRID_SIZE,
            update_theta: true,
            rj_moves: true,
            fixed_sigma2: None,
            fixed_lambda2: None,
        }
    }

    pub fn validate(&self, case: ModelCase) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.sigma2_theta > 0.0) {
            return bad("sigma2_theta must be positive");
        }
        if self.outer_iterations == 0 || self.thin == 0 || self.inner_h == 0 || self.chains == 0 {
            return bad("outer_iterations, thin, inner_h and chains must be positive");
        }
        if self.burn_in >= self.outer_iterations {
            return bad("burn_in must be smaller than outer_iterations");
        }
        if case == ModelCase::II && self.inner_h < 3 {
            return bad("Case II needs at least 3 inner sweeps");
        }
        if !(self.lambda_shape > 0.0 && self.lambda_rate > 0.0) {
            return bad("lambda hyperparameters must be positive");
        }
        if self.fixed_sigma2.is_some_and(|v| !(v > 0.0)) || self.fixed_lambda2.is_some_and(|v| !(v > 0.0)) {
            return bad("fixed sigma2 / lambda2 must be positive");
        }
        Ok(())
    }
}

/// One MCMC state. Coefficients and their shrinkage scales are stored in
/// [`crate::design::full_layout`] order. `tau2` refers to standardized
/// columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub case: ModelCase,
    /// Intercept of the reference group (the only group in Case I).
    pub mu: f64,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub lambda2: f64,
    pub tau2: Vec<f64>,
    pub eta: Vec<bool>,
    pub boundary: Vec<bool>,
    /// Group routing (Case II) under which `beta` was drawn.
    pub routing: Vec<bool>,
}

impl ParameterState {
    pub fn locations(&self) -> usize {
        self.theta.len()
    }

    pub fn index(&self, col: Column) -> usize {
        full_index(self.case, self.locations(), col)
    }

    pub fn hinge_coef(&self, source: usize) -> f64 {
        self.beta[self.index(Column::Hinge(source))]
    }

    /// (reference-group intercept, with-break-group intercept).
    pub fn intercepts(&self) -> (f64, f64) {
        match self.case {
            ModelCase::I => (self.mu, self.mu),
            ModelCase::II => (self.mu, self.mu + self.beta[self.index(Column::GroupOffset)]),
        }
    }

    pub fn linear_predictor(&self, source: usize, log_m: f64, log_n: f64, log_d: f64) -> f64 {
        crate::design::linear_predictor(
            self.case,
            self.mu,
            &self.beta,
            self.theta[source],
            self.routing[source],
            source,
            log_m,
            log_n,
            log_d,
        )
    }

    /// Linear predictor without the hinge term.
    pub(crate) fn base_predictor(&self, source: usize, log_m: f64, log_n: f64, log_d: f64) -> f64 {
        self.linear_predictor(source, log_m, log_n, log_d)
            - self.hinge_coef(source) * hinge(log_d, self.theta[source])
    }

    pub fn model_label(&self) -> u64 {
        model_label(&self.eta)
    }

    pub fn check(&self) -> Result<()> {
        let s = self.locations();
        let p = slope_offset(self.case) + 2 * s;
        let fail = |m: String| Err(Error::InvalidArgument(format!("invalid state: {m}")));
        if self.beta.len() != p || self.tau2.len() != p {
            return fail(format!("coefficient vector length {} != {p}", self.beta.len()));
        }
        if self.eta.len() != s || self.boundary.len() != s || self.routing.len() != s {
            return fail("flag vector lengths".into());
        }
        if !(self.sigma2 > 0.0) || !(self.lambda2 > 0.0) {
            return fail(format!("sigma2 = {}, lambda2 = {}", self.sigma2, self.lambda2));
        }
        if self.tau2.iter().any(|&t| !(t > 0.0)) {
            return fail("non-positive tau2".into());
        }
        if !self.mu.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return fail("non-finite coefficients".into());
        }
        for i in 0..s {
            if (!self.eta[i] || self.boundary[i]) && self.hinge_coef(i) != 0.0 {
                return fail(format!("hinge coefficient of source {i} must be zero"));
            }
        }
        Ok(())
    }
}

/// FNV-1a hash of the inclusion pattern, used as a model identity.
pub fn model_label(eta: &[bool]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &e in eta {
        h ^= e as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
