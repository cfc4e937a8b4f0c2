use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, Normal, StandardNormal};

use super::{ParameterState, SamplerConfig};
use crate::design::{full_index, Column, DesignMatrix, ModelCase};
use crate::error::{Error, Result};

/// Smallest |b| used in the inverse-Gaussian mean for 1 / tau^2.
const MIN_ABS_COEF: f64 = 1e-12;

/// Sufficient statistics of a design on the centered, standardized scale.
/// Columns with zero centered norm are unusable and carry a zero coefficient.
#[derive(Clone, Debug)]
pub struct LassoBlock {
    n: usize,
    y_mean: f64,
    /// Design column index of each usable column.
    design_idx: Vec<usize>,
    /// Full-layout index of each usable column.
    full_idx: Vec<usize>,
    columns: Vec<Column>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl LassoBlock {
    pub fn new(design: &DesignMatrix, y: &[f64], locations: usize) -> Result<Self> {
        let n = design.nrows();
        if y.len() != n {
            return Err(Error::Dimension(format!("{} outcomes for {n} design rows", y.len())));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two observations".into()));
        }
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let mut design_idx = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for k in 0..design.ncols() {
            let col = design.x.column(k);
            let m = col.sum() / nf;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = (ss / nf).sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                design_idx.push(k);
                mean.push(m);
                scale.push(sd);
            }
        }
        let q = design_idx.len();
        let xs = DMatrix::from_fn(n, q, |r, c| (design.x[(r, design_idx[c])] - mean[c]) / scale[c]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let gram = xs.tr_mul(&xs);
        let xty = xs.tr_mul(&yc);
        let yty = yc.norm_squared();
        let columns: Vec<Column> = design_idx.iter().map(|&k| design.columns[k]).collect();
        let full_idx = columns
            .iter()
            .map(|&c| full_index(design.case, locations, c))
            .collect();
        Ok(Self {
            n,
            y_mean,
            design_idx,
            full_idx,
            columns,
            mean,
            scale,
            gram,
            xty,
            yty,
        })
    }

    pub fn usable_columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn usable_design_indices(&self) -> &[usize] {
        &self.design_idx
    }

    pub fn scales(&self) -> &[f64] {
        &self.scale
    }

    /// Centered residual sum of squares for standardized coefficients `b`
    /// (zero outside the active set).
    pub fn rss(&self, b: &[f64]) -> f64 {
        let bv = DVector::from_column_slice(b);
        (self.yty - 2.0 * bv.dot(&self.xty) + (&self.gram * &bv).dot(&bv)).max(0.0)
    }

    /// Standardized coefficients of `state` for the usable columns.
    pub fn standardized(&self, state: &ParameterState) -> Vec<f64> {
        self.full_idx
            .iter()
            .zip(&self.scale)
            .map(|(&f, &s)| state.beta[f] * s)
            .collect()
    }

    /// Starting LASSO parameter `p sqrt(sigma2) / sum |b|` on the
    /// standardized scale.
    pub fn initial_lambda2(&self, b: &[f64], sigma2: f64) -> f64 {
        let active: Vec<f64> = b.iter().copied().filter(|v| *v != 0.0).collect();
        let l1: f64 = active.iter().map(|v| v.abs()).sum();
        if active.is_empty() || !(l1 > 0.0) {
            return 1.0;
        }
        let lambda = active.len() as f64 * sigma2.sqrt() / l1;
        (lambda * lambda).clamp(1e-8, 1e8)
    }

    fn draw_beta<R: Rng + ?Sized>(
        &self,
        active: &[usize],
        b: &mut [f64],
        tau2: &[f64],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<()> {
        let p = active.len();
        if p == 0 {
            return Ok(());
        }
        let mut a = DMatrix::from_fn(p, p, |r, c| self.gram[(active[r], active[c])]);
        for (r, &k) in active.iter().enumerate() {
            a[(r, r)] += 1.0 / tau2[k];
        }
        let rhs = DVector::from_iterator(p, active.iter().map(|&k| self.xty[k]));
        let Some(chol) = Cholesky::new(a.clone()) else {
            let eig = a.symmetric_eigenvalues();
            let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            return Err(Error::NotPositiveDefinite { condition: max / min });
        };
        let mean = chol.solve(&rhs);
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let dev = chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or(Error::NotPositiveDefinite { condition: f64::INFINITY })?;
        let sd = sigma2.sqrt();
        for (r, &k) in active.iter().enumerate() {
            b[k] = mean[r] + sd * dev[r];
        }
        Ok(())
    }

    fn draw_tau2<R: Rng + ?Sized>(b: f64, lambda2: f64, sigma2: f64, rng: &mut R) -> f64 {
        let mean = (lambda2 * sigma2).sqrt() / b.abs().max(MIN_ABS_COEF);
        let inv = InverseGaussian::new(mean, lambda2)
            .map(|d| d.sample(rng))
            .unwrap_or(mean);
        (1.0 / inv).clamp(1e-300, 1e300)
    }

    /// One Gibbs sweep over beta, sigma2, tau2 and lambda2 for `active`.
    #[allow(clippy::too_many_arguments)]
    fn gibbs_sweep<R: Rng + ?Sized>(
        &self,
        active: &[usize],
        b: &mut [f64],
        tau2: &mut [f64],
        sigma2: &mut f64,
        lambda2: &mut f64,
        config: &SamplerConfig,
        rng: &mut R,
    ) -> Result<()> {
        self.draw_beta(active, b, tau2, *sigma2, rng)?;
        let p = active.len() as f64;
        if let Some(v) = config.fixed_sigma2 {
            *sigma2 = v;
        } else {
            let penalty: f64 = active.iter().map(|&k| b[k] * b[k] / tau2[k]).sum();
            let shape = (self.n as f64 - 1.0) / 2.0 + p / 2.0;
            let scale = (self.rss(b) + penalty) / 2.0;
            let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            *sigma2 = scale.max(f64::MIN_POSITIVE) / g.sample(rng);
        }
        for &k in active {
            tau2[k] = Self::draw_tau2(b[k], *lambda2, *sigma2, rng);
        }
        if let Some(v) = config.fixed_lambda2 {
            *lambda2 = v;
        } else {
            let rate = active.iter().map(|&k| tau2[k]).sum::<f64>() / 2.0 + config.lambda_rate;
            let g = Gamma::new(p + config.lambda_shape, 1.0 / rate)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            *lambda2 = g.sample(rng).max(1e-300);
        }
        Ok(())
    }

    /// Log of the birth acceptance ratio for coefficient value `bk` of
    /// column `k`, with proposal `N(m, v)` from the conditional least-squares
    /// fit and the marginal Laplace prior `lambda / (2 sigma) exp(-lambda |b| / sigma)`.
    fn birth_log_ratio(&self, k: usize, bk: f64, r: f64, sigma2: f64, lambda2: f64) -> f64 {
        let g = self.gram[(k, k)];
        let v = sigma2 / g;
        let m = r / g;
        let sigma = sigma2.sqrt();
        let lambda = lambda2.sqrt();
        let loglik = (2.0 * bk * r - bk * bk * g) / (2.0 * sigma2);
        let logprior = (lambda / (2.0 * sigma)).ln() - lambda * bk.abs() / sigma;
        let logprop = -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (bk - m).powi(2) / (2.0 * v);
        loglik + logprior - logprop
    }

    /// Birth or death of one uniformly chosen eligible hinge column.
    #[allow(clippy::too_many_arguments)]
    fn toggle<R: Rng + ?Sized>(
        &self,
        eligible: &[usize],
        in_model: &mut [bool],
        b: &mut [f64],
        tau2: &mut [f64],
        sigma2: f64,
        lambda2: f64,
        rng: &mut R,
    ) {
        if eligible.is_empty() {
            return;
        }
        let k = eligible[rng.random_range(0..eligible.len())];
        let g = self.gram[(k, k)];
        let mut r = self.xty[k];
        for (j, &inc) in in_model.iter().enumerate() {
            if inc && j != k {
                r -= self.gram[(k, j)] * b[j];
            }
        }
        let u: f64 = rng.random();
        if in_model[k] {
            let log_ratio = -self.birth_log_ratio(k, b[k], r, sigma2, lambda2);
            if u.ln() < log_ratio {
                in_model[k] = false;
                b[k] = 0.0;
            }
        } else {
            let proposal = Normal::new(r / g, (sigma2 / g).sqrt()).expect("positive variance");
            let bk = proposal.sample(rng);
            let log_ratio = self.birth_log_ratio(k, bk, r, sigma2, lambda2);
            if u.ln() < log_ratio {
                in_model[k] = true;
                b[k] = bk;
                tau2[k] = Self::draw_tau2(bk, lambda2, sigma2, rng);
            }
        }
    }
}

/// Runs `config.inner_h` sweeps of the Bayesian LASSO Gibbs sampler on
/// `design` and writes the draw back into `state`. In Case II with
/// `config.rj_moves`, every sweep is followed by a birth/death move on one
/// hinge column, and `eta` is set from the resulting model. Columns absent
/// from the design or with zero centered norm get a zero coefficient.
pub fn lasso_gibbs_block<R: Rng + ?Sized>(
    state: &mut ParameterState,
    design: &DesignMatrix,
    y: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<()> {
    let s = state.locations();
    let block = LassoBlock::new(design, y, s)?;
    let q = block.full_idx.len();
    let mut b = block.standardized(state);
    let mut tau2: Vec<f64> = block.full_idx.iter().map(|&f| state.tau2[f]).collect();
    let rj = state.case == ModelCase::II && config.rj_moves;
    let mut in_model: Vec<bool> = block
        .columns
        .iter()
        .map(|c| match *c {
            Column::Hinge(i) if state.case == ModelCase::II => state.eta[i],
            _ => true,
        })
        .collect();
    let eligible: Vec<usize> = (0..q)
        .filter(|&k| matches!(block.columns[k], Column::Hinge(_)))
        .collect();
    for k in 0..q {
        if !in_model[k] {
            b[k] = 0.0;
        }
    }
    let mut sigma2 = config.fixed_sigma2.unwrap_or(state.sigma2);
    let mut lambda2 = config.fixed_lambda2.unwrap_or(state.lambda2);
    for _ in 0..config.inner_h {
        let active: Vec<usize> = (0..q).filter(|&k| in_model[k]).collect();
        block.gibbs_sweep(&active, &mut b, &mut tau2, &mut sigma2, &mut lambda2, config, rng)?;
        if rj {
            block.toggle(&eligible, &mut in_model, &mut b, &mut tau2, sigma2, lambda2, rng);
        }
    }

    let mu_c = block.y_mean + (sigma2 / block.n as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
    state.beta.iter_mut().for_each(|v| *v = 0.0);
    let mut mu = mu_c;
    for k in 0..q {
        let f = block.full_idx[k];
        let beta = if in_model[k] { b[k] / block.scale[k] } else { 0.0 };
        state.beta[f] = beta;
        state.tau2[f] = tau2[k];
        mu -= block.mean[k] * beta;
    }
    state.mu = mu;
    state.sigma2 = sigma2;
    state.lambda2 = lambda2;
    if state.case == ModelCase::II {
        for i in 0..s {
            state.eta[i] = !state.boundary[i] && state.hinge_coef(i) != 0.0;
        }
    }
    Ok(())
}
