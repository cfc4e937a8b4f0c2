//! Synthetic flow data with known break points, the desk-scale simulation
//! study (prediction error, Metropolis acceptance, break-point coverage) and
//! the per-iteration scaling benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::fit_gravity;
use crate::design::{full_layout, BreakPoints, Column, ModelCase};
use crate::diagnostics::{posterior_mean_predictions, prediction_error, summarize};
use crate::error::{Error, Result};
use crate::flowdata::{FlowDataset, Location};
use crate::init::{crude_bic_model, initial_values, InitialValues};
use crate::sampler::{initial_state, outer_step, run_chains_from, ParameterState, SamplerConfig};

/// Kilometres per degree of latitude on the mean-radius sphere.
const KM_PER_DEGREE: f64 = 111.195;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// Locations uniform on a square of the given side, placed around the
    /// given latitude; populations log-uniform on `population_range`.
    SyntheticUniform {
        side_km: f64,
        center_latitude: f64,
        population_range: (f64, f64),
    },
    /// Locations, populations and distances of an existing dataset.
    FromDataset {
        locations: Vec<Location>,
        distance_km: Vec<Vec<f64>>,
    },
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::SyntheticUniform {
            side_km: 500.0,
            center_latitude: 40.0,
            population_range: (1e3, 1e5),
        }
    }
}

impl Geometry {
    pub fn from_dataset(data: &FlowDataset) -> Self {
        let d = data.distance_km();
        Geometry::FromDataset {
            locations: data.locations().to_vec(),
            distance_km: (0..d.nrows()).map(|i| d.row(i).iter().copied().collect()).collect(),
        }
    }
}

/// Generative parameter defaults. Slopes, hinge coefficients and break
/// points are drawn per source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub mu: f64,
    pub beta_source: f64,
    pub beta_dest: f64,
    pub slope_range: (f64, f64),
    /// Fraction of sources with a break (rounded to a count).
    pub break_fraction: f64,
    /// Range of |hinge coefficient|; the sign is random.
    pub hinge_magnitude: (f64, f64),
    /// Break points lie between these quantiles of the source's log-distances.
    pub theta_quantiles: (f64, f64),
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            mu: -4.0,
            beta_source: 1.0,
            beta_dest: 1.0,
            slope_range: (-1.6, -0.8),
            break_fraction: 2.0 / 3.0,
            hinge_magnitude: (1.0, 2.5),
            theta_quantiles: (0.3, 0.7),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub s: usize,
    pub sigma2: f64,
    pub geometry: Geometry,
    pub truth: TruthSpec,
    /// Independent training datasets (noise draws) in a study.
    pub datasets: usize,
    /// Fresh replicate datasets used for prediction error.
    pub replicates: usize,
    /// Break-point proposal variances to sweep.
    pub sweep: Vec<f64>,
    pub seed: u64,
}

impl SimScenario {
    /// Desk-scale defaults: 20 locations, two datasets, 100 replicates.
    pub fn desk(sigma2: f64) -> Self {
        Self {
            s: 20,
            sigma2,
            geometry: Geometry::default(),
            truth: TruthSpec::default(),
            datasets: 2,
            replicates: 100,
            sweep: vec![0.03, 0.1, 0.2, 0.4],
            seed: 2024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.s < 2 {
            return bad(format!("S = {} must be at least 2", self.s));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return bad(format!("sigma2 = {} must be finite and non-negative", self.sigma2));
        }
        if self.sweep.iter().any(|v| !(*v > 0.0)) {
            return bad("sweep values must be positive".into());
        }
        let t = &self.truth;
        if !(0.0..=1.0).contains(&t.break_fraction)
            || !(0.0 <= t.theta_quantiles.0 && t.theta_quantiles.0 <= t.theta_quantiles.1 && t.theta_quantiles.1 <= 1.0)
            || t.slope_range.0 > t.slope_range.1
            || t.hinge_magnitude.0 > t.hinge_magnitude.1
        {
            return bad("invalid truth specification".into());
        }
        if let Geometry::FromDataset { locations, .. } = &self.geometry {
            if locations.len() != self.s {
                return bad(format!("geometry has {} locations, S = {}", locations.len(), self.s));
            }
        }
        Ok(())
    }
}

/// Everything needed to regenerate outcomes: covariates, the generative
/// parameters (as a Case I state whose `eta` marks true breaks) and the
/// noise-free linear predictor of every ordered pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub locations: Vec<Location>,
    pub distance_km: Vec<Vec<f64>>,
    pub params: ParameterState,
    /// `(source, destination, linear predictor)` in pair order.
    pub mean: Vec<(usize, usize, f64)>,
}

impl SimTruth {
    pub fn has_break(&self, source: usize) -> bool {
        self.params.eta[source]
    }

    pub fn break_sources(&self) -> Vec<usize> {
        (0..self.params.theta.len()).filter(|&i| self.has_break(i)).collect()
    }

    /// Same covariates with new generative parameters; means are recomputed.
    pub fn with_params(&self, params: ParameterState) -> Result<SimTruth> {
        if params.theta.len() != self.locations.len() {
            return Err(Error::Dimension("parameter state does not match the locations".into()));
        }
        let frame = self.dataset_with_noise(&vec![0.0; self.mean.len()])?;
        let logp = frame.log_population();
        let mean = frame
            .pairs()
            .iter()
            .map(|p| {
                let lp = params.linear_predictor(p.source, logp[p.source], logp[p.destination], frame.pair_log_distance(p));
                (p.source, p.destination, lp)
            })
            .collect();
        Ok(SimTruth {
            locations: self.locations.clone(),
            distance_km: self.distance_km.clone(),
            params,
            mean,
        })
    }

    fn distance_matrix(&self) -> DMatrix<f64> {
        let s = self.locations.len();
        DMatrix::from_fn(s, s, |i, j| self.distance_km[i][j])
    }

    /// Dataset with outcome `mean + noise` for each pair.
    pub fn dataset_with_noise(&self, noise: &[f64]) -> Result<FlowDataset> {
        if noise.len() != self.mean.len() {
            return Err(Error::Dimension("noise length".into()));
        }
        let outcomes: Vec<(usize, usize, f64)> = self
            .mean
            .iter()
            .zip(noise)
            .map(|(&(i, j, m), e)| (i, j, m + e))
            .collect();
        FlowDataset::from_outcomes(self.locations.clone(), Some(self.distance_matrix()), &outcomes)
    }

    /// A fresh noise draw at variance `sigma2`.
    pub fn draw_dataset<R: Rng + ?Sized>(&self, sigma2: f64, rng: &mut R) -> Result<SimDataset> {
        let noise = draw_noise(self.mean.len(), sigma2, rng)?;
        Ok(SimDataset {
            data: self.dataset_with_noise(&noise)?,
            noise,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SimDataset {
    pub data: FlowDataset,
    pub noise: Vec<f64>,
}

fn draw_noise<R: Rng + ?Sized>(n: usize, sigma2: f64, rng: &mut R) -> Result<Vec<f64>> {
    if sigma2 == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..n).map(|_| normal.sample(rng)).collect())
}

fn draw_geometry<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<(Vec<Location>, DMatrix<f64>)> {
    match &scenario.geometry {
        Geometry::SyntheticUniform {
            side_km,
            center_latitude,
            population_range,
        } => {
            let (lo, hi) = population_range;
            if !(*lo >= 1.0 && hi >= lo && *side_km > 0.0) {
                return Err(Error::InvalidArgument("invalid synthetic geometry".into()));
            }
            let km_per_lon = KM_PER_DEGREE * center_latitude.to_radians().cos();
            let locs: Vec<Location> = (0..scenario.s)
                .map(|k| {
                    let x: f64 = rng.random_range(0.0..*side_km);
                    let y: f64 = rng.random_range(0.0..*side_km);
                    let pop = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
                    Location::new(
                        format!("L{k:03}"),
                        pop,
                        center_latitude + (y - side_km / 2.0) / KM_PER_DEGREE,
                        (x - side_km / 2.0) / km_per_lon,
                    )
                })
                .collect();
            let data = FlowDataset::from_outcomes(locs.clone(), None, &[])?;
            Ok((locs, data.distance_km().clone()))
        }
        Geometry::FromDataset { locations, distance_km } => {
            let s = locations.len();
            let m = DMatrix::from_fn(s, s, |i, j| distance_km[i][j]);
            Ok((locations.clone(), m))
        }
    }
}

/// Geometry, generative parameters and noise-free means for `scenario`.
pub fn draw_truth<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<SimTruth> {
    scenario.validate()?;
    let (locations, dist) = draw_geometry(scenario, rng)?;
    let s = locations.len();
    let spec = &scenario.truth;
    let frame = FlowDataset::from_outcomes(
        locations.clone(),
        Some(dist.clone()),
        &(0..s)
            .flat_map(|i| (0..s).filter(move |&j| j != i).map(move |j| (i, j, 0.0)))
            .collect::<Vec<_>>(),
    )?;
    let n_breaks = (spec.break_fraction * s as f64).round() as usize;
    let mut has_break = vec![false; s];
    for i in sample(rng, s, n_breaks.min(s)) {
        has_break[i] = true;
    }
    let layout = full_layout(ModelCase::I, s);
    let mut beta = vec![0.0; layout.len()];
    let mut theta = vec![0.0; s];
    let idx = |c: Column| crate::design::full_index(ModelCase::I, s, c);
    beta[idx(Column::SourcePop { with_break: false })] = spec.beta_source;
    beta[idx(Column::DestPop { with_break: false })] = spec.beta_dest;
    for i in 0..s {
        beta[idx(Column::Slope(i))] = rng.random_range(spec.slope_range.0..=spec.slope_range.1);
        let mut d: Vec<f64> = frame
            .rows_of(i)
            .iter()
            .map(|&r| frame.pair_log_distance(&frame.pairs()[r]))
            .collect();
        d.sort_by(f64::total_cmp);
        let lo = crate::diagnostics::quantile(&d, spec.theta_quantiles.0);
        let hi = crate::diagnostics::quantile(&d, spec.theta_quantiles.1);
        theta[i] = rng.random_range(lo..=hi);
        if has_break[i] {
            let mag = rng.random_range(spec.hinge_magnitude.0..=spec.hinge_magnitude.1);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            beta[idx(Column::Hinge(i))] = sign * mag;
        }
    }
    let params = ParameterState {
        case: ModelCase::I,
        mu: spec.mu,
        tau2: vec![1.0; beta.len()],
        beta,
        theta,
        sigma2: scenario.sigma2.max(f64::MIN_POSITIVE),
        lambda2: 1.0,
        eta: has_break,
        boundary: vec![false; s],
        routing: vec![false; s],
    };
    let logp = frame.log_population();
    let mean = frame
        .pairs()
        .iter()
        .map(|p| {
            let lp = params.linear_predictor(
                p.source,
                logp[p.source],
                logp[p.destination],
                frame.pair_log_distance(p),
            );
            (p.source, p.destination, lp)
        })
        .collect();
    Ok(SimTruth {
        locations,
        distance_km: (0..s).map(|i| dist.row(i).iter().copied().collect()).collect(),
        params,
        mean,
    })
}

/// Truth plus one noisy dataset at the scenario's error variance.
pub fn generate<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<(SimDataset, SimTruth)> {
    let truth = draw_truth(scenario, rng)?;
    let ds = truth.draw_dataset(scenario.sigma2, rng)?;
    Ok((ds, truth))
}

/// `count` fresh datasets with the same covariates and parameters.
pub fn replicates<R: Rng + ?Sized>(truth: &SimTruth, sigma2: f64, count: usize, rng: &mut R) -> Result<Vec<FlowDataset>> {
    (0..count)
        .map(|_| truth.draw_dataset(sigma2, rng).map(|d| d.data))
        .collect()
}

/// Parameter state holding crude starting values, for prediction.
fn state_from_init(init: &InitialValues) -> ParameterState {
    let s = init.theta0.len();
    ParameterState {
        case: init.case,
        mu: init.mu0,
        beta: init.beta0.clone(),
        theta: init.theta0.clone(),
        sigma2: init.sigma2_0,
        lambda2: 1.0,
        tau2: vec![1.0; init.beta0.len()],
        eta: init.eta0.clone(),
        boundary: init.boundary0.clone(),
        routing: match init.case {
            ModelCase::I => vec![false; s],
            ModelCase::II => init.eta0.clone(),
        },
    }
}

/// Predicted log-intensity for every retained pair of `data` from one state.
pub fn state_predictions(state: &ParameterState, data: &FlowDataset) -> Vec<f64> {
    let logp = data.log_population();
    data.pairs()
        .iter()
        .map(|p| state.linear_predictor(p.source, logp[p.source], logp[p.destination], data.pair_log_distance(p)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: SimScenario,
    /// Base sampler settings; `sigma2_theta` is replaced by each sweep value.
    pub sampler: SamplerConfig,
    pub case: ModelCase,
}

impl StudyConfig {
    /// Desk-scale study: 4 chains, 5,000 iterations with 1,000 burn-in.
    pub fn desk(sigma2: f64) -> Self {
        let case = ModelCase::I;
        let mut sampler = SamplerConfig::for_case(case);
        sampler.outer_iterations = 5_000;
        sampler.burn_in = 1_000;
        Self {
            scenario: SimScenario::desk(sigma2),
            sampler,
            case,
        }
    }
}

/// One (dataset, proposal variance) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub dataset: usize,
    pub sigma2_theta: f64,
    pub lasso_mse: Option<f64>,
    pub mean_acceptance: Option<f64>,
    /// Fraction of true-break sources whose break-point interval covers the
    /// truth (unavailable intervals count as not covering).
    pub coverage: Option<f64>,
    pub covered: usize,
    pub break_sources: usize,
    pub final_psrf1: Option<f64>,
    pub final_psrf2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBaselines {
    pub dataset: usize,
    pub gravity_mse: Option<f64>,
    pub crude_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub truth: SimTruth,
    pub baselines: Vec<DatasetBaselines>,
    pub cells: Vec<StudyCell>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl StudyReport {
    pub fn cells_at(&self, sigma2_theta: f64) -> impl Iterator<Item = &StudyCell> {
        self.cells.iter().filter(move |c| c.sigma2_theta == sigma2_theta)
    }

    pub fn mean_lasso_mse(&self, sigma2_theta: f64) -> Option<f64> {
        mean_of(self.cells_at(sigma2_theta).filter_map(|c| c.lasso_mse))
    }

    pub fn mean_acceptance(&self, sigma2_theta: f64) -> Option<f64> {
        mean_of(self.cells_at(sigma2_theta).filter_map(|c| c.mean_acceptance))
    }

    /// Coverage pooled over datasets and true-break sources.
    pub fn pooled_coverage(&self, sigma2_theta: f64) -> Option<f64> {
        let (c, n) = self
            .cells_at(sigma2_theta)
            .filter(|c| c.error.is_none())
            .fold((0, 0), |(c, n), cell| (c + cell.covered, n + cell.break_sources));
        (n > 0).then(|| c as f64 / n as f64)
    }

    pub fn mean_gravity_mse(&self) -> Option<f64> {
        mean_of(self.baselines.iter().filter_map(|b| b.gravity_mse))
    }

    pub fn mean_crude_mse(&self) -> Option<f64> {
        mean_of(self.baselines.iter().filter_map(|b| b.crude_mse))
    }

    fn fmt(v: Option<f64>) -> String {
        v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
    }

    /// Prediction error: one row per model, one column per dataset.
    pub fn table1_csv(&self) -> String {
        let d = self.config.scenario.datasets;
        let mut out = String::from("model,sigma2_theta");
        for k in 0..d {
            let _ = write!(out, ",dataset{}", k + 1);
        }
        out.push('\n');
        let row = |out: &mut String, name: &str, st: &str, vals: Vec<Option<f64>>| {
            let _ = write!(out, "{name},{st}");
            for v in vals {
                let _ = write!(out, ",{}", Self::fmt(v));
            }
            out.push('\n');
        };
        row(&mut out, "gravity", "", self.baselines.iter().map(|b| b.gravity_mse).collect());
        row(&mut out, "crude_bic", "", self.baselines.iter().map(|b| b.crude_mse).collect());
        for &st in &self.config.scenario.sweep {
            let vals = (0..d)
                .map(|k| self.cells.iter().find(|c| c.dataset == k && c.sigma2_theta == st).and_then(|c| c.lasso_mse))
                .collect();
            row(&mut out, "bayesian_lasso", &st.to_string(), vals);
        }
        out
    }

    fn sweep_table(&self, f: impl Fn(&StudyCell) -> Option<f64>) -> String {
        let d = self.config.scenario.datasets;
        let mut out = String::from("sigma2_theta");
        for k in 0..d {
            let _ = write!(out, ",dataset{}", k + 1);
        }
        out.push('\n');
        for &st in &self.config.scenario.sweep {
            let _ = write!(out, "{st}");
            for k in 0..d {
                let v = self.cells.iter().find(|c| c.dataset == k && c.sigma2_theta == st).and_then(&f);
                let _ = write!(out, ",{}", Self::fmt(v));
            }
            out.push('\n');
        }
        out
    }

    /// Mean Metropolis acceptance rate by proposal variance.
    pub fn table2_csv(&self) -> String {
        self.sweep_table(|c| c.mean_acceptance)
    }

    /// Break-point interval coverage by proposal variance.
    pub fn table3_csv(&self) -> String {
        self.sweep_table(|c| c.coverage)
    }
}

fn dataset_seed(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn run_cell(
    config: &StudyConfig,
    truth: &SimTruth,
    data: &FlowDataset,
    reps: &[FlowDataset],
    init: &InitialValues,
    dataset: usize,
    sigma2_theta: f64,
) -> StudyCell {
    let mut cell = StudyCell {
        dataset,
        sigma2_theta,
        lasso_mse: None,
        mean_acceptance: None,
        coverage: None,
        covered: 0,
        break_sources: truth.break_sources().len(),
        final_psrf1: None,
        final_psrf2: None,
        error: None,
    };
    let mut sampler = config.sampler.clone();
    sampler.sigma2_theta = sigma2_theta;
    sampler.seed = config.sampler.seed.wrapping_add(1000 * dataset as u64);
    let result = (|| -> Result<()> {
        let traces = run_chains_from(data, &sampler, init)?;
        let report = summarize(&traces, 0.05)?;
        let preds = posterior_mean_predictions(&traces, data)?;
        cell.lasso_mse = Some(prediction_error(data, &preds, reps)?);
        cell.mean_acceptance = Some(report.mean_acceptance);
        let breaks = truth.break_sources();
        cell.covered = breaks
            .iter()
            .filter(|&&i| report.theta_intervals[i].covers(truth.params.theta[i]))
            .count();
        if !breaks.is_empty() {
            cell.coverage = Some(cell.covered as f64 / breaks.len() as f64);
        }
        cell.final_psrf1 = report.psrf1_series.last().copied();
        cell.final_psrf2 = report.psrf2_series.last().copied();
        Ok(())
    })();
    if let Err(e) = result {
        cell.error = Some(e.to_string());
    }
    cell
}

/// Runs the study: one truth, `datasets` training draws, `replicates`
/// prediction draws, and a Bayesian LASSO fit for every (dataset, sweep
/// value) cell. Failures are recorded in the affected cells.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let sc = &config.scenario;
    sc.validate()?;
    config.sampler.validate(config.case)?;
    let mut rng = dataset_seed(sc.seed, 0);
    let truth = draw_truth(sc, &mut rng)?;
    let mut rep_rng = dataset_seed(sc.seed, 1);
    let reps = replicates(&truth, sc.sigma2, sc.replicates.max(1), &mut rep_rng)?;
    let datasets: Vec<FlowDataset> = (0..sc.datasets)
        .map(|k| {
            let mut r = dataset_seed(sc.seed, 2 + k as u64);
            truth.draw_dataset(sc.sigma2, &mut r).map(|d| d.data)
        })
        .collect::<Result<_>>()?;

    let baselines: Vec<DatasetBaselines> = datasets
        .iter()
        .enumerate()
        .map(|(k, data)| {
            let mut b = DatasetBaselines {
                dataset: k,
                gravity_mse: None,
                crude_mse: None,
                error: None,
            };
            let res = (|| -> Result<()> {
                let g = fit_gravity(data)?;
                let logp = data.log_population();
                let gp: Vec<f64> = data
                    .pairs()
                    .iter()
                    .map(|p| g.params.log_intensity(logp[p.source], logp[p.destination], data.pair_log_distance(p)))
                    .collect::<Result<_>>()?;
                b.gravity_mse = Some(prediction_error(data, &gp, &reps)?);
                let crude = crude_bic_model(data, config.case, config.sampler.grid_size)?;
                let cp = state_predictions(&state_from_init(&crude), data);
                b.crude_mse = Some(prediction_error(data, &cp, &reps)?);
                Ok(())
            })();
            if let Err(e) = res {
                b.error = Some(e.to_string());
            }
            b
        })
        .collect();

    let inits: Vec<Option<InitialValues>> = datasets
        .iter()
        .map(|d| initial_values(d, config.case, config.sampler.grid_size).ok())
        .collect();
    let jobs: Vec<(usize, f64)> = (0..sc.datasets)
        .flat_map(|k| sc.sweep.iter().map(move |&st| (k, st)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(k, st)| match &inits[k] {
            Some(init) => run_cell(config, &truth, &datasets[k], &reps, init, k, st),
            None => StudyCell {
                dataset: k,
                sigma2_theta: st,
                lasso_mse: None,
                mean_acceptance: None,
                coverage: None,
                covered: 0,
                break_sources: truth.break_sources().len(),
                final_psrf1: None,
                final_psrf2: None,
                error: Some(
                    initial_values(&datasets[k], config.case, config.sampler.grid_size)
                        .err()
                        .map(|e| e.to_string())
                        .unwrap_or_default(),
                ),
            },
        })
        .collect();
    Ok(StudyReport {
        config: config.clone(),
        truth,
        baselines,
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub s: usize,
    pub pairs: usize,
    pub iterations: usize,
    pub seconds_per_iteration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log time per iteration against log S.
    pub slope: f64,
}

/// Least-squares slope of `y` on `x`.
pub fn loglog_slope(s: &[f64], t: &[f64]) -> f64 {
    let x: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Intercept at the outcome mean, zero slopes and midpoint break points;
/// used by the benchmark when the crude fit is underdetermined.
fn neutral_start(data: &FlowDataset) -> InitialValues {
    let s = data.len();
    let y = data.outcomes();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let theta0: Vec<f64> = (0..s)
        .map(|i| data.theta_range(i).map_or(0.0, |(lo, hi)| 0.5 * (lo + hi)))
        .collect();
    let boundary0: Vec<bool> = (0..s)
        .map(|i| crate::design::boundary_check(data, theta0[i], i, crate::design::BOUNDARY_FRACTION))
        .collect();
    InitialValues {
        case: ModelCase::I,
        mu0: mean,
        beta0: vec![0.0; full_layout(ModelCase::I, s).len()],
        sigma2_0: if var > 0.0 { var } else { 1.0 },
        eta0: boundary0.iter().map(|b| !b).collect(),
        theta0,
        boundary0,
        fallback_sources: (0..s).collect(),
    }
}

/// Times Case I outer iterations (after crude initialization) on synthetic
/// data for each `S`. Each size runs at least `min_iterations` and keeps
/// going until `min_seconds` have elapsed.
pub fn bench_scaling(s_values: &[usize], min_iterations: usize, min_seconds: f64, seed: u64) -> Result<ScalingReport> {
    if s_values.is_empty() || s_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("S values must be nonempty and ascending".into()));
    }
    let mut rows = Vec::new();
    for &s in s_values {
        let mut scenario = SimScenario::desk(0.38);
        scenario.s = s;
        let mut rng = dataset_seed(seed, s as u64);
        let (ds, _) = generate(&scenario, &mut rng)?;
        let data = ds.data;
        let config = SamplerConfig::for_case(ModelCase::I);
        let init = match initial_values(&data, ModelCase::I, config.grid_size) {
            Ok(init) => init,
            Err(Error::RankDeficient { .. }) | Err(Error::InvalidArgument(_)) => neutral_start(&data),
            Err(e) => return Err(e),
        };
        let mut state = initial_state(&data, &init)?;
        let ranges = BreakPoints::new(&data, state.theta.clone())?;
        let y = data.outcomes();
        outer_step(&mut state, &data, &ranges, &y, &config, &mut rng)?;
        let start = Instant::now();
        let mut iterations = 0;
        while iterations < min_iterations.max(1) || start.elapsed().as_secs_f64() < min_seconds {
            outer_step(&mut state, &data, &ranges, &y, &config, &mut rng)?;
            iterations += 1;
        }
        rows.push(BenchRow {
            s,
            pairs: data.pairs().len(),
            iterations,
            seconds_per_iteration: start.elapsed().as_secs_f64() / iterations as f64,
        });
    }
    let slope = if rows.len() >= 2 {
        loglog_slope(
            &rows.iter().map(|r| r.s as f64).collect::<Vec<_>>(),
            &rows.iter().map(|r| r.seconds_per_iteration).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    Ok(ScalingReport { rows, slope })
}
