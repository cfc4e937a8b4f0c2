//! Convergence diagnostics for trans-dimensional chains (two potential scale
//! reduction factors), posterior summaries and model-averaged prediction.

use std::collections::HashMap;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::Column;
use crate::error::{Error, Result};
use crate::flowdata::FlowDataset;
use crate::sampler::{ChainTrace, ParameterState};

/// Number of equal batches the chains are split into for the PSRF series.
pub const PSRF_BATCHES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub v_hat: f64,
    pub w_c: f64,
    pub w_m: f64,
    pub w_m_w_c: f64,
    pub chains: usize,
    pub models: usize,
    /// Per-chain sample count.
    pub t: usize,
    /// `r_cm[c][m]`: visits of chain `c` to model `m` (models in order of
    /// first appearance).
    pub r_cm: Vec<Vec<usize>>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn scaled(ss: f64, normalizer: f64) -> f64 {
    if normalizer > 0.0 {
        ss / normalizer
    } else {
        0.0
    }
}

impl VarianceDecomposition {
    /// `(V_hat / W_c, W_m / W_mW_c)`; 0/0 is 1 and x/0 is infinite.
    pub fn psrf(&self) -> (f64, f64) {
        (ratio(self.v_hat, self.w_c), ratio(self.w_m, self.w_m_w_c))
    }
}

pub fn psrf(decomp: &VarianceDecomposition) -> (f64, f64) {
    decomp.psrf()
}

/// Between/within chain and model sums of squares for `values[c][r]` with
/// model labels `labels[c][r]`. Every chain must have the same length `T`.
/// A component whose normalizer is not positive is reported as 0.
pub fn variance_decomposition_values(values: &[Vec<f64>], labels: &[Vec<u64>]) -> Result<VarianceDecomposition> {
    let c = values.len();
    if c < 2 {
        return Err(Error::InvalidArgument("need at least two chains".into()));
    }
    if labels.len() != c {
        return Err(Error::Dimension("values and labels differ in chain count".into()));
    }
    let t = values[0].len();
    if t == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if values.iter().zip(labels).any(|(v, l)| v.len() != t || l.len() != t) {
        return Err(Error::Dimension("chains must have equal length".into()));
    }
    let shift = values[0][0];
    let values: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| x - shift).collect()).collect();
    let mut model_index: HashMap<u64, usize> = HashMap::new();
    for l in labels.iter().flatten() {
        let next = model_index.len();
        model_index.entry(*l).or_insert(next);
    }
    let m = model_index.len();
    let mut r_cm = vec![vec![0usize; m]; c];
    let mut sum_cm = vec![vec![0.0; m]; c];
    for ci in 0..c {
        for (v, l) in values[ci].iter().zip(&labels[ci]) {
            let mi = model_index[l];
            r_cm[ci][mi] += 1;
            sum_cm[ci][mi] += v;
        }
    }
    let total: f64 = values.iter().flatten().sum();
    let n = (c * t) as f64;
    let grand = total / n;
    let chain_mean: Vec<f64> = sum_cm.iter().map(|row| row.iter().sum::<f64>() / t as f64).collect();
    let model_mean: Vec<f64> = (0..m)
        .map(|mi| {
            let s: f64 = (0..c).map(|ci| sum_cm[ci][mi]).sum();
            let k: usize = (0..c).map(|ci| r_cm[ci][mi]).sum();
            s / k as f64
        })
        .collect();
    let (mut ss_v, mut ss_c, mut ss_m, mut ss_mc) = (0.0, 0.0, 0.0, 0.0);
    for ci in 0..c {
        for (v, l) in values[ci].iter().zip(&labels[ci]) {
            let mi = model_index[l];
            let cell = sum_cm[ci][mi] / r_cm[ci][mi] as f64;
            ss_v += (v - grand).powi(2);
            ss_c += (v - chain_mean[ci]).powi(2);
            ss_m += (v - model_mean[mi]).powi(2);
            ss_mc += (v - cell).powi(2);
        }
    }
    let (cf, tf, mf) = (c as f64, t as f64, m as f64);
    Ok(VarianceDecomposition {
        v_hat: scaled(ss_v, cf * tf - 1.0),
        w_c: scaled(ss_c, cf * (tf - 1.0)),
        w_m: scaled(ss_m, cf * tf - mf),
        w_m_w_c: scaled(ss_mc, cf * (tf - mf)),
        chains: c,
        models: m,
        t,
        r_cm,
    })
}

/// Decomposition of `scalar` over retained draws `batch` of every chain.
pub fn variance_decomposition(
    traces: &[ChainTrace],
    scalar: impl Fn(&ParameterState) -> f64,
    batch: Range<usize>,
) -> Result<VarianceDecomposition> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut values = Vec::with_capacity(traces.len());
    let mut labels = Vec::with_capacity(traces.len());
    for tr in traces {
        if batch.end > tr.len() {
            return Err(Error::InvalidArgument(format!(
                "batch {}..{} exceeds chain {} length {}",
                batch.start,
                batch.end,
                tr.chain,
                tr.len()
            )));
        }
        let states = &tr.states[batch.clone()];
        values.push(states.iter().map(&scalar).collect());
        labels.push(states.iter().map(ParameterState::model_label).collect());
    }
    variance_decomposition_values(&values, &labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsrfPoint {
    pub batch: usize,
    /// Number of draws per chain included.
    pub draws: usize,
    pub psrf1: f64,
    pub psrf2: f64,
}

/// PSRF pair over cumulative prefixes of `batches` equal batches of every
/// chain (truncated to the shortest chain).
pub fn psrf_series(
    traces: &[ChainTrace],
    scalar: impl Fn(&ParameterState) -> f64 + Copy,
    batches: usize,
) -> Result<Vec<PsrfPoint>> {
    let t = traces.iter().map(ChainTrace::len).min().unwrap_or(0);
    if batches == 0 || t < batches {
        return Err(Error::InvalidArgument(format!(
            "{t} draws per chain cannot fill {batches} batches"
        )));
    }
    let len = t / batches;
    (1..=batches)
        .map(|b| {
            let d = variance_decomposition(traces, scalar, 0..b * len)?;
            let (psrf1, psrf2) = d.psrf();
            Ok(PsrfPoint {
                batch: b,
                draws: b * len,
                psrf1,
                psrf2,
            })
        })
        .collect()
}

/// Type-7 quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed `(alpha/2, 1 - alpha/2)` interval; `None` for no draws.
pub fn equal_tailed(draws: &[f64], alpha: f64) -> Option<(f64, f64)> {
    if draws.is_empty() {
        return None;
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, alpha / 2.0), quantile(&v, 1.0 - alpha / 2.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub parameter: String,
    pub draws: usize,
    /// `None` when the parameter was never active.
    pub mean: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl CredibleInterval {
    fn from_draws(parameter: String, draws: &[f64], alpha: f64) -> Self {
        let interval = equal_tailed(draws, alpha);
        Self {
            parameter,
            draws: draws.len(),
            mean: (!draws.is_empty()).then(|| draws.iter().sum::<f64>() / draws.len() as f64),
            lower: interval.map(|i| i.0),
            upper: interval.map(|i| i.1),
        }
    }

    pub fn available(&self) -> bool {
        self.lower.is_some()
    }

    pub fn covers(&self, value: f64) -> bool {
        matches!((self.lower, self.upper), (Some(lo), Some(hi)) if lo <= value && value <= hi)
    }

    pub fn excludes_zero(&self) -> bool {
        self.available() && !self.covers(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub alpha: f64,
    /// PSRF series for the error variance.
    pub psrf1_series: Vec<f64>,
    pub psrf2_series: Vec<f64>,
    /// PSRF series for the intercept.
    pub intercept_psrf1_series: Vec<f64>,
    pub intercept_psrf2_series: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub mean_acceptance: f64,
    pub location_ids: Vec<String>,
    pub intervals: Vec<CredibleInterval>,
    /// Break-point intervals per source, over states where the break is
    /// active and not on the boundary.
    pub theta_intervals: Vec<CredibleInterval>,
    pub inclusion_probabilities: Vec<f64>,
    /// Hinge coefficient interval excludes zero.
    pub break_present: Vec<bool>,
    pub models_visited: usize,
}

impl DiagnosticsReport {
    pub fn interval(&self, parameter: &str) -> Option<&CredibleInterval> {
        self.intervals
            .iter()
            .chain(&self.theta_intervals)
            .find(|i| i.parameter == parameter)
    }
}

fn pooled<'a>(traces: &'a [ChainTrace]) -> impl Iterator<Item = &'a ParameterState> + 'a {
    traces.iter().flat_map(|t| t.states.iter())
}

/// Pooled posterior summary over all chains. The PSRF series are omitted
/// (left empty) with fewer than two chains or too few draws.
pub fn summarize(traces: &[ChainTrace], alpha: f64) -> Result<DiagnosticsReport> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("no traces".into()))?;
    if traces.iter().all(ChainTrace::is_empty) {
        return Err(Error::InvalidArgument("traces contain no draws".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let s = first.location_ids.len();
    if traces.iter().any(|t| t.location_ids != first.location_ids || t.case != first.case) {
        return Err(Error::InvalidArgument("traces come from different fits".into()));
    }
    let (mut p1, mut p2, mut i1, mut i2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    if traces.len() >= 2 {
        if let Ok(series) = psrf_series(traces, |st| st.sigma2, PSRF_BATCHES) {
            p1 = series.iter().map(|p| p.psrf1).collect();
            p2 = series.iter().map(|p| p.psrf2).collect();
        }
        if let Ok(series) = psrf_series(traces, |st| st.mu, PSRF_BATCHES) {
            i1 = series.iter().map(|p| p.psrf1).collect();
            i2 = series.iter().map(|p| p.psrf2).collect();
        }
    }

    let proposals: u64 = traces.iter().map(|t| t.proposals).sum();
    let acceptance: Vec<f64> = (0..s)
        .map(|i| {
            let a: u64 = traces.iter().map(|t| t.accept_counts.get(i).copied().unwrap_or(0)).sum();
            if proposals == 0 {
                f64::NAN
            } else {
                a as f64 / proposals as f64
            }
        })
        .collect();
    let finite: Vec<f64> = acceptance.iter().copied().filter(|v| v.is_finite()).collect();
    let mean_acceptance = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };

    let draws: Vec<&ParameterState> = pooled(traces).collect();
    let mut intervals = vec![
        CredibleInterval::from_draws("mu".into(), &draws.iter().map(|s| s.mu).collect::<Vec<_>>(), alpha),
        CredibleInterval::from_draws(
            "sigma2".into(),
            &draws.iter().map(|s| s.sigma2).collect::<Vec<_>>(),
            alpha,
        ),
        CredibleInterval::from_draws(
            "lambda2".into(),
            &draws.iter().map(|s| s.lambda2).collect::<Vec<_>>(),
            alpha,
        ),
    ];
    for (k, name) in first.coefficient_names.iter().enumerate() {
        let v: Vec<f64> = draws.iter().map(|s| s.beta[k]).collect();
        intervals.push(CredibleInterval::from_draws(name.clone(), &v, alpha));
    }
    let theta_intervals = (0..s)
        .map(|i| {
            let v: Vec<f64> = draws
                .iter()
                .filter(|st| st.eta[i] && !st.boundary[i])
                .map(|st| st.theta[i])
                .collect();
            CredibleInterval::from_draws(format!("theta[{}]", first.location_ids[i]), &v, alpha)
        })
        .collect();
    let n = draws.len() as f64;
    let inclusion_probabilities = (0..s)
        .map(|i| draws.iter().filter(|st| st.eta[i]).count() as f64 / n)
        .collect();
    let break_present = (0..s)
        .map(|i| {
            let k = draws[0].index(Column::Hinge(i));
            let v: Vec<f64> = draws.iter().map(|st| st.beta[k]).collect();
            CredibleInterval::from_draws(String::new(), &v, alpha).excludes_zero()
        })
        .collect();
    let mut labels: Vec<u64> = draws.iter().map(|s| s.model_label()).collect();
    labels.sort_unstable();
    labels.dedup();
    Ok(DiagnosticsReport {
        alpha,
        psrf1_series: p1,
        psrf2_series: p2,
        intercept_psrf1_series: i1,
        intercept_psrf2_series: i2,
        acceptance,
        mean_acceptance,
        location_ids: first.location_ids.clone(),
        intervals,
        theta_intervals,
        inclusion_probabilities,
        break_present,
        models_visited: labels.len(),
    })
}

/// A pair to predict, referenced by location id, with its covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewPair {
    pub source: String,
    pub destination: String,
    pub log_distance: f64,
    pub log_source_population: f64,
    pub log_destination_population: f64,
}

impl NewPair {
    /// Every retained pair of `data` with its own covariates.
    pub fn from_dataset(data: &FlowDataset) -> Vec<NewPair> {
        let locs = data.locations();
        let logp = data.log_population();
        data.pairs()
            .iter()
            .map(|p| NewPair {
                source: locs[p.source].id.clone(),
                destination: locs[p.destination].id.clone(),
                log_distance: data.pair_log_distance(p),
                log_source_population: logp[p.source],
                log_destination_population: logp[p.destination],
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub source: String,
    pub destination: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub alpha: f64,
    /// Add N(0, sigma2) noise per draw for a predictive interval.
    pub predictive: bool,
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            predictive: false,
            seed: 0,
        }
    }
}

/// Model-averaged prediction: each retained draw contributes the linear
/// predictor under its own model and routing, so models are weighted by
/// their visit frequency.
pub fn predict(traces: &[ChainTrace], new_pairs: &[NewPair], options: &PredictOptions) -> Result<Vec<Prediction>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("no traces".into()))?;
    let index: HashMap<&str, usize> = first
        .location_ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k))
        .collect();
    let draws: Vec<&ParameterState> = pooled(traces).collect();
    if draws.is_empty() {
        return Err(Error::InvalidArgument("traces contain no draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut values = vec![0.0; draws.len()];
    new_pairs
        .iter()
        .map(|q| {
            let find = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownLocation(id.to_string()));
            let src = find(&q.source)?;
            find(&q.destination)?;
            for (v, st) in values.iter_mut().zip(&draws) {
                *v = st.linear_predictor(
                    src,
                    q.log_source_population,
                    q.log_destination_population,
                    q.log_distance,
                );
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            if options.predictive {
                for (v, st) in values.iter_mut().zip(&draws) {
                    *v += Normal::new(0.0, st.sigma2.sqrt())
                        .map_err(|e| Error::InvalidArgument(e.to_string()))?
                        .sample(&mut rng);
                }
            }
            let (lower, upper) = equal_tailed(&values, options.alpha).expect("nonempty");
            Ok(Prediction {
                source: q.source.clone(),
                destination: q.destination.clone(),
                mean,
                lower,
                upper,
            })
        })
        .collect()
}

/// Posterior-mean predicted log-intensity for every retained pair of `data`.
pub fn posterior_mean_predictions(traces: &[ChainTrace], data: &FlowDataset) -> Result<Vec<f64>> {
    Ok(predict(traces, &NewPair::from_dataset(data), &PredictOptions::default())?
        .into_iter()
        .map(|p| p.mean)
        .collect())
}

/// Mean squared error of `predictions` (one per retained pair of
/// `reference`) against every replicate's outcomes. Replicates must share
/// the reference's pairs and covariates.
pub fn prediction_error(reference: &FlowDataset, predictions: &[f64], replicates: &[FlowDataset]) -> Result<f64> {
    if predictions.len() != reference.pairs().len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} pairs",
            predictions.len(),
            reference.pairs().len()
        )));
    }
    if replicates.is_empty() {
        return Err(Error::InvalidArgument("no replicate datasets".into()));
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for (k, rep) in replicates.iter().enumerate() {
        let same = rep.pairs().len() == reference.pairs().len()
            && rep.log_population() == reference.log_population()
            && rep
                .pairs()
                .iter()
                .zip(reference.pairs())
                .all(|(a, b)| {
                    a.source == b.source
                        && a.destination == b.destination
                        && rep.pair_log_distance(a) == reference.pair_log_distance(b)
                });
        if !same {
            return Err(Error::CovariateMismatch(format!("replicate {k}")));
        }
        for (p, pred) in rep.pairs().iter().zip(predictions) {
            sse += (p.outcome - pred).powi(2);
            n += 1;
        }
    }
    Ok(sse / n as f64)
}
