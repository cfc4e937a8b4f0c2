//! Closed-form baseline intensity models.
//!
//! The log-linear gravity model is fitted by OLS; the radiation model and the
//! rank-based friendship model are parameter-free and used for prediction
//! only.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::FlowDataset;
use crate::linalg;

/// `log G = log_k + alpha log m + beta log n - gamma log r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityParams {
    pub log_k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GravityParams {
    pub fn log_intensity(&self, log_m: f64, log_n: f64, log_r: f64) -> Result<f64> {
        gravity_log_intensity(self, log_m, log_n, log_r)
    }
}

/// One row of a fit report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GravityFit {
    pub params: GravityParams,
    pub estimates: Vec<ParameterEstimate>,
    pub residual_variance: f64,
    pub in_sample_mse: f64,
}

pub fn gravity_log_intensity(params: &GravityParams, log_m: f64, log_n: f64, log_r: f64) -> Result<f64> {
    let all = [params.log_k, params.alpha, params.beta, params.gamma, log_m, log_n, log_r];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gravity model input".into()));
    }
    Ok(params.log_k + params.alpha * log_m + params.beta * log_n - params.gamma * log_r)
}

/// OLS of `Y_ij` on `log n_i`, `log n_j` and `log d_ij` with an intercept.
pub fn fit_gravity(data: &FlowDataset) -> Result<GravityFit> {
    let pairs = data.pairs();
    if pairs.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "gravity fit needs at least 5 retained pairs, found {}",
            pairs.len()
        )));
    }
    let logp = data.log_population();
    let x = DMatrix::from_fn(pairs.len(), 4, |r, c| {
        let p = &pairs[r];
        match c {
            0 => 1.0,
            1 => logp[p.source],
            2 => logp[p.destination],
            _ => data.pair_log_distance(p),
        }
    });
    let names: Vec<String> = ["log_k", "alpha", "beta", "gamma"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let y = data.outcomes();
    let fit = linalg::ols(&x, &y, &names)?;
    let b = &fit.coefficients;
    let params = GravityParams {
        log_k: b[0],
        alpha: b[1],
        beta: b[2],
        gamma: -b[3],
    };
    let estimates = names
        .iter()
        .zip(b.iter().zip(&fit.standard_errors))
        .enumerate()
        .map(|(k, (name, (&est, &se)))| ParameterEstimate {
            name: name.clone(),
            estimate: if k == 3 { -est } else { est },
            standard_error: se,
        })
        .collect();
    Ok(GravityFit {
        params,
        estimates,
        residual_variance: fit.residual_variance,
        in_sample_mse: fit.rss / pairs.len() as f64,
    })
}

/// Average radiation flux `T_i m_i n_j / ((m_i + s_ij)(m_i + n_j + s_ij))`.
pub fn radiation_flux(total_outflow: f64, m_i: f64, n_j: f64, s_ij: f64) -> Result<f64> {
    for (name, v) in [("total_outflow", total_outflow), ("m_i", m_i), ("n_j", n_j), ("s_ij", s_ij)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
        if v < 0.0 {
            return Err(Error::InvalidArgument(format!("{name} = {v} must be non-negative")));
        }
    }
    if m_i <= 0.0 {
        return Err(Error::InvalidArgument("m_i must be positive".into()));
    }
    Ok(total_outflow * m_i * n_j / ((m_i + s_ij) * (m_i + n_j + s_ij)))
}

/// `s_ij`: total population of locations `k != i` with `d_ik < d_ij`
/// (strictly closer than the destination), excluding `m_i` and `n_j`.
/// Diagonal entries are zero.
///
/// Sorts each row once, so the cost is `O(S^2 log S)`.
pub fn ring_population(data: &FlowDataset) -> DMatrix<f64> {
    let s = data.len();
    let d = data.distance_km();
    let pop: Vec<f64> = data.locations().iter().map(|l| l.population).collect();
    let mut out = DMatrix::zeros(s, s);
    let mut order: Vec<usize> = Vec::with_capacity(s);
    for i in 0..s {
        order.clear();
        order.extend((0..s).filter(|&k| k != i));
        order.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]));
        let mut closer = 0.0;
        let mut k = 0;
        while k < order.len() {
            let dist = d[(i, order[k])];
            let mut end = k;
            let mut tied = 0.0;
            while end < order.len() && d[(i, order[end])] == dist {
                tied += pop[order[end]];
                end += 1;
            }
            for &j in &order[k..end] {
                out[(i, j)] = closer;
            }
            closer += tied;
            k = end;
        }
    }
    out
}

/// `rank_u(v) = |{w != u : d(u, w) <= d(u, v)}|`; `v` itself is counted.
pub fn rank_of(data: &FlowDataset, u: &str, v: &str) -> Result<usize> {
    let ui = data.index_of(u)?;
    let vi = data.index_of(v)?;
    if ui == vi {
        return Err(Error::InvalidArgument(format!("rank of `{u}` relative to itself")));
    }
    Ok(rank_by_index(data, ui, vi))
}

pub(crate) fn rank_by_index(data: &FlowDataset, u: usize, v: usize) -> usize {
    let d = data.distance_km();
    let target = d[(u, v)];
    (0..data.len()).filter(|&w| w != u && d[(u, w)] <= target).count()
}

/// Rank-based friendship probabilities from `u` to every other location,
/// proportional to `1 / rank_u(v)` and normalized to sum to one. Entry `u`
/// is zero.
pub fn rank_probabilities(data: &FlowDataset, u: &str) -> Result<Vec<f64>> {
    let ui = data.index_of(u)?;
    let mut w: Vec<f64> = (0..data.len())
        .map(|v| if v == ui { 0.0 } else { 1.0 / rank_by_index(data, ui, v) as f64 })
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    Ok(w)
}

/// Radiation-model predicted log flux for every retained pair, using each
/// source's observed total outflow as `T_i`.
pub fn radiation_log_predictions(data: &FlowDataset) -> Result<Vec<f64>> {
    let ring = ring_population(data);
    let mut totals = vec![0.0; data.len()];
    for p in data.pairs() {
        totals[p.source] += p.outcome.exp();
    }
    let pop: Vec<f64> = data.locations().iter().map(|l| l.population).collect();
    data.pairs()
        .iter()
        .map(|p| {
            radiation_flux(totals[p.source], pop[p.source], pop[p.destination], ring[(p.source, p.destination)])
                .map(f64::ln)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdata::{FlowRecord, Location};

    fn params(log_k: f64, alpha: f64, beta: f64, gamma: f64) -> GravityParams {
        GravityParams { log_k, alpha, beta, gamma }
    }

    #[test]
    fn gravity_examples() {
        let p = params(0.0, 1.0, 1.0, 2.0);
        assert_eq!(gravity_log_intensity(&p, 0.0, 0.0, 0.0).unwrap(), 0.0);
        let v = gravity_log_intensity(&p, 100f64.ln(), 200f64.ln(), 10f64.ln()).unwrap();
        assert!((v - 200f64.ln()).abs() < 1e-12);
        assert!((v - 5.29832).abs() < 1e-5);
        let flat = params(1.0, 0.5, 0.5, 0.0);
        assert_eq!(
            gravity_log_intensity(&flat, 1.0, 2.0, 0.1).unwrap(),
            gravity_log_intensity(&flat, 1.0, 2.0, 7.0).unwrap()
        );
        assert!(gravity_log_intensity(&p, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn radiation_examples() {
        let v = radiation_flux(100.0, 10.0, 20.0, 5.0).unwrap();
        assert!((v - 100.0 * 10.0 * 20.0 / (15.0 * 35.0)).abs() < 1e-12);
        assert!((v - 38.095).abs() < 1e-3);
        let big = radiation_flux(100.0, 10.0, 1e12, 0.0).unwrap();
        assert!((big - 100.0).abs() < 1e-6);
        assert!(radiation_flux(-1.0, 10.0, 1.0, 0.0).is_err());
        assert!(radiation_flux(1.0, 0.0, 1.0, 0.0).is_err());
    }

    fn collinear() -> FlowDataset {
        let locs = vec![
            Location::new("p0", 10.0, 0.0, 0.0),
            Location::new("p1", 20.0, 0.0, 1.0),
            Location::new("p2", 30.0, 0.0, 2.0),
        ];
        FlowDataset::new(locs, vec![], None).unwrap()
    }

    #[test]
    fn ring_population_collinear() {
        let ring = ring_population(&collinear());
        assert_eq!(ring[(0, 2)], 20.0);
        assert_eq!(ring[(2, 0)], 20.0);
        assert_eq!(ring[(0, 1)], 0.0);
        assert_eq!(ring[(1, 0)], 0.0);
    }

    #[test]
    fn rank_examples() {
        let data = collinear();
        assert_eq!(rank_of(&data, "p0", "p1").unwrap(), 1);
        assert_eq!(rank_of(&data, "p0", "p2").unwrap(), 2);
        // p1 is equidistant from p0 and p2.
        assert_eq!(rank_of(&data, "p1", "p0").unwrap(), 2);
        assert!(rank_of(&data, "p0", "nope").is_err());
        assert!(rank_of(&data, "p0", "p0").is_err());
        let probs = rank_probabilities(&data, "p0").unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_rejects_constant_source_column() {
        let locs = vec![
            Location::new("hub", 50.0, 0.0, 0.0),
            Location::new("a", 10.0, 0.0, 1.0),
            Location::new("b", 20.0, 1.0, 0.0),
            Location::new("c", 30.0, 1.0, 1.0),
            Location::new("d", 40.0, 2.0, 0.5),
            Location::new("e", 60.0, 0.5, 2.0),
        ];
        let flows = ["a", "b", "c", "d", "e"]
            .iter()
            .enumerate()
            .map(|(k, d)| FlowRecord { source: "hub".into(), destination: d.to_string(), count: 10 + k as u64 })
            .collect();
        let data = FlowDataset::new(locs, flows, None).unwrap();
        match fit_gravity(&data).unwrap_err() {
            Error::RankDeficient { columns } => assert!(columns.contains(&"alpha".to_string())),
            e => panic!("{e}"),
        }
    }
}
