//! Crude starting values: per-source grid search for break points, BIC
//! inclusion flags and an OLS fit treating the break points as known.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{
    boundary_check, build_design, full_index, full_layout, hinge, BreakPoints, Column,
    InclusionState, ModelCase, BOUNDARY_FRACTION,
};
use crate::error::{Error, Result};
use crate::flowdata::FlowDataset;
use crate::linalg;

pub const DEFAULT_GRID_SIZE: usize = 50;

/// Sources with fewer retained destinations fall back to the range midpoint.
pub const MIN_DESTINATIONS: usize = 10;

/// RSS below this fraction of the total sum of squares counts as a perfect fit.
const DEGENERATE_RSS: f64 = 1e-16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub theta: f64,
    pub rss: f64,
    /// Set when the source had too few destinations and `theta` is the
    /// midpoint of its log-distance range.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialValues {
    pub case: ModelCase,
    pub theta0: Vec<f64>,
    pub mu0: f64,
    /// Coefficients in [`full_layout`] order; absent columns are zero.
    pub beta0: Vec<f64>,
    pub sigma2_0: f64,
    pub eta0: Vec<bool>,
    pub boundary0: Vec<bool>,
    pub fallback_sources: Vec<usize>,
}

/// Type-7 (linear interpolation) sample quantile of sorted values.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn source_log_distances(data: &FlowDataset, source: usize) -> Vec<f64> {
    data.rows_of(source)
        .iter()
        .map(|&r| data.pair_log_distance(&data.pairs()[r]))
        .collect()
}

/// `grid_size` equally spaced candidate break points between the 5th and
/// 95th percentiles of the source's observed log-distances.
pub fn theta_grid(data: &FlowDataset, source: usize, grid_size: usize) -> Vec<f64> {
    let mut d = source_log_distances(data, source);
    if d.is_empty() || grid_size == 0 {
        return Vec::new();
    }
    d.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&d, 0.05);
    let hi = quantile_sorted(&d, 0.95);
    if grid_size == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (grid_size - 1) as f64;
    (0..grid_size).map(|k| lo + step * k as f64).collect()
}

/// Per-source regression of `Y_ij` on an intercept, `log n_j`, `log d_ij`
/// and, when `theta` is given, the hinge at `theta`. Exactly collinear
/// columns are dropped. Returns (RSS, number of fitted columns, TSS).
fn source_fit(data: &FlowDataset, source: usize, theta: Option<f64>) -> (f64, usize, f64) {
    let rows = data.rows_of(source);
    let pairs = data.pairs();
    let logp = data.log_population();
    let ncols = if theta.is_some() { 4 } else { 3 };
    let x = DMatrix::from_fn(rows.len(), ncols, |r, c| {
        let p = &pairs[rows[r]];
        let d = data.pair_log_distance(p);
        match c {
            0 => 1.0,
            1 => logp[p.destination],
            2 => d,
            _ => hinge(d, theta.unwrap_or(f64::INFINITY)),
        }
    });
    let y: Vec<f64> = rows.iter().map(|&r| pairs[r].outcome).collect();
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let bad = linalg::collinear_columns(&x);
    let keep: Vec<usize> = (0..ncols).filter(|c| !bad.contains(c)).collect();
    let xr = x.select_columns(&keep);
    let rss = linalg::ols_rss(&xr, &y).unwrap_or(tss);
    (rss, keep.len(), tss)
}

/// Profile-likelihood grid search for one source's break point.
pub fn grid_search_theta(data: &FlowDataset, source: usize, grid_size: usize) -> GridSearch {
    let n = data.rows_of(source).len();
    if n < MIN_DESTINATIONS {
        let theta = data
            .theta_range(source)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .unwrap_or(f64::NAN);
        log::warn!(
            "source `{}` has {n} destinations; using range midpoint as break point",
            data.locations()[source].id
        );
        return GridSearch {
            theta,
            rss: f64::NAN,
            fallback: true,
        };
    }
    let mut best = GridSearch {
        theta: f64::NAN,
        rss: f64::INFINITY,
        fallback: false,
    };
    for theta in theta_grid(data, source, grid_size) {
        let (rss, _, _) = source_fit(data, source, Some(theta));
        if rss < best.rss {
            best.theta = theta;
            best.rss = rss;
        }
    }
    best
}

/// Gaussian profile BIC `n log(RSS/n) + k log n`.
pub fn bic(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).ln() + k as f64 * n.ln()
}

/// Whether the per-source model with a break at `theta0_i` has lower BIC
/// than the model without. A perfect fit of the smaller model prefers it.
pub fn bic_inclusion(data: &FlowDataset, theta0_i: f64, source: usize) -> bool {
    let n = data.rows_of(source).len();
    if n <= 5 || !theta0_i.is_finite() {
        return false;
    }
    let (rss_break, k_break, tss) = source_fit(data, source, Some(theta0_i));
    let (rss_plain, k_plain, _) = source_fit(data, source, None);
    let tiny = DEGENERATE_RSS * tss.max(f64::MIN_POSITIVE);
    if rss_plain <= tiny {
        return false;
    }
    if rss_break <= tiny {
        return true;
    }
    bic(rss_break, n, k_break) < bic(rss_plain, n, k_plain)
}

fn is_group_column(c: Column) -> bool {
    matches!(c, Column::SourcePop { .. } | Column::DestPop { .. } | Column::GroupOffset)
}

/// OLS with an intercept on the design for fixed break points, keeping the
/// hinge column of source `i` only where `eta[i]` holds and it is not on the
/// boundary.
pub fn fit_with_breaks(
    data: &FlowDataset,
    theta: &[f64],
    eta: &[bool],
    boundary: &[bool],
    case: ModelCase,
) -> Result<(f64, Vec<f64>, f64)> {
    let s = data.len();
    let bp = BreakPoints::new(data, theta.to_vec())?;
    let incl = InclusionState::new(eta.to_vec(), boundary.to_vec())?;
    let design = build_design(data, &bp, &incl, case)?;
    let mut cols: Vec<Column> = Vec::new();
    let mut idx: Vec<usize> = Vec::new();
    for (k, &c) in design.columns.iter().enumerate() {
        let drop_hinge = matches!(c, Column::Hinge(i) if !eta[i]);
        let empty = design.x.column(k).iter().all(|&v| v == 0.0);
        if drop_hinge || empty {
            continue;
        }
        cols.push(c);
        idx.push(k);
    }
    let n = design.nrows();
    let mut x = DMatrix::zeros(n, cols.len() + 1);
    x.column_mut(0).fill(1.0);
    for (t, &k) in idx.iter().enumerate() {
        x.set_column(t + 1, &design.x.column(k));
    }
    let mut names: Vec<String> = std::iter::once("intercept".to_string())
        .chain(cols.iter().map(|c| c.name(data)))
        .collect();
    // Case II group columns collapse when a group has too few distinct
    // sources; those are dropped (coefficient zero), anything else is fatal.
    let bad = linalg::collinear_columns(&x);
    if !bad.is_empty() {
        let all_group = case == ModelCase::II && bad.iter().all(|&k| k > 0 && is_group_column(cols[k - 1]));
        if !all_group {
            return Err(Error::RankDeficient {
                columns: bad.iter().map(|&k| names[k].clone()).collect(),
            });
        }
        log::warn!(
            "dropping collinear group columns: {}",
            bad.iter().map(|&k| names[k].as_str()).collect::<Vec<_>>().join(", ")
        );
        let keep: Vec<usize> = (0..x.ncols()).filter(|k| !bad.contains(k)).collect();
        x = x.select_columns(&keep);
        names = keep.iter().map(|&k| names[k].clone()).collect();
        cols = keep.iter().filter(|&&k| k > 0).map(|&k| cols[k - 1]).collect();
    }
    let y = data.outcomes();
    let fit = linalg::ols(&x, &y, &names)?;
    let mut beta = vec![0.0; full_layout(case, s).len()];
    for (c, &b) in cols.iter().zip(&fit.coefficients[1..]) {
        beta[full_index(case, s, *c)] = b;
    }
    let dof = n as f64 - x.ncols() as f64;
    let sigma2 = if dof > 0.0 { fit.rss / dof } else { f64::NAN };
    Ok((fit.coefficients[0], beta, sigma2))
}

fn grid_and_boundary(data: &FlowDataset, grid_size: usize) -> (Vec<f64>, Vec<bool>, Vec<usize>) {
    let s = data.len();
    let mut theta = Vec::with_capacity(s);
    let mut boundary = Vec::with_capacity(s);
    let mut fallback = Vec::new();
    for i in 0..s {
        let g = grid_search_theta(data, i, grid_size);
        if g.fallback {
            fallback.push(i);
        }
        let on_boundary = !g.theta.is_finite() || boundary_check(data, g.theta, i, BOUNDARY_FRACTION);
        theta.push(g.theta);
        boundary.push(on_boundary);
    }
    (theta, boundary, fallback)
}

fn finish(
    data: &FlowDataset,
    case: ModelCase,
    theta0: Vec<f64>,
    eta0: Vec<bool>,
    boundary0: Vec<bool>,
    fallback_sources: Vec<usize>,
) -> Result<InitialValues> {
    let (mu0, beta0, sigma2_0) = fit_with_breaks(data, &theta0, &eta0, &boundary0, case)?;
    if !(sigma2_0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial residual variance {sigma2_0} is not positive"
        )));
    }
    Ok(InitialValues {
        case,
        theta0,
        mu0,
        beta0,
        sigma2_0,
        eta0,
        boundary0,
        fallback_sources,
    })
}

/// Case I: every non-boundary hinge enters the OLS fit. Case II: hinges
/// enter only where BIC prefers the break, and rows are routed by group.
pub fn initial_values(data: &FlowDataset, case: ModelCase, grid_size: usize) -> Result<InitialValues> {
    let (theta0, boundary0, fallback) = grid_and_boundary(data, grid_size);
    let eta0: Vec<bool> = match case {
        ModelCase::I => boundary0.iter().map(|b| !b).collect(),
        ModelCase::II => (0..data.len())
            .map(|i| !boundary0[i] && bic_inclusion(data, theta0[i], i))
            .collect(),
    };
    finish(data, case, theta0, eta0, boundary0, fallback)
}

/// The crude comparison model: grid-searched break points, BIC-selected
/// hinges and an OLS fit with the shared (Case I) or grouped (Case II)
/// structure.
pub fn crude_bic_model(data: &FlowDataset, case: ModelCase, grid_size: usize) -> Result<InitialValues> {
    let (theta0, boundary0, fallback) = grid_and_boundary(data, grid_size);
    let eta0: Vec<bool> = (0..data.len())
        .map(|i| !boundary0[i] && bic_inclusion(data, theta0[i], i))
        .collect();
    finish(data, case, theta0, eta0, boundary0, fallback)
}
