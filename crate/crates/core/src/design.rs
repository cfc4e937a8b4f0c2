//! Regression design for the break-point model.
//!
//! One row per retained ordered pair `(i, j)`. The intercept is never a
//! column. Case I has shared population effects; Case II routes each row's
//! population columns (and a with-break intercept offset) to the group of its
//! source, chosen by the source's inclusion flag.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::FlowDataset;

/// Default fraction of a source's pairs that must lie on each side of its
/// break point.
pub const BOUNDARY_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelCase {
    /// Shared intercept and population effects.
    I,
    /// Separate intercept and population effects for sources with and
    /// without a break.
    II,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Column {
    SourcePop { with_break: bool },
    DestPop { with_break: bool },
    /// Intercept offset of the with-break group (Case II only).
    GroupOffset,
    Slope(usize),
    Hinge(usize),
}

impl Column {
    pub fn name(&self, data: &FlowDataset) -> String {
        let id = |i: usize| data.locations()[i].id.clone();
        match *self {
            Column::SourcePop { with_break: false } => "pop_source".into(),
            Column::DestPop { with_break: false } => "pop_dest".into(),
            Column::SourcePop { with_break: true } => "pop_source_break".into(),
            Column::DestPop { with_break: true } => "pop_dest_break".into(),
            Column::GroupOffset => "break_offset".into(),
            Column::Slope(i) => format!("slope[{}]", id(i)),
            Column::Hinge(i) => format!("hinge[{}]", id(i)),
        }
    }
}

/// Every coefficient of the model in canonical order, regardless of which
/// hinge columns are currently present.
pub fn full_layout(case: ModelCase, s: usize) -> Vec<Column> {
    let mut cols = vec![
        Column::SourcePop { with_break: false },
        Column::DestPop { with_break: false },
    ];
    if case == ModelCase::II {
        cols.push(Column::SourcePop { with_break: true });
        cols.push(Column::DestPop { with_break: true });
        cols.push(Column::GroupOffset);
    }
    cols.extend((0..s).map(Column::Slope));
    cols.extend((0..s).map(Column::Hinge));
    cols
}

/// Offset of the first slope column in [`full_layout`].
pub fn slope_offset(case: ModelCase) -> usize {
    match case {
        ModelCase::I => 2,
        ModelCase::II => 5,
    }
}

/// Position of `col` in [`full_layout`].
pub fn full_index(case: ModelCase, s: usize, col: Column) -> usize {
    let base = slope_offset(case);
    match col {
        Column::SourcePop { with_break: false } => 0,
        Column::DestPop { with_break: false } => 1,
        Column::SourcePop { with_break: true } => 2,
        Column::DestPop { with_break: true } => 3,
        Column::GroupOffset => 4,
        Column::Slope(i) => base + i,
        Column::Hinge(i) => base + s + i,
    }
}

#[inline]
pub fn hinge(log_d: f64, theta: f64) -> f64 {
    (log_d - theta).max(0.0)
}

/// Linear predictor `mu + pop effects + slope * log d + hinge term` for one
/// ordered pair, with `beta` in [`full_layout`] order. `routed` selects the
/// with-break group in Case II and is ignored in Case I.
#[allow(clippy::too_many_arguments)]
pub fn linear_predictor(
    case: ModelCase,
    mu: f64,
    beta: &[f64],
    theta_i: f64,
    routed: bool,
    source: usize,
    log_m: f64,
    log_n: f64,
    log_d: f64,
) -> f64 {
    let s = (beta.len() - slope_offset(case)) / 2;
    let group = case == ModelCase::II && routed;
    let idx = |c| full_index(case, s, c);
    let mut y = mu
        + beta[idx(Column::SourcePop { with_break: group })] * log_m
        + beta[idx(Column::DestPop { with_break: group })] * log_n
        + beta[idx(Column::Slope(source))] * log_d;
    if group {
        y += beta[idx(Column::GroupOffset)];
    }
    let b4 = beta[idx(Column::Hinge(source))];
    if b4 != 0.0 {
        y += b4 * hinge(log_d, theta_i);
    }
    y
}

/// Break points on the log-distance scale with their admissible open
/// intervals `(min_j log d_ij, max_j log d_ij)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakPoints {
    pub theta: Vec<f64>,
    pub range: Vec<(f64, f64)>,
}

impl BreakPoints {
    pub fn new(data: &FlowDataset, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != data.len() {
            return Err(Error::Dimension(format!(
                "{} break points for {} locations",
                theta.len(),
                data.len()
            )));
        }
        let range = (0..data.len())
            .map(|i| data.theta_range(i).unwrap_or((f64::NAN, f64::NAN)))
            .collect();
        Ok(Self { theta, range })
    }

    pub fn in_range(&self, source: usize, value: f64) -> bool {
        let (lo, hi) = self.range[source];
        value > lo && value < hi
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionState {
    pub eta: Vec<bool>,
    pub boundary: Vec<bool>,
}

impl InclusionState {
    pub fn new(eta: Vec<bool>, boundary: Vec<bool>) -> Result<Self> {
        if eta.len() != boundary.len() {
            return Err(Error::Dimension("eta and boundary lengths differ".into()));
        }
        Ok(Self { eta, boundary })
    }

    pub fn all(s: usize, eta: bool) -> Self {
        Self {
            eta: vec![eta; s],
            boundary: vec![false; s],
        }
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub case: ModelCase,
    pub x: DMatrix<f64>,
    /// Column index -> parameter identity.
    pub columns: Vec<Column>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_position(&self, col: Column) -> Option<usize> {
        self.columns.iter().position(|&c| c == col)
    }

    /// Delimited-text dump: pair ids followed by one value per column.
    pub fn to_csv(&self, data: &FlowDataset) -> String {
        let mut out = String::from("source_id,destination_id");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name(data));
        }
        out.push('\n');
        for (r, p) in data.pairs().iter().enumerate() {
            let locs = data.locations();
            let _ = write!(out, "{},{}", locs[p.source].id, locs[p.destination].id);
            for c in 0..self.ncols() {
                let _ = write!(out, ",{}", self.x[(r, c)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, data: &FlowDataset, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv(data)).map_err(|e| Error::io(path, e))
    }
}

/// Builds the design for the current break points and inclusion flags.
/// Hinge columns of boundary sources are omitted; in Case II every source
/// routes to the group given by its `eta` flag.
pub fn build_design(
    data: &FlowDataset,
    theta: &BreakPoints,
    incl: &InclusionState,
    case: ModelCase,
) -> Result<DesignMatrix> {
    let s = data.len();
    if theta.len() != s || incl.len() != s {
        return Err(Error::Dimension(format!(
            "{s} locations but {} break points and {} inclusion flags",
            theta.len(),
            incl.len()
        )));
    }
    let columns: Vec<Column> = full_layout(case, s)
        .into_iter()
        .filter(|c| !matches!(c, Column::Hinge(i) if incl.boundary[*i]))
        .collect();
    let pairs = data.pairs();
    let logp = data.log_population();
    let mut x = DMatrix::zeros(pairs.len(), columns.len());
    for (c, col) in columns.iter().enumerate() {
        let mut column = x.column_mut(c);
        for (r, p) in pairs.iter().enumerate() {
            let routed = case == ModelCase::II && incl.eta[p.source];
            column[r] = match *col {
                Column::SourcePop { with_break } if with_break == routed => logp[p.source],
                Column::DestPop { with_break } if with_break == routed => logp[p.destination],
                Column::GroupOffset if routed => 1.0,
                Column::Slope(i) if i == p.source => data.pair_log_distance(p),
                Column::Hinge(i) if i == p.source => {
                    hinge(data.pair_log_distance(p), theta.theta[i])
                }
                _ => 0.0,
            };
        }
    }
    Ok(DesignMatrix { case, x, columns })
}

/// Whether `theta_i` leaves fewer than `ceil(fraction * n_i)` of the source's
/// retained pairs strictly on either side.
pub fn boundary_check(data: &FlowDataset, theta_i: f64, source: usize, fraction: f64) -> bool {
    let rows = data.rows_of(source);
    let need = (fraction * rows.len() as f64).ceil() as usize;
    let pairs = data.pairs();
    let (mut left, mut right) = (0usize, 0usize);
    for &r in rows {
        let d = data.pair_log_distance(&pairs[r]);
        if d < theta_i {
            left += 1;
        } else if d > theta_i {
            right += 1;
        }
    }
    left < need || right < need
}
