//! Brute-force references for the design matrix, the boundary rule and the
//! distance-ordering baselines.

use commdecay::design::{BreakPoints, Column, InclusionState, ModelCase};
use commdecay::flowdata::{FlowDataset, Location};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// Locations on small integer coordinates with Manhattan distances, so
/// distance ties are common.
pub fn tied_instance<R: Rng>(s: usize, keep: f64, rng: &mut R) -> FlowDataset {
    let mut cells: Vec<(i32, i32)> = (0..6).flat_map(|x| (0..6).map(move |y| (x, y))).collect();
    cells.shuffle(rng);
    let pts = &cells[..s];
    let locs: Vec<Location> = (0..s)
        .map(|k| Location {
            id: format!("p{k}"),
            population: rng.random_range(1.0..500.0f64).round(),
            latitude: None,
            longitude: None,
        })
        .collect();
    let d = DMatrix::from_fn(s, s, |i, j| {
        ((pts[i].0 - pts[j].0).abs() + (pts[i].1 - pts[j].1).abs()) as f64 * 10.0
    });
    let mut outcomes = Vec::new();
    for i in 0..s {
        for j in 0..s {
            if i != j && rng.random::<f64>() < keep {
                outcomes.push((i, j, rng.random_range(-3.0..3.0)));
            }
        }
    }
    FlowDataset::from_outcomes(locs, Some(d), &outcomes).unwrap()
}

/// Column list for a case with boundary hinges removed, built from scratch.
pub fn expected_columns(case: ModelCase, s: usize, boundary: &[bool]) -> Vec<Column> {
    let mut cols = vec![Column::SourcePop { with_break: false }, Column::DestPop { with_break: false }];
    if case == ModelCase::II {
        cols.extend([
            Column::SourcePop { with_break: true },
            Column::DestPop { with_break: true },
            Column::GroupOffset,
        ]);
    }
    for i in 0..s {
        cols.push(Column::Slope(i));
    }
    for i in 0..s {
        if !boundary[i] {
            cols.push(Column::Hinge(i));
        }
    }
    cols
}

/// Entry `(i -> j, col)` of the design from its defining formula.
pub fn design_entry(
    data: &FlowDataset,
    theta: &[f64],
    eta: &[bool],
    case: ModelCase,
    i: usize,
    j: usize,
    col: Column,
) -> f64 {
    let pop = |k: usize| data.locations()[k].population.ln();
    let logd = data.distance_km()[(i, j)].ln();
    let group = case == ModelCase::II && eta[i];
    match col {
        Column::SourcePop { with_break } => {
            if with_break == group {
                pop(i)
            } else {
                0.0
            }
        }
        Column::DestPop { with_break } => {
            if with_break == group {
                pop(j)
            } else {
                0.0
            }
        }
        Column::GroupOffset => {
            if group {
                1.0
            } else {
                0.0
            }
        }
        Column::Slope(k) => {
            if k == i {
                logd
            } else {
                0.0
            }
        }
        Column::Hinge(k) => {
            if k == i && logd > theta[i] {
                logd - theta[i]
            } else {
                0.0
            }
        }
    }
}

/// Random break points (inside each source's range), inclusion flags and
/// boundary flags.
pub fn random_state<R: Rng>(data: &FlowDataset, rng: &mut R) -> (BreakPoints, InclusionState) {
    let s = data.len();
    let theta = (0..s)
        .map(|i| match data.theta_range(i) {
            Some((lo, hi)) if hi > lo => rng.random_range(lo..hi),
            Some((lo, _)) => lo,
            None => 0.0,
        })
        .collect();
    let eta = (0..s).map(|_| rng.random()).collect();
    let boundary = (0..s).map(|_| rng.random_bool(0.3)).collect();
    (
        BreakPoints::new(data, theta).unwrap(),
        InclusionState::new(eta, boundary).unwrap(),
    )
}

/// Boundary rule by sorting the source's log-distances and locating theta.
pub fn boundary_by_counting(data: &FlowDataset, theta: f64, source: usize, fraction: f64) -> bool {
    let mut d: Vec<f64> = data
        .rows_of(source)
        .iter()
        .map(|&r| {
            let p = &data.pairs()[r];
            data.distance_km()[(p.source, p.destination)].ln()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let below = d.partition_point(|&v| v < theta);
    let above = n - d.partition_point(|&v| v <= theta);
    let need = (fraction * n as f64).ceil() as usize;
    below < need || above < need
}

/// Population strictly closer to `i` than `j`, by triple loop.
pub fn ring_brute_force(data: &FlowDataset) -> DMatrix<f64> {
    let s = data.len();
    let d = data.distance_km();
    DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            return 0.0;
        }
        let mut total = 0.0;
        for k in 0..s {
            if k != i && k != j && d[(i, k)] < d[(i, j)] {
                total += data.locations()[k].population;
            }
        }
        total
    })
}

/// Rank by sorting the other locations and counting through the last tie.
pub fn rank_brute_force(data: &FlowDataset, u: usize, v: usize) -> usize {
    let d = data.distance_km();
    let mut others: Vec<f64> = (0..data.len()).filter(|&w| w != u).map(|w| d[(u, w)]).collect();
    others.sort_by(f64::total_cmp);
    let target = d[(u, v)];
    others.iter().rposition(|&x| x == target).unwrap() + 1
}
