use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{model_label, ParameterState};
use crate::design::{full_layout, ModelCase};
use crate::error::{Error, Result};
use crate::flowdata::FlowDataset;

/// Retained post-burn-in draws of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub chain: usize,
    pub case: ModelCase,
    pub location_ids: Vec<String>,
    /// Names of the coefficients in full-layout order.
    pub coefficient_names: Vec<String>,
    /// Outer iteration number (1-based) of each retained draw.
    pub iterations: Vec<usize>,
    pub states: Vec<ParameterState>,
    /// Accepted break-point proposals per source after burn-in.
    pub accept_counts: Vec<u64>,
    /// Break-point proposals per source after burn-in.
    pub proposals: u64,
}

impl ChainTrace {
    pub fn new(chain: usize, data: &FlowDataset, case: ModelCase) -> Self {
        Self {
            chain,
            case,
            location_ids: data.locations().iter().map(|l| l.id.clone()).collect(),
            coefficient_names: full_layout(case, data.len()).iter().map(|c| c.name(data)).collect(),
            iterations: Vec::new(),
            states: Vec::new(),
            accept_counts: vec![0; data.len()],
            proposals: 0,
        }
    }

    pub fn push(&mut self, iteration: usize, state: ParameterState) {
        self.iterations.push(iteration);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn model_labels(&self) -> Vec<u64> {
        self.states.iter().map(|s| model_label(&s.eta)).collect()
    }

    /// Per-source Metropolis acceptance rates after burn-in.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accept_counts
            .iter()
            .map(|&a| if self.proposals == 0 { f64::NAN } else { a as f64 / self.proposals as f64 })
            .collect()
    }

    /// Scalar trace of one quantity across retained draws.
    pub fn series(&self, f: impl Fn(&ParameterState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }
}

fn header(trace: &ChainTrace) -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "model_label", "mu", "sigma2", "lambda2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(trace.coefficient_names.iter().map(|n| format!("beta:{n}")));
    h.extend(trace.coefficient_names.iter().map(|n| format!("tau2:{n}")));
    for prefix in ["theta", "eta", "boundary", "routing"] {
        h.extend(trace.location_ids.iter().map(|id| format!("{prefix}:{id}")));
    }
    h
}

/// Writes one row per retained draw.
pub fn write_trace(trace: &ChainTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header(trace)).map_err(io)?;
    let flag = |b: &bool| if *b { "1".to_string() } else { "0".to_string() };
    for (t, s) in trace.iterations.iter().zip(&trace.states) {
        let mut row: Vec<String> = vec![
            t.to_string(),
            s.model_label().to_string(),
            s.mu.to_string(),
            s.sigma2.to_string(),
            s.lambda2.to_string(),
        ];
        row.extend(s.beta.iter().map(f64::to_string));
        row.extend(s.tau2.iter().map(f64::to_string));
        row.extend(s.theta.iter().map(f64::to_string));
        row.extend(s.eta.iter().map(flag));
        row.extend(s.boundary.iter().map(flag));
        row.extend(s.routing.iter().map(flag));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a trace written by [`write_trace`]. Acceptance counts are not
/// stored in the file and come back as zero.
pub fn read_trace(path: &Path, chain: usize) -> Result<ChainTrace> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let parse_err = |line: usize, m: String| Error::parse(path, line, m);
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let strip = |prefix: &str| -> Vec<String> {
        headers
            .iter()
            .filter_map(|h| h.strip_prefix(prefix).map(str::to_string))
            .collect()
    };
    let coefficient_names = strip("beta:");
    let location_ids = strip("theta:");
    let s = location_ids.len();
    let p = coefficient_names.len();
    let case = match p.checked_sub(2 * s) {
        Some(2) => ModelCase::I,
        Some(5) => ModelCase::II,
        _ => return Err(parse_err(1, format!("{p} coefficients for {s} locations"))),
    };
    if headers.len() != 5 + 2 * p + 4 * s {
        return Err(parse_err(1, "unexpected column count".into()));
    }
    let mut trace = ChainTrace {
        chain,
        case,
        location_ids,
        coefficient_names,
        iterations: Vec::new(),
        states: Vec::new(),
        accept_counts: vec![0; s],
        proposals: 0,
    };
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("column {}: {e}", headers[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            match &rec[i] {
                "1" => Ok(true),
                "0" => Ok(false),
                v => Err(parse_err(line, format!("column {}: expected 0/1, got `{v}`", headers[i]))),
            }
        };
        let iteration = rec[0]
            .parse::<usize>()
            .map_err(|e| parse_err(line, format!("iteration: {e}")))?;
        let beta = (5..5 + p).map(num).collect::<Result<Vec<_>>>()?;
        let tau2 = (5 + p..5 + 2 * p).map(num).collect::<Result<Vec<_>>>()?;
        let o = 5 + 2 * p;
        let theta = (o..o + s).map(num).collect::<Result<Vec<_>>>()?;
        let eta = (o + s..o + 2 * s).map(flag).collect::<Result<Vec<_>>>()?;
        let boundary = (o + 2 * s..o + 3 * s).map(flag).collect::<Result<Vec<_>>>()?;
        let routing = (o + 3 * s..o + 4 * s).map(flag).collect::<Result<Vec<_>>>()?;
        let state = ParameterState {
            case,
            mu: num(2)?,
            beta,
            theta,
            sigma2: num(3)?,
            lambda2: num(4)?,
            tau2,
            eta,
            boundary,
            routing,
        };
        trace.push(iteration, state);
    }
    Ok(trace)
}
