//! Location and flow ingestion.
//!
//! A [`FlowDataset`] holds `S` locations, the directed flow counts between
//! them, and the derived modeling representation: a symmetric log-distance
//! matrix, log populations, and one outcome `Y_ij = log(count_ij)` per retained
//! ordered pair. Pairs with a zero count are dropped before the log transform
//! and self-flows are rejected.
//!
//! File formats are comma-delimited with a header row:
//!
//! ```text
//! locations: id,population,latitude,longitude
//! flows:     source_id,destination_id,count
//! matrix:    <id_1>,...,<id_S>   (header), then S rows of kilometers
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub population: f64,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

impl Location {
    pub fn new(id: impl Into<String>, population: f64, latitude: f64, longitude: f64) -> Self {
        Self {
            id: id.into(),
            population,
            latitude: Some(latitude),
            longitude: Some(longitude),
        }
    }

    pub fn coordinates(&self) -> Option<(f64, f64)> {
        Some((self.latitude?, self.longitude?))
    }

    fn validate(&self) -> Result<()> {
        if !(self.population >= 1.0) || !self.population.is_finite() {
            return Err(Error::InvalidPopulation {
                id: self.id.clone(),
                population: self.population,
            });
        }
        let lat_ok = self.latitude.is_none_or(|v| (-90.0..=90.0).contains(&v));
        let lon_ok = self.longitude.is_none_or(|v| (-180.0..=180.0).contains(&v));
        if !lat_ok || !lon_ok {
            return Err(Error::InvalidCoordinates {
                id: self.id.clone(),
                latitude: self.latitude.unwrap_or(f64::NAN),
                longitude: self.longitude.unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub source: String,
    pub destination: String,
    pub count: u64,
}

/// One retained ordered pair, indexed into the dataset's location list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair {
    pub source: usize,
    pub destination: usize,
    pub outcome: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceSource {
    Haversine,
    ExplicitMatrix(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub locations: usize,
    pub flow_records: usize,
    pub retained_pairs: usize,
    pub dropped_zero_pairs: usize,
}

#[derive(Clone, Debug)]
pub struct FlowDataset {
    locations: Vec<Location>,
    flows: Vec<FlowRecord>,
    distance_km: DMatrix<f64>,
    log_distance: DMatrix<f64>,
    log_population: Vec<f64>,
    pairs: Vec<Pair>,
    by_source: Vec<Vec<usize>>,
    explicit_distances: bool,
    report: LoadReport,
}

/// Great-circle distance in kilometers between two (latitude, longitude)
/// points given in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Arithmetic mean of member coordinates, used to place an aggregate unit
/// (e.g. a county) from its members' centroids.
pub fn mean_coordinate(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (lat, lon) = points
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    Some((lat / n, lon / n))
}

impl FlowDataset {
    /// Validates locations and flows and derives the modeling representation.
    /// `distance_km` must be a symmetric `S x S` matrix when supplied;
    /// otherwise haversine distances between coordinates are used.
    pub fn new(
        locations: Vec<Location>,
        flows: Vec<FlowRecord>,
        distance_km: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let index = index_locations(&locations)?;
        let s = locations.len();
        let explicit = distance_km.is_some();
        let distance_km = match distance_km {
            Some(m) => {
                validate_matrix(&m, s)?;
                m
            }
            None => haversine_matrix(&locations)?,
        };

        let mut seen = HashSet::new();
        let mut counts: Vec<(usize, usize, u64)> = Vec::with_capacity(flows.len());
        for f in &flows {
            let src = *index
                .get(f.source.as_str())
                .ok_or_else(|| Error::UnknownLocation(f.source.clone()))?;
            let dst = *index
                .get(f.destination.as_str())
                .ok_or_else(|| Error::UnknownLocation(f.destination.clone()))?;
            if src == dst {
                return Err(Error::SelfFlow(f.source.clone()));
            }
            if !seen.insert((src, dst)) {
                return Err(Error::DuplicatePair {
                    source_id: f.source.clone(),
                    destination: f.destination.clone(),
                });
            }
            counts.push((src, dst, f.count));
        }
        counts.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let dropped = counts.iter().filter(|c| c.2 == 0).count();
        let pairs: Vec<Pair> = counts
            .iter()
            .filter(|c| c.2 > 0)
            .map(|&(source, destination, count)| Pair {
                source,
                destination,
                outcome: (count as f64).ln(),
            })
            .collect();
        let report = LoadReport {
            locations: s,
            flow_records: flows.len(),
            retained_pairs: pairs.len(),
            dropped_zero_pairs: dropped,
        };
        Self::assemble(locations, flows, distance_km, explicit, pairs, report)
    }

    /// Builds a dataset whose outcomes are given directly (e.g. simulated
    /// log-intensities). Flow counts are recorded as `round(exp(y))`.
    pub fn from_outcomes(
        locations: Vec<Location>,
        distance_km: Option<DMatrix<f64>>,
        outcomes: &[(usize, usize, f64)],
    ) -> Result<Self> {
        index_locations(&locations)?;
        let s = locations.len();
        let explicit = distance_km.is_some();
        let distance_km = match distance_km {
            Some(m) => {
                validate_matrix(&m, s)?;
                m
            }
            None => haversine_matrix(&locations)?,
        };
        let mut seen = HashSet::new();
        let mut pairs = Vec::with_capacity(outcomes.len());
        for &(source, destination, outcome) in outcomes {
            if source >= s || destination >= s {
                return Err(Error::Dimension(format!(
                    "pair ({source}, {destination}) out of range for {s} locations"
                )));
            }
            if source == destination {
                return Err(Error::SelfFlow(locations[source].id.clone()));
            }
            if !outcome.is_finite() {
                return Err(Error::NonFinite(format!("outcome for pair ({source}, {destination})")));
            }
            if !seen.insert((source, destination)) {
                return Err(Error::DuplicatePair {
                    source_id: locations[source].id.clone(),
                    destination: locations[destination].id.clone(),
                });
            }
            pairs.push(Pair {
                source,
                destination,
                outcome,
            });
        }
        pairs.sort_unstable_by_key(|p| (p.source, p.destination));
        let flows = pairs
            .iter()
            .map(|p| FlowRecord {
                source: locations[p.source].id.clone(),
                destination: locations[p.destination].id.clone(),
                count: p.outcome.exp().round() as u64,
            })
            .collect();
        let report = LoadReport {
            locations: s,
            flow_records: pairs.len(),
            retained_pairs: pairs.len(),
            dropped_zero_pairs: 0,
        };
        Self::assemble(locations, flows, distance_km, explicit, pairs, report)
    }

    fn assemble(
        locations: Vec<Location>,
        flows: Vec<FlowRecord>,
        distance_km: DMatrix<f64>,
        explicit_distances: bool,
        pairs: Vec<Pair>,
        report: LoadReport,
    ) -> Result<Self> {
        let s = locations.len();
        let log_distance = DMatrix::from_fn(s, s, |i, j| {
            if i == j {
                f64::NAN
            } else {
                distance_km[(i, j)].ln()
            }
        });
        for p in &pairs {
            if !(distance_km[(p.source, p.destination)] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "distance between `{}` and `{}` must be positive",
                    locations[p.source].id, locations[p.destination].id
                )));
            }
        }
        let log_population = locations.iter().map(|l| l.population.ln()).collect();
        let mut by_source = vec![Vec::new(); s];
        for (k, p) in pairs.iter().enumerate() {
            by_source[p.source].push(k);
        }
        Ok(Self {
            locations,
            flows,
            distance_km,
            log_distance,
            log_population,
            pairs,
            by_source,
            explicit_distances,
            report,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn flows(&self) -> &[FlowRecord] {
        &self.flows
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Indices into [`pairs`](Self::pairs) whose source is `source`.
    pub fn rows_of(&self, source: usize) -> &[usize] {
        &self.by_source[source]
    }

    pub fn distance_km(&self) -> &DMatrix<f64> {
        &self.distance_km
    }

    /// Log-kilometer distances; the diagonal is NaN.
    pub fn log_distance(&self) -> &DMatrix<f64> {
        &self.log_distance
    }

    pub fn log_population(&self) -> &[f64] {
        &self.log_population
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.outcome).collect()
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }

    pub fn has_explicit_distances(&self) -> bool {
        self.explicit_distances
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.locations
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::UnknownLocation(id.to_string()))
    }

    /// Log-distance of a retained pair.
    pub fn pair_log_distance(&self, pair: &Pair) -> f64 {
        self.log_distance[(pair.source, pair.destination)]
    }

    /// Observed (min, max) log-distance over the retained destinations of
    /// `source`, or `None` when the source has no retained pairs.
    pub fn theta_range(&self, source: usize) -> Option<(f64, f64)> {
        let rows = &self.by_source[source];
        if rows.is_empty() {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in rows {
            let v = self.pair_log_distance(&self.pairs[r]);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    /// Returns a copy with outcomes replaced (same covariates and pair set).
    pub fn with_outcomes(&self, outcomes: &[f64]) -> Result<Self> {
        if outcomes.len() != self.pairs.len() {
            return Err(Error::Dimension(format!(
                "{} outcomes for {} pairs",
                outcomes.len(),
                self.pairs.len()
            )));
        }
        let mut out = self.clone();
        for (p, &y) in out.pairs.iter_mut().zip(outcomes) {
            p.outcome = y;
        }
        for (f, p) in out.flows.iter_mut().zip(&out.pairs) {
            f.count = p.outcome.exp().round() as u64;
        }
        Ok(out)
    }

    /// Sub-dataset induced by the `k` most populous locations. Population
    /// ties are broken by id in lexicographic order; retained locations keep
    /// their original relative order.
    pub fn top_k_subset(&self, k: usize) -> Result<Self> {
        let s = self.len();
        if k < 2 || k > s {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must lie in [2, {s}]"
            )));
        }
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| {
            let la = &self.locations[a];
            let lb = &self.locations[b];
            lb.population
                .total_cmp(&la.population)
                .then_with(|| la.id.cmp(&lb.id))
        });
        let mut keep: Vec<usize> = order[..k].to_vec();
        keep.sort_unstable();
        let mut remap = vec![usize::MAX; s];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let locations = keep.iter().map(|&i| self.locations[i].clone()).collect();
        let distance_km = DMatrix::from_fn(k, k, |a, b| self.distance_km[(keep[a], keep[b])]);
        let kept_ids: HashSet<&str> = keep.iter().map(|&i| self.locations[i].id.as_str()).collect();
        let flows: Vec<FlowRecord> = self
            .flows
            .iter()
            .filter(|f| kept_ids.contains(f.source.as_str()) && kept_ids.contains(f.destination.as_str()))
            .cloned()
            .collect();
        let pairs: Vec<Pair> = self
            .pairs
            .iter()
            .filter(|p| remap[p.source] != usize::MAX && remap[p.destination] != usize::MAX)
            .map(|p| Pair {
                source: remap[p.source],
                destination: remap[p.destination],
                outcome: p.outcome,
            })
            .collect();
        let report = LoadReport {
            locations: k,
            flow_records: flows.len(),
            retained_pairs: pairs.len(),
            dropped_zero_pairs: flows.iter().filter(|f| f.count == 0).count(),
        };
        Self::assemble(locations, flows, distance_km, self.explicit_distances, pairs, report)
    }

    /// Writes `locations.csv`, `flows.csv` and, for explicit-distance
    /// datasets, `distances.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let loc_path = dir.join("locations.csv");
        let mut w = csv_writer(&loc_path)?;
        write_record(&mut w, &loc_path, ["id", "population", "latitude", "longitude"])?;
        for l in &self.locations {
            let lat = l.latitude.map(|v| v.to_string()).unwrap_or_default();
            let lon = l.longitude.map(|v| v.to_string()).unwrap_or_default();
            write_record(
                &mut w,
                &loc_path,
                [l.id.clone(), l.population.to_string(), lat, lon],
            )?;
        }
        w.flush().map_err(|e| Error::io(&loc_path, e))?;

        let flow_path = dir.join("flows.csv");
        let mut w = csv_writer(&flow_path)?;
        write_record(&mut w, &flow_path, ["source_id", "destination_id", "count"])?;
        for f in &self.flows {
            write_record(
                &mut w,
                &flow_path,
                [f.source.clone(), f.destination.clone(), f.count.to_string()],
            )?;
        }
        w.flush().map_err(|e| Error::io(&flow_path, e))?;

        if self.explicit_distances {
            let path = dir.join("distances.csv");
            let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let header: Vec<&str> = self.locations.iter().map(|l| l.id.as_str()).collect();
            let mut text = header.join(",");
            text.push('\n');
            for i in 0..self.len() {
                let row: Vec<String> = (0..self.len())
                    .map(|j| self.distance_km[(i, j)].to_string())
                    .collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            file.write_all(text.as_bytes())
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Loads and validates a dataset from delimited text files.
pub fn load_dataset(
    locations_file: &Path,
    flows_file: &Path,
    distance_source: &DistanceSource,
) -> Result<FlowDataset> {
    let locations = read_locations(locations_file)?;
    let flows = read_flows(flows_file)?;
    let matrix = match distance_source {
        DistanceSource::Haversine => None,
        DistanceSource::ExplicitMatrix(path) => Some(read_matrix(path, &locations)?),
    };
    let data = FlowDataset::new(locations, flows, matrix)?;
    if data.report.dropped_zero_pairs > 0 {
        log::info!(
            "dropped {} zero-count pairs from {}",
            data.report.dropped_zero_pairs,
            flows_file.display()
        );
    }
    Ok(data)
}

fn index_locations(locations: &[Location]) -> Result<HashMap<&str, usize>> {
    let mut index = HashMap::with_capacity(locations.len());
    for (i, l) in locations.iter().enumerate() {
        l.validate()?;
        if index.insert(l.id.as_str(), i).is_some() {
            return Err(Error::DuplicateLocation(l.id.clone()));
        }
    }
    Ok(index)
}

fn haversine_matrix(locations: &[Location]) -> Result<DMatrix<f64>> {
    let coords = locations
        .iter()
        .map(|l| l.coordinates().ok_or_else(|| Error::MissingCoordinates(l.id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let s = coords.len();
    Ok(DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            0.0
        } else {
            haversine_km(coords[i], coords[j])
        }
    }))
}

fn validate_matrix(m: &DMatrix<f64>, s: usize) -> Result<()> {
    if m.nrows() != s || m.ncols() != s {
        return Err(Error::Dimension(format!(
            "distance matrix is {}x{}, expected {s}x{s}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..s {
        for j in 0..s {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "distance entry ({i}, {j}) = {v} must be finite and non-negative"
                )));
            }
            if v != m[(j, i)] {
                return Err(Error::InvalidArgument(format!(
                    "distance matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_record<I, T>(w: &mut csv::Writer<File>, path: &Path, record: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(record)
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn column_positions(
    path: &Path,
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {name} from `{raw}`")))
}

fn read_locations(path: &Path) -> Result<Vec<Location>> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let cols = column_positions(path, &headers, &["id", "population"])?;
    let lat_col = headers.iter().position(|h| h == "latitude");
    let lon_col = headers.iter().position(|h| h == "longitude");
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let opt = |col: Option<usize>, name: &str| -> Result<Option<f64>> {
            match col.and_then(|c| rec.get(c)) {
                Some(raw) if !raw.is_empty() => parse_field(path, line, name, raw).map(Some),
                _ => Ok(None),
            }
        };
        out.push(Location {
            id: rec[cols[0]].to_string(),
            population: parse_field(path, line, "population", &rec[cols[1]])?,
            latitude: opt(lat_col, "latitude")?,
            longitude: opt(lon_col, "longitude")?,
        });
    }
    Ok(out)
}

fn read_flows(path: &Path) -> Result<Vec<FlowRecord>> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let cols = column_positions(path, &headers, &["source_id", "destination_id", "count"])?;
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(FlowRecord {
            source: rec[cols[0]].to_string(),
            destination: rec[cols[1]].to_string(),
            count: parse_field(path, line, "count", &rec[cols[2]])?,
        });
    }
    Ok(out)
}

fn read_matrix(path: &Path, locations: &[Location]) -> Result<DMatrix<f64>> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let s = locations.len();
    if headers.len() != s || headers.iter().zip(locations).any(|(h, l)| h != l.id) {
        return Err(Error::parse(
            path,
            1,
            "header must list location ids in locations-file order",
        ));
    }
    let mut values = Vec::with_capacity(s * s);
    let mut rows = 0;
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.len() != s {
            return Err(Error::parse(path, line, format!("expected {s} columns, found {}", rec.len())));
        }
        for raw in rec.iter() {
            values.push(parse_field::<f64>(path, line, "distance", raw)?);
        }
        rows += 1;
    }
    if rows != s {
        return Err(Error::parse(path, rows + 1, format!("expected {s} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(s, s, &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_locations() -> Vec<Location> {
        vec![Location::new("A", 100.0, 0.0, 0.0), Location::new("B", 200.0, 0.0, 1.0)]
    }

    fn flow(s: &str, d: &str, count: u64) -> FlowRecord {
        FlowRecord {
            source: s.into(),
            destination: d.into(),
            count,
        }
    }

    /// Spherical law of cosines in the numerically safe atan2 form.
    fn great_circle_oracle(a: (f64, f64), b: (f64, f64)) -> f64 {
        let (p1, l1) = (a.0.to_radians(), a.1.to_radians());
        let (p2, l2) = (b.0.to_radians(), b.1.to_radians());
        let dl = l2 - l1;
        let y = ((p2.cos() * dl.sin()).powi(2)
            + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2))
        .sqrt();
        let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_KM * y.atan2(x)
    }

    #[test]
    fn one_degree_at_equator() {
        let data = FlowDataset::new(two_locations(), vec![flow("A", "B", 5)], None).unwrap();
        let d = data.distance_km()[(0, 1)];
        assert!((d - 111.19).abs() < 0.01, "{d}");
        assert!((d - great_circle_oracle((0.0, 0.0), (0.0, 1.0))).abs() < 1e-9);
        assert!((data.log_distance()[(0, 1)] - 111.19f64.ln()).abs() < 1e-4);
        assert_eq!(data.pairs().len(), 1);
        assert_eq!(data.pairs()[0].outcome, 5f64.ln());
        assert!(data.log_distance()[(0, 0)].is_nan());
    }

    #[test]
    fn zero_counts_are_dropped() {
        let flows = vec![flow("A", "B", 0), flow("B", "A", 7)];
        let data = FlowDataset::new(two_locations(), flows, None).unwrap();
        assert_eq!(data.pairs().len(), 1);
        assert_eq!(data.pairs()[0].source, 1);
        assert_eq!(data.report().dropped_zero_pairs, 1);
    }

    #[test]
    fn validation_errors() {
        let err = FlowDataset::new(two_locations(), vec![flow("A", "Z", 1)], None).unwrap_err();
        assert!(matches!(err, Error::UnknownLocation(ref id) if id == "Z"));

        let err = FlowDataset::new(
            two_locations(),
            vec![flow("A", "B", 1), flow("A", "B", 2)],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("A -> B"), "{err}");

        let mut locs = two_locations();
        locs[1].population = 0.0;
        assert!(matches!(
            FlowDataset::new(locs, vec![], None),
            Err(Error::InvalidPopulation { .. })
        ));

        assert!(matches!(
            FlowDataset::new(two_locations(), vec![flow("A", "A", 1)], None),
            Err(Error::SelfFlow(_))
        ));
    }

    #[test]
    fn centroid_is_arithmetic_mean() {
        let c = mean_coordinate(&[(40.0, -70.0), (42.0, -72.0), (41.0, -71.0)]).unwrap();
        assert_eq!(c, (41.0, -71.0));
        assert!(mean_coordinate(&[]).is_none());
    }

    fn three_locations() -> FlowDataset {
        let locs = vec![
            Location::new("a", 10.0, 0.0, 0.0),
            Location::new("b", 20.0, 0.0, 1.0),
            Location::new("c", 30.0, 0.0, 2.0),
        ];
        let mut flows = Vec::new();
        for s in ["a", "b", "c"] {
            for d in ["a", "b", "c"] {
                if s != d {
                    flows.push(flow(s, d, 3));
                }
            }
        }
        FlowDataset::new(locs, flows, None).unwrap()
    }

    #[test]
    fn top_k_keeps_most_populous() {
        let data = three_locations();
        let sub = data.top_k_subset(2).unwrap();
        let ids: Vec<&str> = sub.locations().iter().map(|l| l.id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert_eq!(sub.pairs().len(), 2);
        assert_eq!(sub.flows().len(), 2);

        let same = data.top_k_subset(3).unwrap();
        assert_eq!(same.outcomes(), data.outcomes());
        assert_eq!(same.log_population(), data.log_population());

        assert!(data.top_k_subset(1).is_err());
        assert!(data.top_k_subset(4).is_err());
    }

    #[test]
    fn top_k_tie_break_by_id() {
        let locs = vec![
            Location::new("z", 50.0, 0.0, 0.0),
            Location::new("m", 50.0, 0.0, 1.0),
            Location::new("a", 50.0, 0.0, 2.0),
        ];
        let data = FlowDataset::new(locs, vec![], None).unwrap();
        for _ in 0..5 {
            let sub = data.top_k_subset(2).unwrap();
            let ids: Vec<&str> = sub.locations().iter().map(|l| l.id.as_str()).collect();
            assert_eq!(ids, ["m", "a"]);
        }
    }

    #[test]
    fn write_and_reload_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = three_locations();
        data.write(dir.path()).unwrap();
        let back = load_dataset(
            &dir.path().join("locations.csv"),
            &dir.path().join("flows.csv"),
            &DistanceSource::Haversine,
        )
        .unwrap();
        assert_eq!(back.outcomes(), data.outcomes());
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(
                        back.log_distance()[(i, j)].to_bits(),
                        data.log_distance()[(i, j)].to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn explicit_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let locs = vec![
            Location { id: "x".into(), population: 5.0, latitude: None, longitude: None },
            Location { id: "y".into(), population: 6.0, latitude: None, longitude: None },
        ];
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 12.5, 12.5, 0.0]);
        let data = FlowDataset::new(locs, vec![flow("x", "y", 4)], Some(m)).unwrap();
        data.write(dir.path()).unwrap();
        let back = load_dataset(
            &dir.path().join("locations.csv"),
            &dir.path().join("flows.csv"),
            &DistanceSource::ExplicitMatrix(dir.path().join("distances.csv")),
        )
        .unwrap();
        assert_eq!(back.log_distance()[(0, 1)], 12.5f64.ln());
        assert!(back.has_explicit_distances());
    }
}
