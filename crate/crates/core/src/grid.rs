//! Spatial grid, centroid distances and validated origin-destination snapshots.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Default histogram bin width for the non-zero pair profile (one 2 km cell).
pub const DEFAULT_PROFILE_BIN_KM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSystem {
    /// Projected coordinates in metres; header `cell_id,x,y`.
    PlanarMeters,
    /// Longitude/latitude in degrees; header `cell_id,lon,lat`.
    Wgs84Degrees,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    /// Easting in metres, or longitude in degrees.
    pub x: f64,
    /// Northing in metres, or latitude in degrees.
    pub y: f64,
}

/// Ordered set of region cells. Cell order defines every row/column index downstream.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cells: Vec<Cell>,
    crs: CoordinateSystem,
    index: HashMap<String, usize>,
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.crs == other.crs && self.cells == other.cells
    }
}

impl SpatialGrid {
    pub fn new(cells: Vec<Cell>, crs: CoordinateSystem) -> Result<Self> {
        if cells.len() < 2 {
            return Err(Error::TooFewCells(cells.len()));
        }
        let mut index = HashMap::with_capacity(cells.len());
        for (i, cell) in cells.iter().enumerate() {
            if index.insert(cell.id.clone(), i).is_some() {
                return Err(Error::DuplicateCellId(cell.id.clone()));
            }
        }
        Ok(Self { cells, crs, index })
    }

    /// Reads a grid table. The header picks the coordinate system: `x,y` for
    /// planar metres, `lon,lat` for WGS84 degrees.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::csv("grid header", e))?.clone();
        let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
        let crs = match names.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["cell_id", "x", "y"] => CoordinateSystem::PlanarMeters,
            ["cell_id", "lon", "lat"] => CoordinateSystem::Wgs84Degrees,
            _ => {
                return Err(Error::MalformedRow {
                    line: 1,
                    reason: format!(
                        "expected header cell_id,x,y or cell_id,lon,lat, found {}",
                        names.join(",")
                    ),
                })
            }
        };

        let mut cells = Vec::new();
        for (k, record) in rdr.records().enumerate() {
            let line = k as u64 + 2;
            let record = record.map_err(|e| Error::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            if record.len() != 3 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let coord = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::MalformedRow {
                        line,
                        reason: format!("non-numeric coordinate `{s}`"),
                    })
            };
            cells.push(Cell {
                id: record[0].to_string(),
                x: coord(&record[1])?,
                y: coord(&record[2])?,
            });
        }
        Self::new(cells, crs)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn crs(&self) -> CoordinateSystem {
        self.crs
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn cell_id(&self, i: usize) -> &str {
        &self.cells[i].id
    }

    /// Centroid of cell `i` as (lon, lat) for WGS84 grids or (x, y) metres otherwise.
    pub fn centroid(&self, i: usize) -> (f64, f64) {
        (self.cells[i].x, self.cells[i].y)
    }
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<SpatialGrid> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening grid {}", path.display()), e))?;
    SpatialGrid::from_reader(std::io::BufReader::new(file))
}

/// Symmetric matrix of centroid distances in kilometres.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    grid: Arc<SpatialGrid>,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.len() + j]
    }

    /// Copy with every distance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            d: self.d.iter().map(|v| v * factor).collect(),
        }
    }
}

pub fn haversine_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Centroid distances: Euclidean (metres converted to km) or haversine.
pub fn pairwise_distances(grid: &Arc<SpatialGrid>) -> Result<DistanceMatrix> {
    let n = grid.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let (xi, yi) = grid.centroid(i);
        for j in (i + 1)..n {
            let (xj, yj) = grid.centroid(j);
            let dist = match grid.crs() {
                CoordinateSystem::PlanarMeters => (xi - xj).hypot(yi - yj) / 1000.0,
                CoordinateSystem::Wgs84Degrees => haversine_km(xi, yi, xj, yj),
            };
            if !(dist > 0.0) {
                return Err(Error::DegenerateCentroids {
                    a: grid.cell_id(i).to_string(),
                    b: grid.cell_id(j).to_string(),
                });
            }
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    Ok(DistanceMatrix {
        grid: Arc::clone(grid),
        d,
    })
}

/// One time slice: scenario name and hour of day.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceLabel {
    pub scenario: String,
    pub hour: u8,
}

impl SliceLabel {
    pub fn new(scenario: impl Into<String>, hour: u8) -> Self {
        Self {
            scenario: scenario.into(),
            hour,
        }
    }
}

impl fmt::Display for SliceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:02}", self.scenario, self.hour)
    }
}

/// Nonnegative trip counts for one slice, stored as sorted `(origin, dest, count)` triples.
#[derive(Debug, Clone)]
pub struct ODSnapshot {
    grid: Arc<SpatialGrid>,
    label: SliceLabel,
    entries: Vec<(usize, usize, f64)>,
}

impl ODSnapshot {
    /// Builds a snapshot from triples; duplicates are summed in input order.
    pub fn from_triples(
        grid: Arc<SpatialGrid>,
        label: SliceLabel,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let n = grid.len();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (k, (i, j, c)) in triples.into_iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "pair ({i},{j}) outside a grid of {n} cells"
                )));
            }
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::NegativeCount {
                    count: c,
                    line: k as u64 + 1,
                });
            }
            entries.push((i, j, c));
        }
        Ok(Self::assemble(grid, label, entries))
    }

    fn assemble(grid: Arc<SpatialGrid>, label: SliceLabel, mut entries: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps input order within a pair, so the sum is order-faithful
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += c,
                _ => merged.push((i, j, c)),
            }
        }
        Self {
            grid,
            label,
            entries: merged,
        }
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn label(&self) -> &SliceLabel {
        &self.label
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// Stored `(origin, dest, count)` entries, sorted by origin then destination.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(a, b, _)| (a, b))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for &(i, j, c) in &self.entries {
            m[i][j] = c;
        }
        m
    }
}

struct OdRow {
    origin: usize,
    dest: usize,
    label: SliceLabel,
    count: f64,
}

fn read_od_rows<R: Read>(reader: R, grid: &SpatialGrid) -> Result<Vec<OdRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv("OD header", e))?;
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != ["origin_id", "dest_id", "hour", "scenario", "count"] {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!(
                "expected header origin_id,dest_id,hour,scenario,count, found {}",
                names.join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        line += 1;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::MalformedRow {
                    line,
                    reason: e.to_string(),
                })
            }
        }
        if record.len() != 5 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let lookup = |id: &str| {
            grid.index_of(id).ok_or_else(|| Error::UnknownCellId {
                id: id.to_string(),
                line,
            })
        };
        let origin = lookup(&record[0])?;
        let dest = lookup(&record[1])?;
        let hour: u8 = record[2]
            .parse()
            .ok()
            .filter(|h| *h < 24)
            .ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("hour `{}` not in 0..=23", &record[2]),
            })?;
        let count: f64 = record[4]
            .parse()
            .ok()
            .filter(|c: &f64| c.is_finite())
            .ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("non-numeric count `{}`", &record[4]),
            })?;
        if count < 0.0 {
            return Err(Error::NegativeCount { count, line });
        }
        rows.push(OdRow {
            origin,
            dest,
            label: SliceLabel::new(&record[3], hour),
            count,
        });
    }
    Ok(rows)
}

/// Reads the OD table and keeps the rows matching `label`, summing duplicates.
pub fn od_from_reader<R: Read>(reader: R, grid: &Arc<SpatialGrid>, label: &SliceLabel) -> Result<ODSnapshot> {
    let rows = read_od_rows(reader, grid)?;
    let entries: Vec<_> = rows
        .into_iter()
        .filter(|r| &r.label == label)
        .map(|r| (r.origin, r.dest, r.count))
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptySelection {
            scenario: label.scenario.clone(),
            hour: label.hour,
        });
    }
    Ok(ODSnapshot::assemble(Arc::clone(grid), label.clone(), entries))
}

pub fn load_od(path: impl AsRef<Path>, grid: &Arc<SpatialGrid>, label: &SliceLabel) -> Result<ODSnapshot> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening OD table {}", path.display()), e))?;
    od_from_reader(std::io::BufReader::new(file), grid, label)
}

/// Reads every slice of an OD table. Scenarios keep their order of first
/// appearance; hours are ascending within a scenario.
pub fn od_slices_from_reader<R: Read>(reader: R, grid: &Arc<SpatialGrid>) -> Result<Vec<ODSnapshot>> {
    let rows = read_od_rows(reader, grid)?;
    let mut scenario_order: Vec<String> = Vec::new();
    let mut buckets: HashMap<SliceLabel, Vec<(usize, usize, f64)>> = HashMap::new();
    for r in rows {
        if !scenario_order.contains(&r.label.scenario) {
            scenario_order.push(r.label.scenario.clone());
        }
        buckets.entry(r.label).or_default().push((r.origin, r.dest, r.count));
    }
    let mut labels: Vec<SliceLabel> = buckets.keys().cloned().collect();
    labels.sort_by_key(|l| (scenario_order.iter().position(|s| s == &l.scenario), l.hour));
    Ok(labels
        .into_iter()
        .map(|label| {
            let entries = buckets.remove(&label).unwrap_or_default();
            ODSnapshot::assemble(Arc::clone(grid), label, entries)
        })
        .collect())
}

pub fn load_od_slices(path: impl AsRef<Path>, grid: &Arc<SpatialGrid>) -> Result<Vec<ODSnapshot>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening OD table {}", path.display()), e))?;
    od_slices_from_reader(std::io::BufReader::new(file), grid)
}

pub(crate) fn same_grid(a: &Arc<SpatialGrid>, b: &Arc<SpatialGrid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileBin {
    pub bin_lo_km: f64,
    pub bin_hi_km: f64,
    pub n_pairs: usize,
    pub n_nonzero: usize,
    pub pct: f64,
}

/// Share of unordered pairs with `M_ij > 0 or M_ji > 0`, per distance bin.
/// Pairs are pooled across snapshots with a logical OR.
pub fn nonzero_pair_profile(
    snapshots: &[ODSnapshot],
    d: &DistanceMatrix,
    bin_width_km: f64,
) -> Result<Vec<ProfileBin>> {
    if !(bin_width_km > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bin width must be positive, got {bin_width_km}"
        )));
    }
    if snapshots.iter().any(|s| !same_grid(s.grid(), d.grid())) {
        return Err(Error::MixedGrids);
    }
    let n = d.len();
    let mut active = vec![false; n * n];
    for snap in snapshots {
        for &(i, j, c) in snap.entries() {
            if c > 0.0 && i != j {
                let (a, b) = (i.min(j), i.max(j));
                active[a * n + b] = true;
            }
        }
    }
    let mut bins: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let k = (d.get(i, j) / bin_width_km).floor() as usize;
            if bins.len() <= k {
                bins.resize(k + 1, (0, 0));
            }
            bins[k].0 += 1;
            if active[i * n + j] {
                bins[k].1 += 1;
            }
        }
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(k, (n_pairs, n_nonzero))| ProfileBin {
            bin_lo_km: k as f64 * bin_width_km,
            bin_hi_km: (k + 1) as f64 * bin_width_km,
            n_pairs,
            n_nonzero,
            pct: if n_pairs == 0 {
                0.0
            } else {
                100.0 * n_nonzero as f64 / n_pairs as f64
            },
        })
        .collect())
}
