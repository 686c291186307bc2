//! Delimited-text and GeoJSON writers for the pipeline artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::{CoordinateSystem, ODSnapshot, ProfileBin, SliceLabel, SpatialGrid};
use crate::linalg::Matrix;
use crate::pca::ScreeRow;
use crate::scalar::Scalar;

/// Seventeen significant digits; parses back to the identical `f64`.
pub fn fmt_real<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let ctx = || format!("writing {}", path.display());
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(ctx(), e))?;
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        w.write_record(&row).map_err(|e| Error::csv(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// `cell_id,s,neg_s`
pub fn write_potential<T: Scalar>(path: &Path, grid: &SpatialGrid, s: &[T]) -> Result<()> {
    write_rows(
        path,
        &header(&["cell_id", "s", "neg_s"]),
        s.iter()
            .enumerate()
            .map(|(i, &v)| [grid.cell_id(i).to_string(), fmt_real(v), fmt_real(-v)]),
    )
}

/// Point features at cell centroids with the given numeric properties.
pub fn write_geojson(path: &Path, grid: &SpatialGrid, properties: &[(String, Vec<f64>)]) -> Result<()> {
    let features: Vec<Value> = (0..grid.len())
        .map(|i| {
            let mut props = serde_json::Map::new();
            props.insert("cell_id".into(), json!(grid.cell_id(i)));
            for (name, values) in properties {
                props.insert(name.clone(), json!(values[i]));
            }
            let (x, y) = grid.centroid(i);
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [x, y]},
                "properties": props,
            })
        })
        .collect();
    let mut collection = json!({"type": "FeatureCollection", "features": features});
    if grid.crs() == CoordinateSystem::PlanarMeters {
        // non-WGS84 coordinates are flagged rather than reprojected
        collection["crs_note"] = json!("planar metres");
    }
    write_json(path, &collection)
}

/// `cell_id,w1,...,wl`
pub fn write_eigenvectors<T: Scalar>(path: &Path, grid: &SpatialGrid, vectors: &Matrix<T>, l: usize) -> Result<()> {
    let mut head = header(&["cell_id"]);
    head.extend((1..=l).map(|k| format!("w{k}")));
    write_rows(
        path,
        &head,
        (0..grid.len()).map(|i| {
            std::iter::once(grid.cell_id(i).to_string())
                .chain((0..l).map(move |k| fmt_real(vectors[(i, k)])))
                .collect::<Vec<_>>()
        }),
    )
}

/// `scenario,hour,PC1,...,PCl`
pub fn write_scores<T: Scalar>(path: &Path, labels: &[SliceLabel], scores: &Matrix<T>) -> Result<()> {
    let l = scores.ncols();
    let mut head = header(&["scenario", "hour"]);
    head.extend((1..=l).map(|k| format!("PC{k}")));
    write_rows(
        path,
        &head,
        labels.iter().enumerate().map(|(r, label)| {
            [label.scenario.clone(), label.hour.to_string()]
                .into_iter()
                .chain(scores.row(r).iter().map(|&v| fmt_real(v)))
                .collect::<Vec<_>>()
        }),
    )
}

/// `k,eigenvalue,ratio,cumulative`
pub fn write_scree<T: Scalar>(path: &Path, rows: &[ScreeRow<T>]) -> Result<()> {
    write_rows(
        path,
        &header(&["k", "eigenvalue", "ratio", "cumulative"]),
        rows.iter().map(|r| {
            [
                r.k.to_string(),
                fmt_real(r.eigenvalue),
                fmt_real(r.ratio),
                fmt_real(r.cumulative),
            ]
        }),
    )
}

/// `bin_lo_km,bin_hi_km,n_pairs,n_nonzero,pct`
pub fn write_profile(path: &Path, bins: &[ProfileBin]) -> Result<()> {
    write_rows(
        path,
        &header(&["bin_lo_km", "bin_hi_km", "n_pairs", "n_nonzero", "pct"]),
        bins.iter().map(|b| {
            [
                b.bin_lo_km.to_string(),
                b.bin_hi_km.to_string(),
                b.n_pairs.to_string(),
                b.n_nonzero.to_string(),
                b.pct.to_string(),
            ]
        }),
    )
}

/// `cell_id,x,y` (or `lon,lat`)
pub fn write_grid(path: &Path, grid: &SpatialGrid) -> Result<()> {
    let coords = match grid.crs() {
        CoordinateSystem::PlanarMeters => ["x", "y"],
        CoordinateSystem::Wgs84Degrees => ["lon", "lat"],
    };
    write_rows(
        path,
        &header(&["cell_id", coords[0], coords[1]]),
        grid.cells()
            .iter()
            .map(|c| [c.id.clone(), c.x.to_string(), c.y.to_string()]),
    )
}

/// `origin_id,dest_id,hour,scenario,count`
pub fn write_od(path: &Path, snapshots: &[ODSnapshot]) -> Result<()> {
    write_rows(
        path,
        &header(&["origin_id", "dest_id", "hour", "scenario", "count"]),
        snapshots.iter().flat_map(|snap| {
            let grid = snap.grid();
            let label = snap.label();
            snap.entries().iter().map(move |&(i, j, c)| {
                [
                    grid.cell_id(i).to_string(),
                    grid.cell_id(j).to_string(),
                    label.hour.to_string(),
                    label.scenario.clone(),
                    c.to_string(),
                ]
            })
        }),
    )
}

/// `cell_id,hour,scenario,s_star`
pub fn write_ground_truth(path: &Path, grid: &SpatialGrid, truth: &[(SliceLabel, Vec<f64>)]) -> Result<()> {
    write_rows(
        path,
        &header(&["cell_id", "hour", "scenario", "s_star"]),
        truth.iter().flat_map(|(label, s)| {
            s.iter().enumerate().map(move |(i, &v)| {
                [
                    grid.cell_id(i).to_string(),
                    label.hour.to_string(),
                    label.scenario.clone(),
                    fmt_real(v),
                ]
            })
        }),
    )
}

/// Reads a `cell_id,s,...` potential file back in grid order.
pub fn read_potential(path: &Path, grid: &SpatialGrid) -> Result<Vec<f64>> {
    let ctx = || format!("reading {}", path.display());
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(ctx(), e))?;
    let mut s = vec![f64::NAN; grid.len()];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(ctx(), e))?;
        let line = k as u64 + 2;
        let i = grid.index_of(&rec[0]).ok_or_else(|| Error::UnknownCellId {
            id: rec[0].to_string(),
            line,
        })?;
        s[i] = rec[1].parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("non-numeric potential in {}", path.display()),
        })?;
    }
    if let Some(i) = s.iter().position(|v| v.is_nan()) {
        return Err(Error::MalformedRow {
            line: 0,
            reason: format!("{} has no value for cell {}", path.display(), grid.cell_id(i)),
        });
    }
    Ok(s)
}
