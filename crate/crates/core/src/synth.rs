//! Synthetic OD tensors with a planted potential landscape.
//!
//! Each slice's potential is a sum of factors (spatial pattern times hourly
//! profile times a per-scenario gain). On every pair of cells within
//! `link_radius_km` the net flow is the potential gradient plus optional
//! Gaussian noise, realized as two directed volumes around `base_volume`.
//!
//! Noise for slice `t` (scenarios outer, hours inner) is drawn from
//! `ChaCha8Rng::seed_from_u64(rng_seed)` switched to stream `t`, one standard
//! normal per linked pair in `(i, j)` order, so the output does not depend on
//! how slices are scheduled.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Cell, CoordinateSystem, ODSnapshot, SliceLabel, SpatialGrid};

/// Largest share of directed edges that may be clipped at zero volume.
pub const MAX_CLIPPED_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    /// One value per grid cell, row-major over the lattice.
    pub pattern: Vec<f64>,
    /// One value per hour.
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_km: f64,
    pub n_hours: usize,
    pub scenarios: Vec<String>,
    /// `scenario_gains[s][f]` multiplies factor `f` in scenario `s`.
    pub scenario_gains: Vec<Vec<f64>>,
    pub factors: Vec<Factor>,
    pub base_volume: f64,
    pub noise_sd: f64,
    pub link_radius_km: f64,
    pub rng_seed: u64,
}

pub const DEFAULT_SCENARIOS: [&str; 4] = ["wd2019", "hd2019", "wd2021", "hd2021"];

impl Default for SynthSpec {
    fn default() -> Self {
        Self::lattice(20, 20)
    }
}

impl SynthSpec {
    /// Default three-factor spec on a `rows x cols` lattice with 2 km spacing.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let spacing_km = 2.0;
        let n_hours = 24;
        let factors = default_factors(rows, cols, spacing_km, n_hours);
        Self {
            rows,
            cols,
            spacing_km,
            n_hours,
            scenarios: DEFAULT_SCENARIOS.iter().map(|s| s.to_string()).collect(),
            scenario_gains: vec![
                vec![1.0, 1.0, 1.0],
                vec![0.35, 0.15, 1.6],
                vec![0.75, 0.6, 0.9],
                vec![0.25, 0.1, 1.3],
            ],
            factors,
            base_volume: 50.0,
            noise_sd: 0.0,
            link_radius_km: 4.0,
            rng_seed: 7,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_cells() < 2 {
            return bad("synthetic lattice needs at least 2 cells".into());
        }
        if !(self.spacing_km > 0.0) {
            return bad("spacing_km must be positive".into());
        }
        if self.n_hours == 0 || self.n_hours > 24 {
            return bad(format!("n_hours must lie in 1..=24, got {}", self.n_hours));
        }
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        if !(self.base_volume > 0.0) {
            return bad("base_volume must be positive".into());
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative".into());
        }
        if !(self.link_radius_km >= self.spacing_km) {
            return bad("link_radius_km must reach the nearest neighbour".into());
        }
        if self.scenario_gains.len() != self.scenarios.len()
            || self.scenario_gains.iter().any(|g| g.len() != self.factors.len())
        {
            return bad("scenario_gains must be scenarios x factors".into());
        }
        for f in &self.factors {
            if f.pattern.len() != self.n_cells() || f.profile.len() != self.n_hours {
                return bad(format!(
                    "factor `{}` needs {} pattern and {} profile values",
                    f.name,
                    self.n_cells(),
                    self.n_hours
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding of the spec.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn build_grid(&self) -> Result<SpatialGrid> {
        let cells = (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| Cell {
                id: format!("r{r:02}c{c:02}"),
                x: c as f64 * self.spacing_km * 1000.0,
                y: r as f64 * self.spacing_km * 1000.0,
            })
            .collect();
        SpatialGrid::new(cells, CoordinateSystem::PlanarMeters)
    }

    /// Mean-zero planted potential for scenario index `sc` at hour `h`.
    pub fn planted_potential(&self, sc: usize, h: usize) -> Vec<f64> {
        let p = self.n_cells();
        let mut s = vec![0.0; p];
        for (f, factor) in self.factors.iter().enumerate() {
            let amp = self.scenario_gains[sc][f] * factor.profile[h];
            for (si, &v) in s.iter_mut().zip(&factor.pattern) {
                *si += amp * v;
            }
        }
        let mean = s.iter().sum::<f64>() / p as f64;
        s.iter_mut().for_each(|v| *v -= mean);
        s
    }
}

fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn normalize_pattern(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        v.iter_mut().for_each(|x| *x /= peak);
    }
    v
}

/// Centre-vs-periphery with a morning peak and evening dip, a hub-vs-terminal
/// pattern with a sharp 08:00 peak, and an east-west gradient peaking at midday.
pub fn default_factors(rows: usize, cols: usize, spacing_km: f64, n_hours: usize) -> Vec<Factor> {
    let extent = ((rows.max(cols)).saturating_sub(1) as f64 * spacing_km).max(spacing_km);
    let cx = (cols.saturating_sub(1)) as f64 * spacing_km / 2.0;
    let cy = (rows.saturating_sub(1)) as f64 * spacing_km / 2.0;
    let coords: Vec<(f64, f64)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c as f64 * spacing_km, r as f64 * spacing_km)))
        .collect();
    let d2 = |(x, y): (f64, f64), (ax, ay): (f64, f64)| (x - ax).powi(2) + (y - ay).powi(2);

    let centre = normalize_pattern(
        coords
            .iter()
            .map(|&p| gaussian(d2(p, (cx, cy)), 0.35 * extent))
            .collect(),
    );
    let hub = (cx + 0.1 * extent, cy);
    let arm = 0.3 * extent;
    let terminals = [(cx + arm, cy), (cx - arm, cy), (cx, cy + arm), (cx, cy - arm)];
    let hub_terminal = normalize_pattern(
        coords
            .iter()
            .map(|&p| {
                gaussian(d2(p, hub), 0.08 * extent)
                    - 0.5
                        * terminals
                            .iter()
                            .map(|&t| gaussian(d2(p, t), 0.06 * extent))
                            .sum::<f64>()
            })
            .collect(),
    );
    let east_west = normalize_pattern(coords.iter().map(|&(x, _)| x - cx).collect());

    let hours: Vec<f64> = (0..n_hours).map(|h| h as f64).collect();
    let bump = |t: f64, mu: f64, sd: f64| gaussian((t - mu).powi(2), sd);
    vec![
        Factor {
            name: "centre_periphery".into(),
            pattern: centre,
            profile: hours
                .iter()
                .map(|&t| 20.0 * (bump(t, 8.0, 1.5) - bump(t, 18.0, 2.0)))
                .collect(),
        },
        Factor {
            name: "hub_terminal".into(),
            pattern: hub_terminal,
            profile: hours
                .iter()
                .map(|&t| 8.0 * (bump(t, 8.0, 0.6) - 0.7 * bump(t, 17.5, 0.6)))
                .collect(),
        },
        Factor {
            name: "east_west".into(),
            pattern: east_west,
            profile: hours.iter().map(|&t| 5.0 * bump(t, 13.0, 3.0)).collect(),
        },
    ]
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub grid: Arc<SpatialGrid>,
    /// Scenarios outer, hours inner.
    pub snapshots: Vec<ODSnapshot>,
    pub ground_truth: Vec<(SliceLabel, Vec<f64>)>,
    pub clipped_edges: usize,
    pub directed_edges: usize,
}

/// Pairs `i < j` whose centroids lie within the link radius.
fn linked_pairs(spec: &SynthSpec) -> Vec<(usize, usize)> {
    let reach = spec.link_radius_km * (1.0 + 1e-9);
    let n = spec.n_cells();
    let pos = |k: usize| ((k % spec.cols) as f64, (k / spec.cols) as f64);
    let mut pairs = Vec::new();
    for i in 0..n {
        let (xi, yi) = pos(i);
        for j in (i + 1)..n {
            let (xj, yj) = pos(j);
            if (xi - xj).hypot(yi - yj) * spec.spacing_km <= reach {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let grid = Arc::new(spec.build_grid()?);
    let pairs = linked_pairs(spec);
    let labels: Vec<(usize, SliceLabel)> = spec
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(sc, name)| (0..spec.n_hours).map(move |h| (sc, SliceLabel::new(name.clone(), h as u8))))
        .collect();

    let slices: Vec<(ODSnapshot, Vec<f64>, usize)> = labels
        .par_iter()
        .enumerate()
        .map(|(t, (sc, label))| {
            let s_star = spec.planted_potential(*sc, label.hour as usize);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
            rng.set_stream(t as u64);
            let mut clipped = 0;
            let mut triples = Vec::with_capacity(2 * pairs.len());
            for &(i, j) in &pairs {
                let mut y = s_star[j] - s_star[i];
                if spec.noise_sd > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y += spec.noise_sd * z;
                }
                for (a, b, v) in [(i, j, spec.base_volume + y / 2.0), (j, i, spec.base_volume - y / 2.0)] {
                    if v > 0.0 {
                        triples.push((a, b, v));
                    } else {
                        clipped += 1;
                    }
                }
            }
            let snap = ODSnapshot::from_triples(Arc::clone(&grid), label.clone(), triples)?;
            Ok((snap, s_star, clipped))
        })
        .collect::<Result<_>>()?;

    let directed_edges = 2 * pairs.len() * slices.len();
    let clipped_edges: usize = slices.iter().map(|s| s.2).sum();
    if clipped_edges as f64 > MAX_CLIPPED_FRACTION * directed_edges as f64 {
        return Err(Error::VolumeUnderflow {
            clipped: clipped_edges,
            total: directed_edges,
        });
    }
    let mut snapshots = Vec::with_capacity(slices.len());
    let mut ground_truth = Vec::with_capacity(slices.len());
    for (snap, s_star, _) in slices {
        ground_truth.push((snap.label().clone(), s_star));
        snapshots.push(snap);
    }
    Ok(SynthOutput {
        grid,
        snapshots,
        ground_truth,
        clipped_edges,
        directed_edges,
    })
}
