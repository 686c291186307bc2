//! Distance-threshold weighting: fit the trip-distance quantile `theta` and
//! turn it into binary pair weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{same_grid, DistanceMatrix, ODSnapshot};
use crate::scalar::Scalar;

pub const DEFAULT_PERCENTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// `W_ij = 1` iff `d_ij <= theta`.
    #[default]
    IncludeBelowTheta,
    /// `W_ij = 1` iff `d_ij > theta`.
    IncludeAboveTheta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRule {
    pub percentile: f64,
    pub theta_km: f64,
    pub mode: WeightingMode,
    /// Total trip volume entering the distribution.
    pub n_trips: f64,
    /// Directed pairs with positive volume.
    pub n_pairs: usize,
}

impl ThresholdRule {
    pub fn with_mode(mut self, mode: WeightingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn weight(&self, d_km: f64) -> f64 {
        let below = d_km <= self.theta_km;
        match self.mode {
            WeightingMode::IncludeBelowTheta => f64::from(u8::from(below)),
            WeightingMode::IncludeAboveTheta => f64::from(u8::from(!below)),
        }
    }
}

/// Smallest distance `theta` at which the trip-weighted empirical CDF of pair
/// distances reaches `percentile`. Intra-cell trips are ignored.
pub fn fit_threshold(snapshots: &[ODSnapshot], d: &DistanceMatrix, percentile: f64) -> Result<ThresholdRule> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "percentile must lie in (0, 1], got {percentile}"
        )));
    }
    if snapshots.iter().any(|s| !same_grid(s.grid(), d.grid())) {
        return Err(Error::MixedGrids);
    }
    let mut trips: Vec<(f64, f64)> = snapshots
        .iter()
        .flat_map(|s| s.entries().iter())
        .filter(|&&(i, j, c)| i != j && c > 0.0)
        .map(|&(i, j, c)| (d.get(i, j), c))
        .collect();
    if trips.is_empty() {
        return Err(Error::NoTrips);
    }
    let n_pairs = trips.len();
    trips.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let total: f64 = trips.iter().map(|t| t.1).sum();
    // guards the comparison against summation rounding, not a modelling slack
    let needed = percentile * total * (1.0 - 1e-12);

    let mut cumulative = 0.0;
    let mut theta = trips[trips.len() - 1].0;
    let mut k = 0;
    while k < trips.len() {
        let dist = trips[k].0;
        while k < trips.len() && trips[k].0 == dist {
            cumulative += trips[k].1;
            k += 1;
        }
        if cumulative >= needed {
            theta = dist;
            break;
        }
    }
    Ok(ThresholdRule {
        percentile,
        theta_km: theta,
        mode: WeightingMode::default(),
        n_trips: total,
        n_pairs,
    })
}

/// Weighting function for [`crate::hodge::build_edge_system`].
pub fn binary_weights<T: Scalar>(rule: &ThresholdRule) -> impl Fn(usize, usize, f64) -> T + '_ {
    move |_, _, d_km| T::lit(rule.weight(d_km))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub scenario: String,
    pub percentile: f64,
    pub theta_km: f64,
    pub n_trips: f64,
    pub n_pairs: usize,
}

impl ThresholdReport {
    pub fn new(scenario: impl Into<String>, rule: &ThresholdRule) -> Self {
        Self {
            scenario: scenario.into(),
            percentile: rule.percentile,
            theta_km: rule.theta_km,
            n_trips: rule.n_trips,
            n_pairs: rule.n_pairs,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::{pairwise_distances, Cell, CoordinateSystem, SliceLabel, SpatialGrid};

    /// Cells on a line at the given kilometre offsets from cell 0.
    fn spoke(offsets_km: &[f64]) -> DistanceMatrix {
        let mut cells = vec![Cell {
            id: "o".into(),
            x: 0.0,
            y: 0.0,
        }];
        cells.extend(offsets_km.iter().enumerate().map(|(k, &off)| Cell {
            id: format!("c{k}"),
            x: off * 1000.0,
            y: 0.0,
        }));
        let g = Arc::new(SpatialGrid::new(cells, CoordinateSystem::PlanarMeters).unwrap());
        pairwise_distances(&g).unwrap()
    }

    fn snapshot(d: &DistanceMatrix, trips: &[(usize, usize, f64)]) -> ODSnapshot {
        ODSnapshot::from_triples(Arc::clone(d.grid()), SliceLabel::new("s", 0), trips.iter().copied()).unwrap()
    }

    #[test]
    fn single_distance() {
        let d = spoke(&[10.0]);
        let s = snapshot(&d, &[(0, 1, 40.0), (1, 0, 3.0), (0, 0, 1000.0)]);
        let rule = fit_threshold(&[s], &d, 0.99).unwrap();
        assert_eq!(rule.theta_km, 10.0);
        assert_eq!(rule.n_pairs, 2);
        assert_eq!(rule.n_trips, 43.0);
    }

    #[test]
    fn long_tail_trip_is_excluded() {
        let d = spoke(&[1.0, 100.0]);
        let s = snapshot(&d, &[(0, 1, 99.0), (0, 2, 1.0)]);
        assert_eq!(fit_threshold(&[s], &d, 0.99).unwrap().theta_km, 1.0);
    }

    #[test]
    fn hundred_equal_pairs() {
        let offsets: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = spoke(&offsets);
        let trips: Vec<_> = (1..=100).map(|k| (0, k, 1.0)).collect();
        let s = snapshot(&d, &trips);
        assert_eq!(fit_threshold(&[s], &d, 0.99).unwrap().theta_km, 99.0);
    }

    #[test]
    fn no_trips_is_an_error() {
        let d = spoke(&[1.0]);
        let s = snapshot(&d, &[(1, 1, 5.0)]);
        assert!(matches!(fit_threshold(&[s], &d, 0.99), Err(Error::NoTrips)));
        assert!(matches!(fit_threshold(&[], &d, 0.99), Err(Error::NoTrips)));
        assert!(matches!(fit_threshold(&[], &d, 0.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn weights_by_mode() {
        let rule = ThresholdRule {
            percentile: 0.99,
            theta_km: 5.0,
            mode: WeightingMode::IncludeBelowTheta,
            n_trips: 1.0,
            n_pairs: 1,
        };
        assert_eq!(rule.weight(3.0), 1.0);
        assert_eq!(rule.weight(7.0), 0.0);
        assert_eq!(rule.weight(5.0), 1.0);
        let above = rule.clone().with_mode(WeightingMode::IncludeAboveTheta);
        assert_eq!(above.weight(3.0), 0.0);
        assert_eq!(above.weight(7.0), 1.0);
        let w = binary_weights::<f32>(&rule);
        assert_eq!(w(0, 1, 4.0), 1.0f32);
    }
}
