//! Covariance PCA over stacked potential landscapes.
//!
//! Rows of the observation matrix are time slices, columns are grid cells.
//! The covariance is `Q = X^T X / (n - 1)`; when there are more cells than
//! slices the decomposition goes through the `n x n` Gram matrix instead and
//! maps its eigenvectors back to cell space.

use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{same_grid, SliceLabel, SpatialGrid};
use crate::hodge::PotentialField;
use crate::linalg::{self, Matrix, SymmetricEigen};
use crate::scalar::Scalar;

/// Column-centered `n x p` observation matrix.
#[derive(Debug, Clone)]
pub struct ObservationMatrix<T> {
    x: Matrix<T>,
    row_labels: Vec<SliceLabel>,
    column_means: Vec<T>,
    grid: Option<Arc<SpatialGrid>>,
}

impl<T: Scalar> ObservationMatrix<T> {
    /// Centers `rows` column-wise and records the means.
    pub fn from_rows(rows: Matrix<T>, row_labels: Vec<SliceLabel>) -> Result<Self> {
        check_shape(&rows, &row_labels)?;
        let (n, p) = (rows.nrows(), rows.ncols());
        let mut x = rows;
        let nt = T::of_usize(n);
        let mut column_means = Vec::with_capacity(p);
        for j in 0..p {
            let mean = (0..n).map(|i| x[(i, j)]).sum::<T>() / nt;
            for i in 0..n {
                x[(i, j)] = x[(i, j)] - mean;
            }
            column_means.push(mean);
        }
        Ok(Self {
            x,
            row_labels,
            column_means,
            grid: None,
        })
    }

    /// Wraps a matrix the caller asserts is already centered; [`fit`] verifies it.
    pub fn from_centered(x: Matrix<T>, row_labels: Vec<SliceLabel>) -> Result<Self> {
        check_shape(&x, &row_labels)?;
        let p = x.ncols();
        Ok(Self {
            x,
            row_labels,
            column_means: vec![T::zero(); p],
            grid: None,
        })
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row_labels(&self) -> &[SliceLabel] {
        &self.row_labels
    }

    pub fn column_means(&self) -> &[T] {
        &self.column_means
    }

    pub fn grid(&self) -> Option<&Arc<SpatialGrid>> {
        self.grid.as_ref()
    }
}

fn check_shape<T: Scalar>(x: &Matrix<T>, labels: &[SliceLabel]) -> Result<()> {
    if x.nrows() < 2 || x.ncols() < 1 {
        return Err(Error::DimensionMismatch(format!(
            "need at least 2 observations and 1 column, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let mut seen = HashSet::with_capacity(labels.len());
    for label in labels {
        if !seen.insert(label) {
            return Err(Error::DuplicateLabel {
                scenario: label.scenario.clone(),
                hour: label.hour,
            });
        }
    }
    Ok(())
}

/// Stacks labelled potentials row by row, in input order, and centers the columns.
pub fn stack_potentials<T: Scalar>(fields: &[(SliceLabel, PotentialField<T>)]) -> Result<ObservationMatrix<T>> {
    let Some((_, first)) = fields.first() else {
        return Err(Error::DimensionMismatch("no potential fields to stack".into()));
    };
    let p = first.len();
    let grid = fields.iter().find_map(|(_, f)| f.grid.clone());
    for (_, f) in fields {
        if f.len() != p {
            return Err(Error::MixedGrids);
        }
        if let (Some(a), Some(b)) = (&grid, &f.grid) {
            if !same_grid(a, b) {
                return Err(Error::MixedGrids);
            }
        }
    }
    let data = fields.iter().flat_map(|(_, f)| f.s.iter().copied()).collect();
    let rows = Matrix::from_vec(fields.len(), p, data);
    let labels = fields.iter().map(|(l, _)| l.clone()).collect();
    let mut obs = ObservationMatrix::from_rows(rows, labels)?;
    obs.grid = grid;
    Ok(obs)
}

#[derive(Debug, Clone)]
pub struct PcaModel<T> {
    /// All `p` eigenvalues of the covariance, descending and nonnegative.
    pub eigenvalues: Vec<T>,
    /// `p x m` matrix whose columns are unit eigenvectors, `m = min(n, p)`.
    /// Eigenvectors of the remaining (zero) eigenvalues are not materialized.
    pub eigenvectors: Matrix<T>,
    pub n_observations: usize,
}

impl<T: Scalar> PcaModel<T> {
    pub fn p(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Number of materialized eigenvectors.
    pub fn n_components(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<T> {
        self.eigenvectors.column(k)
    }

    pub fn explained_variance_ratio(&self) -> Vec<T> {
        let total: T = self.eigenvalues.iter().copied().sum();
        self.eigenvalues
            .iter()
            .map(|&l| if total > T::zero() { l / total } else { T::zero() })
            .collect()
    }
}

/// Eigendecomposition of the sample covariance of a centered observation matrix.
pub fn fit<T: Scalar>(obs: &ObservationMatrix<T>) -> Result<PcaModel<T>> {
    let x = obs.x();
    let (n, p) = (x.nrows(), x.ncols());
    let nt = T::of_usize(n);
    let rel = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    for j in 0..p {
        let (sum, inf) = (0..n).fold((T::zero(), T::zero()), |(s, m), i| {
            (s + x[(i, j)], m.max(x[(i, j)].abs()))
        });
        let mean = sum / nt;
        if mean.abs() > rel * inf {
            return Err(Error::NotCentered {
                column: j,
                mean: mean.to_f64_lossy(),
            });
        }
    }

    let scale = T::one() / T::of_usize(n - 1);
    let (mut eigenvalues, mut vectors) = if p <= n {
        let mut q = x.gram_cols();
        q.scale(scale);
        let eig = SymmetricEigen::new(&q);
        (eig.values, eig.vectors)
    } else {
        gram_route(x, scale)
    };
    for l in &mut eigenvalues {
        if *l < T::zero() {
            *l = T::zero();
        }
    }
    eigenvalues.resize(p, T::zero());
    orient_columns(&mut vectors);
    Ok(PcaModel {
        eigenvalues,
        eigenvectors: vectors,
        n_observations: n,
    })
}

fn gram_route<T: Scalar>(x: &Matrix<T>, scale: T) -> (Vec<T>, Matrix<T>) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut g = x.gram_rows();
    g.scale(scale);
    let eig = SymmetricEigen::new(&g);
    let top = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let cutoff = top * T::epsilon() * T::of_usize(n) * T::lit(16.0);

    let mut values = Vec::with_capacity(n);
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(n);
    for (k, &mu) in eig.values.iter().enumerate() {
        if mu > cutoff {
            // w = X^T u / sqrt((n-1) mu)
            let mut w = x.tr_matvec(&eig.vector(k));
            let norm = (mu / scale).sqrt();
            w.iter_mut().for_each(|v| *v = *v / norm);
            columns.push(w);
            values.push(mu);
        }
    }
    orthonormalize(&mut columns);
    let rank = columns.len();
    values.resize(n, T::zero());
    // complete to n orthonormal columns, each time with the coordinate
    // direction least explained by the columns so far
    while columns.len() < n.min(p) {
        let best = (0..p)
            .map(|j| {
                let mut e = vec![T::zero(); p];
                e[j] = T::one();
                orthogonal_complement(&columns, e)
            })
            .fold(None, |best: Option<(T, Vec<T>)>, cand| match (best, cand) {
                (Some(b), (norm, _)) if norm <= b.0 => Some(b),
                (_, c) => Some(c),
            });
        match best {
            Some((norm, v)) if norm > T::epsilon() => columns.push(v),
            _ => break,
        }
    }
    debug_assert!(columns.len() == n.min(p), "rank {rank} completion fell short");
    let mut vectors = Matrix::zeros(p, columns.len());
    for (k, c) in columns.iter().enumerate() {
        vectors.set_column(k, c);
    }
    (values, vectors)
}

/// Modified Gram-Schmidt, applied twice, keeping the column order.
fn orthonormalize<T: Scalar>(columns: &mut [Vec<T>]) {
    for k in 0..columns.len() {
        let (done, rest) = columns.split_at_mut(k);
        let v = &mut rest[0];
        for _ in 0..2 {
            for u in done.iter() {
                let c = linalg::dot(u, v);
                linalg::axpy(-c, u, v);
            }
        }
        let norm = linalg::norm2(v);
        v.iter_mut().for_each(|x| *x = *x / norm);
    }
}

/// Component of `v` orthogonal to `basis`, normalized, with its norm before normalizing.
fn orthogonal_complement<T: Scalar>(basis: &[Vec<T>], mut v: Vec<T>) -> (T, Vec<T>) {
    for _ in 0..2 {
        for u in basis {
            let c = linalg::dot(u, &v);
            linalg::axpy(-c, u, &mut v);
        }
    }
    let norm = linalg::norm2(&v);
    if norm > T::zero() {
        v.iter_mut().for_each(|x| *x = *x / norm);
    }
    (norm, v)
}

/// Flips each column so its largest-magnitude entry is positive; ties go to the lowest index.
fn orient_columns<T: Scalar>(vectors: &mut Matrix<T>) {
    for k in 0..vectors.ncols() {
        let mut best = 0;
        for i in 1..vectors.nrows() {
            if vectors[(i, k)].abs() > vectors[(best, k)].abs() {
                best = i;
            }
        }
        if vectors[(best, k)] < T::zero() {
            for i in 0..vectors.nrows() {
                vectors[(i, k)] = -vectors[(i, k)];
            }
        }
    }
}

/// `PC_k^(r) = x^(r) . w_k` for the first `l` components.
pub fn scores<T: Scalar>(model: &PcaModel<T>, obs: &ObservationMatrix<T>, l: usize) -> Result<Matrix<T>> {
    if obs.p() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} columns, observations {}",
            model.p(),
            obs.p()
        )));
    }
    check_components(model, l)?;
    if l == 0 {
        return Err(Error::DimensionMismatch("need at least one component".into()));
    }
    let mut out = Matrix::zeros(obs.n(), l);
    for r in 0..obs.n() {
        let row = obs.x().row(r);
        for k in 0..l {
            out[(r, k)] = (0..model.p()).fold(T::zero(), |acc, i| acc + row[i] * model.eigenvectors[(i, k)]);
        }
    }
    Ok(out)
}

fn check_components<T: Scalar>(model: &PcaModel<T>, l: usize) -> Result<()> {
    if l > model.n_components() {
        return Err(Error::DimensionMismatch(format!(
            "{l} components requested, model has {}",
            model.n_components()
        )));
    }
    Ok(())
}

/// `sum_{k < l} PC_k w_k`, the rank-`l` approximation of a centered row.
pub fn reconstruct<T: Scalar>(model: &PcaModel<T>, row_scores: &[T], l: usize) -> Result<Vec<T>> {
    check_components(model, l)?;
    if row_scores.len() < l {
        return Err(Error::DimensionMismatch(format!(
            "{} scores supplied for {l} components",
            row_scores.len()
        )));
    }
    let mut out = vec![T::zero(); model.p()];
    for (k, &score) in row_scores.iter().take(l).enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            *o = *o + score * model.eigenvectors[(i, k)];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScreeRow<T> {
    pub k: usize,
    pub eigenvalue: T,
    pub ratio: T,
    pub cumulative: T,
}

pub fn scree<T: Scalar>(model: &PcaModel<T>) -> Vec<ScreeRow<T>> {
    let ratios = model.explained_variance_ratio();
    let mut cumulative = T::zero();
    model
        .eigenvalues
        .iter()
        .zip(ratios)
        .enumerate()
        .map(|(k, (&eigenvalue, ratio))| {
            cumulative = cumulative + ratio;
            ScreeRow {
                k: k + 1,
                eigenvalue,
                ratio,
                cumulative,
            }
        })
        .collect()
}
