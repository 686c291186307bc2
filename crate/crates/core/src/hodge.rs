//! Combinatorial gradient, curl and divergence on a weighted region graph, and
//! the weighted least-squares potential: the minimal-norm solution of
//! `L s = -div_W(Y)` where `L` is the weighted graph Laplacian.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DistanceMatrix, ODSnapshot, SpatialGrid};
use crate::linalg::{self, Matrix, SymmetricEigen};
use crate::scalar::Scalar;

/// Skew-symmetric edge flow. Only entries with `i < j` are stored and
/// `Y[j][i]` is read as `-Y[i][j]`, so skew-symmetry holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlow<T> {
    n: usize,
    upper: Vec<(usize, usize, T)>,
}

impl<T: Scalar> EdgeFlow<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, upper: Vec::new() }
    }

    /// Builds a flow from `(i, j, Y_ij)` triples. A triple with `i > j` sets
    /// `Y_ji = -value`; diagonal entries are ignored; repeated pairs are summed.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut map: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (i, j, v) in entries {
            assert!(i < n && j < n, "pair ({i},{j}) outside 0..{n}");
            if i == j {
                continue;
            }
            let (key, val) = if i < j { ((i, j), v) } else { ((j, i), -v) };
            let slot = map.entry(key).or_insert(T::zero());
            *slot = *slot + val;
        }
        Self {
            n,
            upper: map.into_iter().map(|((i, j), v)| (i, j, v)).collect(),
        }
    }

    /// Flow on every pair `i < j` from a generator.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                upper.push((i, j, f(i, j)));
            }
        }
        Self { n, upper }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored upper-triangle entries, sorted by `(i, j)`.
    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return T::zero();
        }
        let (key, sign) = if i < j { ((i, j), T::one()) } else { ((j, i), -T::one()) };
        self.upper
            .binary_search_by_key(&key, |&(a, b, _)| (a, b))
            .map_or(T::zero(), |k| sign * self.upper[k].2)
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.upper {
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
        m
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_entries(
            self.n,
            self.upper
                .iter()
                .map(|&(i, j, v)| (i, j, alpha * v))
                .chain(other.upper.iter().map(|&(i, j, v)| (i, j, beta * v))),
        )
    }

    /// Values of `Y_ij` aligned with `sys.edges()`.
    pub fn values_on(&self, sys: &EdgeSystem<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(sys.edges.len());
        let mut k = 0;
        for &(i, j, _) in &sys.edges {
            while k < self.upper.len() && (self.upper[k].0, self.upper[k].1) < (i, j) {
                k += 1;
            }
            match self.upper.get(k) {
                Some(&(a, b, v)) if a == i && b == j => out.push(v),
                _ => out.push(T::zero()),
            }
        }
        out
    }

    /// Keeps only pairs in `E`.
    pub fn restricted_to(&self, sys: &EdgeSystem<T>) -> Self {
        let values = self.values_on(sys);
        Self {
            n: self.n,
            upper: sys.edges.iter().zip(values).map(|(&(i, j, _), v)| (i, j, v)).collect(),
        }
    }
}

/// `Y = M - M^T` for one OD slice.
pub fn net_flow<T: Scalar>(snapshot: &ODSnapshot) -> EdgeFlow<T> {
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for &(i, j, c) in snapshot.entries() {
        if i < j {
            pairs.entry((i, j)).or_default().0 = c;
        } else if j < i {
            pairs.entry((j, i)).or_default().1 = c;
        }
    }
    EdgeFlow {
        n: snapshot.n(),
        upper: pairs
            .into_iter()
            .map(|((i, j), (mij, mji))| (i, j, T::lit(mij - mji)))
            .collect(),
    }
}

/// Edge set `E` with symmetric weights and the induced graph Laplacian.
#[derive(Debug, Clone)]
pub struct EdgeSystem<T> {
    n: usize,
    grid: Option<Arc<SpatialGrid>>,
    edges: Vec<(usize, usize, T)>,
    offsets: Vec<usize>,
    neighbors: Vec<(usize, T)>,
    degree: Vec<T>,
    component_of: Vec<usize>,
    components: Vec<Vec<usize>>,
}

impl<T: Scalar> EdgeSystem<T> {
    /// Builds `E` from `(i, j, W_ij)`; zero weights are dropped, weights outside
    /// `[0, 1]` and self-loops are rejected.
    pub fn from_weighted_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!("edge ({i},{j}) outside 0..{n}")));
            }
            if !(w >= T::zero() && w <= T::one()) || (i == j && w != T::zero()) {
                return Err(Error::InvalidWeight {
                    i,
                    j,
                    weight: w.to_f64_lossy(),
                });
            }
            if w > T::zero() {
                map.insert((i.min(j), i.max(j)), w);
            }
        }
        if map.is_empty() {
            return Err(Error::EmptyEdgeSet);
        }
        let edges: Vec<_> = map.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        Ok(Self::assemble(n, None, edges))
    }

    fn assemble(n: usize, grid: Option<Arc<SpatialGrid>>, edges: Vec<(usize, usize, T)>) -> Self {
        let mut adj: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, w) in &edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * edges.len());
        let mut degree = Vec::with_capacity(n);
        offsets.push(0);
        for mut row in adj {
            row.sort_by_key(|&(j, _)| j);
            degree.push(row.iter().fold(T::zero(), |acc, &(_, w)| acc + w));
            neighbors.extend(row);
            offsets.push(neighbors.len());
        }

        // BFS labelling in vertex order gives a deterministic component numbering
        let mut component_of = vec![usize::MAX; n];
        let mut components = Vec::new();
        for start in 0..n {
            if component_of[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            component_of[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(u, _) in &neighbors[offsets[v]..offsets[v + 1]] {
                    if component_of[u] == usize::MAX {
                        component_of[u] = id;
                        members.push(u);
                        queue.push_back(u);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }

        Self {
            n,
            grid,
            edges,
            offsets,
            neighbors,
            degree,
            component_of,
            components,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Option<&Arc<SpatialGrid>> {
        self.grid.as_ref()
    }

    /// Edges `(i, j, W_ij)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, T)] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        let row = &self.neighbors[self.offsets[i]..self.offsets[i + 1]];
        row.binary_search_by_key(&j, |&(u, _)| u)
            .map_or(T::zero(), |k| row[k].1)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.weight(i, j) > T::zero()
    }

    pub fn degree(&self) -> &[T] {
        &self.degree
    }

    /// Connected components of `(V, E)`, each sorted, numbered by smallest vertex.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, v: usize) -> usize {
        self.component_of[v]
    }

    /// `out = L x`
    pub fn apply_laplacian(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.degree[i] * x[i];
            for &(j, w) in &self.neighbors[self.offsets[i]..self.offsets[i + 1]] {
                acc = acc - w * x[j];
            }
            *o = acc;
        }
    }

    pub fn laplacian_dense(&self) -> Matrix<T> {
        let mut l = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            l[(i, i)] = self.degree[i];
        }
        for &(i, j, w) in &self.edges {
            l[(i, j)] = -w;
            l[(j, i)] = -w;
        }
        l
    }

    /// Subtracts the per-component mean in place.
    pub fn project_mean_zero(&self, x: &mut [T]) {
        for comp in &self.components {
            let mean = comp.iter().map(|&v| x[v]).sum::<T>() / T::of_usize(comp.len());
            for &v in comp {
                x[v] = x[v] - mean;
            }
        }
    }

    pub fn component_means(&self, x: &[T]) -> Vec<T> {
        self.components
            .iter()
            .map(|comp| comp.iter().map(|&v| x[v]).sum::<T>() / T::of_usize(comp.len()))
            .collect()
    }
}

/// Builds `E = {{i,j} : W_ij > 0}` from a weighting rule evaluated on `(i, j, d_ij)`
/// for `i < j`.
pub fn build_edge_system<T: Scalar>(
    d: &DistanceMatrix,
    rule: impl Fn(usize, usize, f64) -> T,
) -> Result<EdgeSystem<T>> {
    let n = d.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = rule(i, j, d.get(i, j));
            if !(w >= T::zero() && w <= T::one()) {
                return Err(Error::InvalidWeight {
                    i,
                    j,
                    weight: w.to_f64_lossy(),
                });
            }
            if w > T::zero() {
                edges.push((i, j, w));
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    Ok(EdgeSystem::assemble(n, Some(Arc::clone(d.grid())), edges))
}

/// `(grad s)(i, j) = s_j - s_i` on every edge of `E`.
pub fn grad<T: Scalar>(s: &[T], sys: &EdgeSystem<T>) -> EdgeFlow<T> {
    assert_eq!(s.len(), sys.n, "potential length does not match the edge system");
    EdgeFlow {
        n: sys.n,
        upper: sys.edges.iter().map(|&(i, j, _)| (i, j, s[j] - s[i])).collect(),
    }
}

/// `Y_ij + Y_jk + Y_ki` on a triangle of `E`.
pub fn curl<T: Scalar>(y: &EdgeFlow<T>, sys: &EdgeSystem<T>, (i, j, k): (usize, usize, usize)) -> Result<T> {
    for (a, b) in [(i, j), (j, k), (k, i)] {
        if !sys.contains(a, b) {
            return Err(Error::EdgeNotInSystem(a.min(b), a.max(b)));
        }
    }
    Ok(y.get(i, j) + y.get(j, k) + y.get(k, i))
}

/// Unweighted divergence: `div(Y)_i = sum_{j : {i,j} in E} Y_ij`.
pub fn div<T: Scalar>(y: &EdgeFlow<T>, sys: &EdgeSystem<T>) -> Vec<T> {
    accumulate_divergence(y, sys, false)
}

/// Weighted divergence `div_W(Y)_i = sum_j W_ij Y_ij`, the adjoint of `grad`
/// under the weighted inner product.
pub fn div_weighted<T: Scalar>(y: &EdgeFlow<T>, sys: &EdgeSystem<T>) -> Vec<T> {
    accumulate_divergence(y, sys, true)
}

fn accumulate_divergence<T: Scalar>(y: &EdgeFlow<T>, sys: &EdgeSystem<T>, weighted: bool) -> Vec<T> {
    assert_eq!(y.n, sys.n, "flow and edge system sizes differ");
    let mut out = vec![T::zero(); sys.n];
    for (&(i, j, w), v) in sys.edges.iter().zip(y.values_on(sys)) {
        let v = if weighted { w * v } else { v };
        out[i] = out[i] + v;
        out[j] = out[j] - v;
    }
    out
}

/// `<X, Y>_W = sum_{{i,j} in E} W_ij X_ij Y_ij`
pub fn weighted_inner<T: Scalar>(x: &EdgeFlow<T>, y: &EdgeFlow<T>, sys: &EdgeSystem<T>) -> T {
    let xs = x.values_on(sys);
    let ys = y.values_on(sys);
    sys.edges
        .iter()
        .zip(xs.iter().zip(&ys))
        .fold(T::zero(), |acc, (&(_, _, w), (&a, &b))| acc + w * a * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Full symmetric eigendecomposition of the Laplacian; pseudoinverse applied spectrally.
    DenseEigen,
    /// Conjugate gradient with per-component mean-zero projection.
    DeflatedCg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub method: SolverMethod,
    pub rel_tol: T,
    /// Iteration cap for conjugate gradient; `None` means `10 * N`.
    pub max_iter: Option<usize>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            method: SolverMethod::DeflatedCg,
            rel_tol: T::lit(1e-10),
            max_iter: None,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn dense() -> Self {
        Self {
            method: SolverMethod::DenseEigen,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero()) {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub method: SolverMethod,
    pub iterations: usize,
    pub residual_norm: f64,
    pub components: usize,
}

/// Potential on the grid, mean-zero on each connected component of `E`.
#[derive(Debug, Clone)]
pub struct PotentialField<T> {
    pub grid: Option<Arc<SpatialGrid>>,
    pub s: Vec<T>,
    /// `||L s + div_W(Y)|| / ||div_W(Y)||`, 0 when the divergence vanishes.
    pub residual_norm: T,
    pub component_means: Vec<T>,
    pub diagnostics: SolveDiagnostics,
}

impl<T: Scalar> PotentialField<T> {
    /// A field from precomputed values, e.g. read back from disk.
    pub fn from_values(grid: Option<Arc<SpatialGrid>>, s: Vec<T>) -> Self {
        Self {
            grid,
            s,
            residual_norm: T::zero(),
            component_means: Vec::new(),
            diagnostics: SolveDiagnostics {
                method: SolverMethod::DeflatedCg,
                iterations: 0,
                residual_norm: 0.0,
                components: 0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Minimal-norm least-squares potential for `Y` on `sys`.
pub fn solve_potential<T: Scalar>(
    y: &EdgeFlow<T>,
    sys: &EdgeSystem<T>,
    cfg: &SolverConfig<T>,
) -> Result<PotentialField<T>> {
    cfg.validate()?;
    if y.n != sys.n {
        return Err(Error::DimensionMismatch(format!(
            "flow on {} vertices, edge system on {}",
            y.n, sys.n
        )));
    }
    if sys.edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let divergence = div_weighted(y, sys);
    let div_norm = linalg::norm2(&divergence);
    let mut rhs: Vec<T> = divergence.iter().map(|&v| -v).collect();
    sys.project_mean_zero(&mut rhs);

    let (mut s, iterations) = if div_norm == T::zero() {
        (vec![T::zero(); sys.n], 0)
    } else {
        match cfg.method {
            SolverMethod::DeflatedCg => {
                let max_iter = cfg.max_iter.unwrap_or(10 * sys.n);
                deflated_cg(sys, &rhs, cfg.rel_tol, max_iter)?
            }
            SolverMethod::DenseEigen => (dense_pseudoinverse_solve(sys, &rhs), 1),
        }
    };
    sys.project_mean_zero(&mut s);

    let residual_norm = if div_norm == T::zero() {
        T::zero()
    } else {
        let mut ls = vec![T::zero(); sys.n];
        sys.apply_laplacian(&s, &mut ls);
        let r: Vec<T> = ls.iter().zip(&divergence).map(|(&a, &b)| a + b).collect();
        linalg::norm2(&r) / div_norm
    };
    let component_means = sys.component_means(&s);
    Ok(PotentialField {
        grid: sys.grid.clone(),
        s,
        residual_norm,
        component_means,
        diagnostics: SolveDiagnostics {
            method: cfg.method,
            iterations,
            residual_norm: residual_norm.to_f64_lossy(),
            components: sys.components.len(),
        },
    })
}

fn deflated_cg<T: Scalar>(sys: &EdgeSystem<T>, rhs: &[T], rel_tol: T, max_iter: usize) -> Result<(Vec<T>, usize)> {
    let n = sys.n;
    let target = rel_tol * linalg::norm2(rhs);
    let mut x = vec![T::zero(); n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let mut rs = linalg::dot(&r, &r);
    if rs.sqrt() <= target {
        return Ok((x, 0));
    }
    for iter in 1..=max_iter {
        sys.apply_laplacian(&p, &mut ap);
        let curvature = linalg::dot(&p, &ap);
        if !(curvature > T::zero()) {
            break;
        }
        let alpha = rs / curvature;
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &ap, &mut r);
        sys.project_mean_zero(&mut r);
        let mut rs_new = linalg::dot(&r, &r);
        if rs_new.sqrt() <= target {
            // the recurrence drifts from the true residual; confirm before stopping
            sys.apply_laplacian(&x, &mut ap);
            for ((ri, &bi), &axi) in r.iter_mut().zip(rhs).zip(&ap) {
                *ri = bi - axi;
            }
            sys.project_mean_zero(&mut r);
            rs_new = linalg::dot(&r, &r);
            if rs_new.sqrt() <= target {
                return Ok((x, iter));
            }
            p.copy_from_slice(&r);
            rs = rs_new;
            continue;
        }
        let beta = rs_new / rs;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: (rs.sqrt() / linalg::norm2(rhs)).to_f64_lossy(),
        rel_tol: rel_tol.to_f64_lossy(),
    })
}

fn dense_pseudoinverse_solve<T: Scalar>(sys: &EdgeSystem<T>, rhs: &[T]) -> Vec<T> {
    let eig = SymmetricEigen::new(&sys.laplacian_dense());
    let lambda_max = eig.values.first().copied().unwrap_or(T::zero());
    let cutoff = T::epsilon() * T::of_usize(sys.n) * lambda_max;
    let mut s = vec![T::zero(); sys.n];
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda <= cutoff {
            continue;
        }
        let u = eig.vector(k);
        let coeff = linalg::dot(&u, rhs) / lambda;
        linalg::axpy(coeff, &u, &mut s);
    }
    s
}

/// Gradient part `G = grad s` and residual `R = Y - G`, both on `E`.
#[derive(Debug, Clone)]
pub struct GradientSplit<T> {
    pub potential: PotentialField<T>,
    pub gradient: EdgeFlow<T>,
    pub residual: EdgeFlow<T>,
}

/// Weighted l2 projection of `Y` onto the image of `grad`.
pub fn gradient_projection<T: Scalar>(
    y: &EdgeFlow<T>,
    sys: &EdgeSystem<T>,
    cfg: &SolverConfig<T>,
) -> Result<GradientSplit<T>> {
    let potential = solve_potential(y, sys, cfg)?;
    let gradient = grad(&potential.s, sys);
    let on_e = y.values_on(sys);
    let residual = EdgeFlow {
        n: sys.n,
        upper: gradient
            .upper
            .iter()
            .zip(on_e)
            .map(|(&(i, j, g), v)| (i, j, v - g))
            .collect(),
    };
    Ok(GradientSplit {
        potential,
        gradient,
        residual,
    })
}
