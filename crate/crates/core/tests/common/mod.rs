//! Independent oracles and random fixtures shared by the integration suites.
//!
//! Nothing here calls into the solver or PCA paths it is used to check: the
//! Laplacian, divergence and covariance are rebuilt from raw edge lists and
//! matrices, and eigenpairs come from a cyclic Jacobi iteration.
#![allow(dead_code, clippy::needless_range_loop)]

use odhodge::hodge::{EdgeFlow, EdgeSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// descending order and the matching eigenvectors as columns `vecs[i][k]`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let total: f64 = m.iter().flatten().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&k| m[k][k]).collect();
    let vectors = (0..n).map(|i| order.iter().map(|&k| v[i][k]).collect()).collect();
    (values, vectors)
}

/// Weighted edge list `(i, j, w)` with `i < j`.
pub type Edges = Vec<(usize, usize, f64)>;

/// Random spanning tree plus extra edges with probability `extra_p`.
pub fn random_connected(rng: &mut impl Rng, n: usize, extra_p: f64, weighted: bool) -> Edges {
    let mut edges = std::collections::BTreeMap::new();
    let w = |rng: &mut dyn rand::RngCore| if weighted { rng.random_range(0.1..=1.0) } else { 1.0 };
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.insert((u, v), w(rng));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(extra_p) {
                edges.entry((i, j)).or_insert_with(|| w(rng));
            }
        }
    }
    edges.into_iter().map(|((i, j), w)| (i, j, w)).collect()
}

/// Erdos-Renyi graph with binary weights; guaranteed at least one edge.
pub fn random_binary(rng: &mut impl Rng, n: usize, p: f64) -> Edges {
    let mut edges: Edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, n - 1, 1.0));
    }
    edges
}

pub fn system(n: usize, edges: &Edges) -> EdgeSystem<f64> {
    EdgeSystem::from_weighted_edges(n, edges.iter().copied()).expect("valid edge list")
}

/// Dense skew matrix with uniform entries in [-scale, scale].
pub fn random_skew(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<Vec<f64>> {
    let mut y = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(-scale..=scale);
            y[i][j] = v;
            y[j][i] = -v;
        }
    }
    y
}

pub fn flow_from_dense(y: &[Vec<f64>]) -> EdgeFlow<f64> {
    EdgeFlow::from_fn(y.len(), |i, j| y[i][j])
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Connected components by repeated relaxation, independent of the library's BFS.
pub fn components(n: usize, edges: &Edges) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for &(i, j, _) in edges {
            let m = label[i].min(label[j]);
            if label[i] != m || label[j] != m {
                label[i] = m;
                label[j] = m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (v, &l) in label.iter().enumerate() {
        groups.entry(l).or_default().push(v);
    }
    groups.into_values().collect()
}

pub fn mean_zero_per_component(s: &mut [f64], comps: &[Vec<usize>]) {
    for c in comps {
        let mean = c.iter().map(|&v| s[v]).sum::<f64>() / c.len() as f64;
        for &v in c {
            s[v] -= mean;
        }
    }
}

/// Minimal-norm solution of `L s = -div_W(Y)` via an explicit dense
/// Moore-Penrose pseudoinverse built from Jacobi eigenpairs.
pub fn pseudoinverse_potential(n: usize, edges: &Edges, y: &[Vec<f64>]) -> Vec<f64> {
    let mut l = vec![vec![0.0; n]; n];
    let mut divw = vec![0.0; n];
    for &(i, j, w) in edges {
        l[i][i] += w;
        l[j][j] += w;
        l[i][j] -= w;
        l[j][i] -= w;
        divw[i] += w * y[i][j];
        divw[j] += w * y[j][i];
    }
    let (values, vectors) = jacobi_eigen(&l);
    let cutoff = 1e-9 * values[0].abs().max(1e-300);
    let mut pinv = vec![vec![0.0; n]; n];
    for (k, &lambda) in values.iter().enumerate() {
        if lambda > cutoff {
            for a in 0..n {
                for b in 0..n {
                    pinv[a][b] += vectors[a][k] * vectors[b][k] / lambda;
                }
            }
        }
    }
    (0..n)
        .map(|a| -(0..n).map(|b| pinv[a][b] * divw[b]).sum::<f64>())
        .collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Column-centers a dense matrix.
pub fn center(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let p = rows[0].len();
    let means: Vec<f64> = (0..p)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    rows.iter()
        .map(|r| r.iter().zip(&means).map(|(x, m)| x - m).collect())
        .collect()
}

/// Eigenpairs of `X^T X / (n - 1)` via Jacobi.
pub fn covariance_eigen(x: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let p = x[0].len();
    let q: Vec<Vec<f64>> = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| x.iter().map(|r| r[a] * r[b]).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    jacobi_eigen(&q)
}

/// Largest principal angle between the column spans of two orthonormal bases.
pub fn max_principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    // sin(theta_max) = || (I - A A^T) B ||_2
    let p = a[0].len();
    let residual: Vec<Vec<f64>> = b
        .iter()
        .map(|bv| {
            let mut r = bv.clone();
            for av in a {
                let c: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
                for i in 0..p {
                    r[i] -= c * av[i];
                }
            }
            r
        })
        .collect();
    let gram: Vec<Vec<f64>> = residual
        .iter()
        .map(|u| {
            residual
                .iter()
                .map(|v| u.iter().zip(v).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let (values, _) = jacobi_eigen(&gram);
    values[0].max(0.0).sqrt().min(1.0).asin()
}

/// Orthonormal basis of the span of `vectors` (Gram-Schmidt, twice).
pub fn orthonormal_basis(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            basis.push(w.iter().map(|x| x / norm).collect());
        }
    }
    basis
}
