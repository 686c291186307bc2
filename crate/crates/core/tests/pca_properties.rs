mod common;

use common::*;
use odhodge::hodge::PotentialField;
use odhodge::linalg::Matrix;
use odhodge::pca::{self, stack_potentials, ObservationMatrix};
use odhodge::{Error, SliceLabel};
use proptest::prelude::*;

fn labels(n: usize) -> Vec<SliceLabel> {
    (0..n).map(|r| SliceLabel::new("t", r as u8)).collect()
}

fn random_obs(seed: u64, n: usize, p: usize) -> ObservationMatrix<f64> {
    let mut rng = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_vector(&mut rng, p, 2.0)).collect();
    ObservationMatrix::from_rows(Matrix::from_rows(&rows), labels(n)).unwrap()
}

/// Random orthogonal matrix from Gram-Schmidt on a random square matrix.
fn random_rotation(seed: u64, p: usize) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    loop {
        let cols: Vec<Vec<f64>> = (0..p).map(|_| random_vector(&mut rng, p, 1.0)).collect();
        let basis = orthonormal_basis(&cols);
        if basis.len() == p {
            return basis;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvectors_are_orthonormal(seed in any::<u64>(), n in 2usize..20, p in 1usize..30) {
        let model = pca::fit(&random_obs(seed, n, p)).unwrap();
        let m = model.n_components();
        for a in 0..m {
            for b in 0..m {
                let dot: f64 = (0..p).map(|i| model.eigenvectors[(i, a)] * model.eigenvectors[(i, b)]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() <= 1e-10, "w{a}.w{b} = {dot}");
            }
        }
        let lambda1 = model.eigenvalues[0];
        for pair in model.eigenvalues.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        for (k, &l) in model.eigenvalues.iter().enumerate() {
            prop_assert!(l >= 0.0);
            if k >= (n - 1).min(p) {
                prop_assert!(l <= 1e-10 * lambda1.max(1e-300));
            }
        }
    }

    #[test]
    fn trace_and_score_covariance(seed in any::<u64>(), n in 2usize..15, p in 1usize..25) {
        let obs = random_obs(seed, n, p);
        let model = pca::fit(&obs).unwrap();
        let frob = obs.x().frobenius_sq() / (n - 1) as f64;
        let sum: f64 = model.eigenvalues.iter().sum();
        prop_assert!((sum - frob).abs() <= 1e-10 * frob);

        let l = model.n_components();
        let pcs = pca::scores(&model, &obs, l).unwrap();
        let lambda1 = model.eigenvalues[0];
        for a in 0..l {
            for b in 0..l {
                let cov: f64 = (0..n).map(|r| pcs[(r, a)] * pcs[(r, b)]).sum::<f64>() / (n - 1) as f64;
                let want = if a == b { model.eigenvalues[a] } else { 0.0 };
                prop_assert!((cov - want).abs() <= 1e-9 * lambda1, "cov[{a}][{b}] = {cov}");
            }
        }
    }

    #[test]
    fn rotation_covariance(seed in any::<u64>(), n in 3usize..10, p in 2usize..7) {
        let obs = random_obs(seed, n, p);
        let r = random_rotation(seed ^ 0x5eed, p);
        let x = obs.x();
        let rotated = Matrix::from_fn(n, p, |i, j| (0..p).map(|k| x[(i, k)] * r[j][k]).sum());
        let base = pca::fit(&obs).unwrap();
        let turned = pca::fit(&ObservationMatrix::from_centered(rotated, labels(n)).unwrap()).unwrap();
        let lambda1 = base.eigenvalues[0];
        for (a, b) in base.eigenvalues.iter().zip(&turned.eigenvalues) {
            prop_assert!((a - b).abs() <= 1e-9 * lambda1);
        }
        // row k of R is the k-th basis vector; X R^T maps w to R w
        let rank = (n - 1).min(p);
        for k in 0..rank {
            let separated = (k == 0 || base.eigenvalues[k - 1] - base.eigenvalues[k] > 1e-4 * lambda1)
                && base.eigenvalues[k] - base.eigenvalues.get(k + 1).copied().unwrap_or(0.0) > 1e-4 * lambda1;
            if !separated {
                continue;
            }
            let w = base.eigenvector(k);
            let rw: Vec<f64> = (0..p).map(|j| (0..p).map(|i| r[j][i] * w[i]).sum()).collect();
            let v = turned.eigenvector(k);
            let cos: f64 = rw.iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!((cos.abs() - 1.0).abs() <= 1e-9, "component {k}: |cos| = {}", cos.abs());
        }
    }

    #[test]
    fn fit_is_deterministic(seed in any::<u64>(), n in 2usize..12, p in 1usize..40) {
        let obs = random_obs(seed, n, p);
        let a = pca::fit(&obs).unwrap();
        let b = pca::fit(&obs).unwrap();
        prop_assert_eq!(a.eigenvectors.as_slice(), b.eigenvectors.as_slice());
        prop_assert_eq!(&a.eigenvalues, &b.eigenvalues);
        for k in 0..a.n_components() {
            let w = a.eigenvector(k);
            let peak = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let first = w.iter().position(|x| x.abs() == peak).unwrap();
            prop_assert!(w[first] > 0.0);
        }
    }

    #[test]
    fn reconstruction_error_shrinks_with_l(seed in any::<u64>(), n in 3usize..10, p in 2usize..10) {
        let obs = random_obs(seed, n, p);
        let model = pca::fit(&obs).unwrap();
        let m = model.n_components();
        let pcs = pca::scores(&model, &obs, m).unwrap();
        let mut previous = f64::INFINITY;
        for l in 0..=m {
            let err: f64 = (0..n)
                .map(|r| {
                    let back = pca::reconstruct(&model, pcs.row(r), l).unwrap();
                    back.iter().zip(obs.x().row(r)).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum();
            prop_assert!(err <= previous * (1.0 + 1e-12) + 1e-20);
            previous = err;
        }
    }
}

#[test]
fn eckart_young_residual() {
    // rank-2 centered 4x3 matrix built from two orthogonal directions
    let x = [[2.0, 1.0, 0.0], [-2.0, 1.0, 0.0], [1.0, -1.0, 0.0], [-1.0, -1.0, 0.0]];
    let rows: Vec<Vec<f64>> = x.iter().map(|r| r.to_vec()).collect();
    let obs = ObservationMatrix::from_centered(Matrix::from_rows(&rows), labels(4)).unwrap();
    let model = pca::fit(&obs).unwrap();
    // X^T X = diag(10, 4, 0); Q = diag(10/3, 4/3, 0)
    assert!((model.eigenvalues[0] - 10.0 / 3.0).abs() <= 1e-12);
    assert!((model.eigenvalues[1] - 4.0 / 3.0).abs() <= 1e-12);
    assert!(model.eigenvalues[2].abs() <= 1e-12);
    let pcs = pca::scores(&model, &obs, 2).unwrap();
    let residual: f64 = (0..4)
        .map(|r| {
            let back = pca::reconstruct(&model, pcs.row(r), 1).unwrap();
            back.iter()
                .zip(obs.x().row(r))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum();
    let want = 3.0 * model.eigenvalues[1];
    assert!((residual - want).abs() <= 1e-8 * want, "{residual} vs {want}");
}

#[test]
fn gram_route_matches_covariance_route() {
    // p > n takes the n x n route; compare against a Jacobi solve on the p x p covariance
    let obs = random_obs(99, 5, 9);
    let model = pca::fit(&obs).unwrap();
    let x: Vec<Vec<f64>> = (0..5).map(|r| obs.x().row(r).to_vec()).collect();
    let (values, _) = covariance_eigen(&x);
    for k in 0..9 {
        assert!((model.eigenvalues[k] - values[k].max(0.0)).abs() <= 1e-10 * values[0]);
    }
    assert_eq!(model.n_components(), 5);
}

#[test]
fn identical_potentials_give_zero_spectrum() {
    let s = vec![0.5, -1.0, 0.5];
    let fields: Vec<_> = (0..4)
        .map(|h| (SliceLabel::new("wd", h), PotentialField::from_values(None, s.clone())))
        .collect();
    let obs = stack_potentials(&fields).unwrap();
    assert!(obs.x().as_slice().iter().all(|&v| v == 0.0));
    let model = pca::fit(&obs).unwrap();
    assert!(model.eigenvalues.iter().all(|&l| l == 0.0));
    assert!(model.explained_variance_ratio().iter().all(|&r| r == 0.0));
}

#[test]
fn stacking_rejects_mixed_lengths_and_duplicates() {
    let a = (
        SliceLabel::new("wd", 0),
        PotentialField::from_values(None, vec![1.0, 2.0]),
    );
    let b = (
        SliceLabel::new("wd", 1),
        PotentialField::from_values(None, vec![1.0, 2.0, 3.0]),
    );
    assert!(matches!(stack_potentials(&[a.clone(), b]), Err(Error::MixedGrids)));
    assert!(matches!(
        stack_potentials(&[a.clone(), a]),
        Err(Error::DuplicateLabel { .. })
    ));
}

#[test]
fn uncentered_input_is_rejected() {
    let rows = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
    let obs = ObservationMatrix::from_centered(Matrix::from_rows(&rows), labels(2)).unwrap();
    assert!(matches!(pca::fit(&obs), Err(Error::NotCentered { column: 0, .. })));
}

#[test]
fn single_precision_fit() {
    let rows: Vec<Vec<f32>> = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![0.5, 0.5], vec![-0.5, -0.5]];
    let obs = odhodge::ObservationMatrix32::from_centered(odhodge::Matrix32::from_rows(&rows), labels(4)).unwrap();
    let model = pca::fit(&obs).unwrap();
    let w = model.eigenvector(0);
    let h = std::f32::consts::FRAC_1_SQRT_2;
    assert!((w[0] - h).abs() <= 1e-6 && (w[1] - h).abs() <= 1e-6);
    assert!(model.eigenvalues[1].abs() <= 1e-6);
}
