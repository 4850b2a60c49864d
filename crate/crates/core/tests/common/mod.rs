//! Independent oracles shared by the integration tests. Nothing here calls into the
//! code paths it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use txreid::{Alignment, CrossViewSamples, DistanceMatrix, Matrix, Tensor3};

/// Hard limit on enumerated pairs for the naive covariance oracle.
pub const NAIVE_PAIR_CAP: u64 = 20_000_000;

pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Well-conditioned random SPD matrix.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let a = random_matrix(rng, d, d);
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.random_range(-10.0..10.0)).unwrap()
}

/// Unfolding by direct index enumeration.
pub fn brute_unfold(t: &Tensor3, mode: usize) -> Matrix {
    let [n1, n2, n3] = t.dims();
    let rows = t.dims()[mode - 1];
    let cols = n1 * n2 * n3 / rows;
    let mut m = DMatrix::zeros(rows, cols);
    for k in 0..n3 {
        for j in 0..n2 {
            for i in 0..n1 {
                let (r, c) = match mode {
                    1 => (i, j + k * n2),
                    2 => (j, i + k * n1),
                    _ => (k, i + j * n1),
                };
                m[(r, c)] = t.get(i, j, k);
            }
        }
    }
    m
}

/// Covariances by enumerating every admitted pair.
pub fn naive_covariances(s: &CrossViewSamples, alignment: Alignment) -> (Matrix, Matrix, u64, u64) {
    let d = s.dim();
    let pairs = (s.xa.ncols() * s.xb.ncols()) as u64;
    assert!(pairs <= NAIVE_PAIR_CAP, "naive oracle capped at {NAIVE_PAIR_CAP} pairs");
    let mut intra = DMatrix::zeros(d, d);
    let mut extra = DMatrix::zeros(d, d);
    let (mut ni, mut ne) = (0u64, 0u64);
    for a in 0..s.xa.ncols() {
        for b in 0..s.xb.ncols() {
            if alignment == Alignment::Aligned && s.position_a[a] != s.position_b[b] {
                continue;
            }
            let e = s.xa.column(a) - s.xb.column(b);
            let outer = &e * e.transpose();
            if s.labels_a[a] == s.labels_b[b] {
                intra += outer;
                ni += 1;
            } else {
                extra += outer;
                ne += 1;
            }
        }
    }
    (intra / ni as f64, extra / ne as f64, ni, ne)
}

/// `a^{-1/2}` through the symmetric eigendecomposition.
pub fn inv_sqrt(a: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(a.clone());
    let s = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// Generalized eigenpairs of `(e, i)` by whitening with `i^{-1/2}`, descending.
pub fn dense_generalized_eigen(e: &Matrix, i: &Matrix) -> (Vec<f64>, Matrix) {
    let w = inv_sqrt(i);
    let c = &w * e * &w;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..e.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(e.nrows(), e.nrows());
    for (dst, &k) in order.iter().enumerate() {
        vecs.set_column(dst, &(&w * eig.eigenvectors.column(k)));
    }
    (vals, vecs)
}

/// Plain-vector XQDA written from scratch: naive covariances, ridge
/// `lambda * mean(diag)`, whitening eigen route, LU inverses.
pub struct MatrixXqda {
    pub w: Matrix,
    pub metric: Matrix,
}

impl MatrixXqda {
    pub fn fit(xa: &Matrix, la: &[u32], xb: &Matrix, lb: &[u32], r: usize, lambda: f64) -> MatrixXqda {
        let s = CrossViewSamples::from_vectors(xa.clone(), la.to_vec(), xb.clone(), lb.to_vec()).unwrap();
        let (si, se, _, _) = naive_covariances(&s, Alignment::All);
        let d = si.nrows();
        let mean = si.trace() / d as f64;
        let ridge = if mean > 0.0 { lambda * mean } else { lambda };
        let si = si + DMatrix::identity(d, d) * ridge;
        let (_, vecs) = dense_generalized_eigen(&se, &si);
        let w = vecs.columns(0, r).into_owned();
        let wt = w.transpose();
        let metric = (&wt * &si * &w).try_inverse().unwrap() - (&wt * &se * &w).try_inverse().unwrap();
        MatrixXqda { w, metric }
    }

    pub fn distances(&self, probes: &Matrix, gallery: &Matrix) -> Matrix {
        let full = &self.w * &self.metric * self.w.transpose();
        DMatrix::from_fn(probes.ncols(), gallery.ncols(), |i, j| {
            let e = probes.column(i) - gallery.column(j);
            e.dot(&(&full * &e))
        })
    }
}

/// CMC by counting, for each probe, the gallery entries that precede its best
/// correct match under (distance, index) order.
pub fn exhaustive_cmc(d: &DistanceMatrix, max_rank: usize) -> Vec<f64> {
    let g = d.gallery_labels.len();
    let p = d.probe_labels.len();
    let mut first_hit = Vec::with_capacity(p);
    for i in 0..p {
        let row = d.values.row(i);
        let best = (0..g)
            .filter(|&j| d.gallery_labels[j] == d.probe_labels[i])
            .map(|j| {
                1 + (0..g)
                    .filter(|&k| row[k] < row[j] || (row[k] == row[j] && k < j))
                    .count()
            })
            .min()
            .expect("probe has a match");
        first_hit.push(best);
    }
    (1..=max_rank)
        .map(|r| first_hit.iter().filter(|&&h| h <= r).count() as f64 / p as f64)
        .collect()
}

/// Random distance matrix whose probes all have at least one gallery match.
/// Values come from a small grid half the time so ties are exercised.
pub fn random_distance_matrix(rng: &mut ChaCha8Rng, max: usize) -> DistanceMatrix {
    let g = rng.random_range(1..=max);
    let p = rng.random_range(1..=max);
    let n_labels = rng.random_range(1..=g);
    let mut gallery_labels: Vec<u32> = (0..g).map(|j| (j % n_labels) as u32).collect();
    for j in (1..g).rev() {
        let k = rng.random_range(0..=j);
        gallery_labels.swap(j, k);
    }
    let probe_labels: Vec<u32> = (0..p).map(|_| rng.random_range(0..n_labels as u32)).collect();
    let coarse = rng.random_bool(0.5);
    let values = DMatrix::from_fn(p, g, |_, _| {
        if coarse {
            rng.random_range(0..4) as f64
        } else {
            rng.random_range(-5.0..5.0)
        }
    });
    DistanceMatrix::new(values, probe_labels, gallery_labels).unwrap()
}

/// Single-shot two-view data: shared latent vectors plus uniform view noise.
pub fn two_view_vectors(rng: &mut ChaCha8Rng, ids: usize, dim: usize, noise: f64) -> (Matrix, Matrix) {
    let latent = random_matrix(rng, dim, ids);
    let na = random_matrix(rng, dim, ids) * noise;
    let nb = random_matrix(rng, dim, ids) * noise;
    (&latent + na, &latent + nb)
}
