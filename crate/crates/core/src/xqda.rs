//! Cross-view quadratic discriminant analysis on plain sample matrices.
//!
//! Intra-personal and extra-personal covariances are built from cross-view
//! difference vectors `x_a - x_b`. Both are accumulated through per-group sums
//! (a group is one within-slice position, or everything under [`Alignment::All`]),
//! so the cost is linear in the number of samples rather than in the number of pairs.
//! The projection solves `sigma_e w = lambda sigma_i w` and the metric lives in the
//! projected space.

use std::collections::HashMap;

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Eigenvalues must exceed one by this relative margin to survive `auto` selection.
pub const AUTO_SELECTION_MARGIN: f64 = 1e-10;

/// Which cross-view pairs are admitted into the covariances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Only pairs whose within-slice positions agree.
    Aligned,
    /// Every view-A sample against every view-B sample.
    All,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(Alignment::Aligned),
            "all" => Ok(Alignment::All),
            other => Err(Error::usage(format!("unknown alignment {other:?}, expected aligned or all"))),
        }
    }
}

/// Requested output dimension of one XQDA solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetDim {
    Explicit(usize),
    /// Keep every direction whose generalized eigenvalue exceeds one.
    Auto,
}

/// Column samples of both views with their identity and within-slice position.
#[derive(Clone, Debug)]
pub struct CrossViewSamples {
    pub xa: Matrix,
    pub xb: Matrix,
    pub labels_a: Vec<u32>,
    pub labels_b: Vec<u32>,
    pub position_a: Vec<usize>,
    pub position_b: Vec<usize>,
}

impl CrossViewSamples {
    pub fn new(
        xa: Matrix,
        labels_a: Vec<u32>,
        position_a: Vec<usize>,
        xb: Matrix,
        labels_b: Vec<u32>,
        position_b: Vec<usize>,
    ) -> Result<Self> {
        if xa.nrows() != xb.nrows() {
            return Err(Error::usage(format!(
                "views have different sample dimensions ({} vs {})",
                xa.nrows(),
                xb.nrows()
            )));
        }
        for (name, x, labels, pos) in [("A", &xa, &labels_a, &position_a), ("B", &xb, &labels_b, &position_b)] {
            if x.ncols() != labels.len() || x.ncols() != pos.len() {
                return Err(Error::usage(format!(
                    "view {name}: {} columns but {} labels and {} positions",
                    x.ncols(),
                    labels.len(),
                    pos.len()
                )));
            }
        }
        Ok(CrossViewSamples {
            xa,
            xb,
            labels_a,
            labels_b,
            position_a,
            position_b,
        })
    }

    /// Plain vectors: every sample sits at position 0.
    pub fn from_vectors(xa: Matrix, labels_a: Vec<u32>, xb: Matrix, labels_b: Vec<u32>) -> Result<Self> {
        let (na, nb) = (xa.ncols(), xb.ncols());
        CrossViewSamples::new(xa, labels_a, vec![0; na], xb, labels_b, vec![0; nb])
    }

    pub fn dim(&self) -> usize {
        self.xa.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct CovariancePair {
    /// Intra-personal difference covariance.
    pub sigma_i: Matrix,
    /// Extra-personal difference covariance.
    pub sigma_e: Matrix,
    pub n_intra: u64,
    pub n_extra: u64,
}

#[derive(Clone, Debug)]
pub struct XqdaSolution {
    /// `d x r`, one unit-norm, sign-canonical eigenvector per column.
    pub w: Matrix,
    /// Descending generalized eigenvalues of the retained directions.
    pub eigvals: Vec<f64>,
    /// `r x r` metric in the projected space.
    pub metric: Matrix,
}

/// Sample grouping shared by the covariance and trace accumulators.
struct Groups {
    /// Per sample of view A: index of its (position, identity) class and position group.
    class_a: Vec<usize>,
    class_b: Vec<usize>,
    group_a: Vec<usize>,
    group_b: Vec<usize>,
    /// Per (position, identity) class: view-A and view-B counts.
    class_counts: Vec<(u64, u64)>,
    /// Per position group: view-A and view-B counts.
    group_counts: Vec<(u64, u64)>,
}

impl Groups {
    fn build(s: &CrossViewSamples, alignment: Alignment) -> Groups {
        let mut group_ids: HashMap<usize, usize> = HashMap::new();
        let mut class_ids: HashMap<(usize, u32), usize> = HashMap::new();
        let mut class_counts = Vec::new();
        let mut group_counts = Vec::new();
        let mut assign = |pos: usize, label: u32, side_b: bool| {
            let pos = match alignment {
                Alignment::Aligned => pos,
                Alignment::All => 0,
            };
            let g = *group_ids.entry(pos).or_insert_with(|| {
                group_counts.push((0, 0));
                group_counts.len() - 1
            });
            let c = *class_ids.entry((pos, label)).or_insert_with(|| {
                class_counts.push((0, 0));
                class_counts.len() - 1
            });
            if side_b {
                group_counts[g].1 += 1;
                class_counts[c].1 += 1;
            } else {
                group_counts[g].0 += 1;
                class_counts[c].0 += 1;
            }
            (g, c)
        };
        let (group_a, class_a): (Vec<_>, Vec<_>) = s
            .position_a
            .iter()
            .zip(&s.labels_a)
            .map(|(&p, &l)| assign(p, l, false))
            .unzip();
        let (group_b, class_b): (Vec<_>, Vec<_>) = s
            .position_b
            .iter()
            .zip(&s.labels_b)
            .map(|(&p, &l)| assign(p, l, true))
            .unzip();
        Groups {
            class_a,
            class_b,
            group_a,
            group_b,
            class_counts,
            group_counts,
        }
    }

    fn n_intra(&self) -> u64 {
        self.class_counts.iter().map(|(a, b)| a * b).sum()
    }

    fn n_all(&self) -> u64 {
        self.group_counts.iter().map(|(a, b)| a * b).sum()
    }

    fn check(&self) -> Result<(u64, u64)> {
        let n_intra = self.n_intra();
        let n_extra = self.n_all() - n_intra;
        if n_intra == 0 {
            return Err(Error::data("no intra-personal (same identity) cross-view pairs"));
        }
        if n_extra == 0 {
            return Err(Error::data("no extra-personal (different identity) cross-view pairs"));
        }
        Ok((n_intra, n_extra))
    }
}

/// Column sums of `x` per bucket, as a `d x buckets` matrix.
fn bucket_sums(x: &Matrix, bucket: &[usize], buckets: usize) -> Matrix {
    let mut sums = Matrix::zeros(x.nrows(), buckets);
    for (col, &b) in bucket.iter().enumerate() {
        let mut dst = sums.column_mut(b);
        dst += x.column(col);
    }
    sums
}

/// `x diag(w) x^T`.
fn weighted_gram(x: &Matrix, weights: &[f64]) -> Matrix {
    let mut scaled = x.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
        col *= w;
    }
    scaled * x.transpose()
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Intra- and extra-personal covariances of cross-view differences.
pub fn cross_covariances(s: &CrossViewSamples, alignment: Alignment) -> Result<CovariancePair> {
    let groups = Groups::build(s, alignment);
    let (n_intra, n_extra) = groups.check()?;
    let cc = &groups.class_counts;
    let gc = &groups.group_counts;

    // Each sample enters its own outer product once per admitted partner.
    let intra_wa: Vec<f64> = groups.class_a.iter().map(|&c| cc[c].1 as f64).collect();
    let intra_wb: Vec<f64> = groups.class_b.iter().map(|&c| cc[c].0 as f64).collect();
    let extra_wa: Vec<f64> = groups
        .group_a
        .iter()
        .zip(&groups.class_a)
        .map(|(&g, &c)| (gc[g].1 - cc[c].1) as f64)
        .collect();
    let extra_wb: Vec<f64> = groups
        .group_b
        .iter()
        .zip(&groups.class_b)
        .map(|(&g, &c)| (gc[g].0 - cc[c].0) as f64)
        .collect();

    let sa = bucket_sums(&s.xa, &groups.class_a, cc.len());
    let sb = bucket_sums(&s.xb, &groups.class_b, cc.len());
    let ta = bucket_sums(&s.xa, &groups.group_a, gc.len());
    let tb = bucket_sums(&s.xb, &groups.group_b, gc.len());

    let cross_intra = &sa * sb.transpose();
    let cross_all = &ta * tb.transpose();
    let cross_extra = &cross_all - &cross_intra;

    let intra = weighted_gram(&s.xa, &intra_wa) + weighted_gram(&s.xb, &intra_wb)
        - &cross_intra
        - cross_intra.transpose();
    let extra = weighted_gram(&s.xa, &extra_wa) + weighted_gram(&s.xb, &extra_wb)
        - &cross_extra
        - cross_extra.transpose();

    Ok(CovariancePair {
        sigma_i: symmetrize(&intra) / n_intra as f64,
        sigma_e: symmetrize(&extra) / n_extra as f64,
        n_intra,
        n_extra,
    })
}

/// Trace of the intra-personal covariance, without forming the matrix.
pub fn intra_trace(s: &CrossViewSamples, alignment: Alignment) -> Result<f64> {
    let groups = Groups::build(s, alignment);
    let (n_intra, _) = groups.check()?;
    let cc = &groups.class_counts;
    let sq = |x: &Matrix, col: usize| x.column(col).norm_squared();
    let mut total = 0.0;
    for (col, &c) in groups.class_a.iter().enumerate() {
        total += cc[c].1 as f64 * sq(&s.xa, col);
    }
    for (col, &c) in groups.class_b.iter().enumerate() {
        total += cc[c].0 as f64 * sq(&s.xb, col);
    }
    let sa = bucket_sums(&s.xa, &groups.class_a, cc.len());
    let sb = bucket_sums(&s.xb, &groups.class_b, cc.len());
    total -= 2.0 * sa.component_mul(&sb).sum();
    Ok(total / n_intra as f64)
}

/// Ridge added to the intra-personal covariance: `lambda` times its mean diagonal,
/// or plain `lambda` when that mean is zero.
pub fn ridge(mean_diag: f64, lambda: f64) -> f64 {
    if mean_diag > 0.0 {
        lambda * mean_diag
    } else {
        lambda
    }
}

fn spd_inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    Cholesky::new(symmetrize(m))
        .map(|c| c.inverse())
        .ok_or_else(|| Error::numerical(format!("{what} is singular or not positive definite")))
}

/// `M = sigma_i^-1 - sigma_e^-1` for covariances already expressed in the projected space.
pub fn projected_metric(sigma_i: &Matrix, sigma_e: &Matrix) -> Result<Matrix> {
    let inv_i = spd_inverse(sigma_i, "projected intra-personal covariance")?;
    let inv_e = spd_inverse(sigma_e, "projected extra-personal covariance")?;
    Ok(symmetrize(&(inv_i - inv_e)))
}

/// Flip `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Generalized eigen-solve, dimension selection and metric.
pub fn solve_xqda(cov: &CovariancePair, target: TargetDim, lambda: f64) -> Result<XqdaSolution> {
    let d = cov.sigma_i.nrows();
    if d == 0 || cov.sigma_i.shape() != (d, d) || cov.sigma_e.shape() != (d, d) {
        return Err(Error::usage("covariances must be non-empty square matrices of equal size"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::usage(format!("lambda must be non-negative, got {lambda}")));
    }
    if let TargetDim::Explicit(r) = target {
        if r == 0 || r > d {
            return Err(Error::usage(format!("target dimension {r} outside 1..={d}")));
        }
    }

    let mean_diag = cov.sigma_i.trace() / d as f64;
    let mut sigma_i = cov.sigma_i.clone();
    let reg = ridge(mean_diag, lambda);
    for i in 0..d {
        sigma_i[(i, i)] += reg;
    }
    let chol = Cholesky::new(symmetrize(&sigma_i)).ok_or_else(|| {
        Error::numerical("regularized intra-personal covariance is not positive definite")
    })?;
    let l = chol.l();
    // C = L^-1 sigma_e L^-T shares the generalized spectrum.
    let half = l
        .solve_lower_triangular(&cov.sigma_e)
        .ok_or_else(|| Error::numerical("triangular solve failed"))?;
    let c = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::numerical("triangular solve failed"))?;
    let eig = SymmetricEigen::new(symmetrize(&c));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let r = match target {
        TargetDim::Explicit(r) => r,
        TargetDim::Auto => {
            let r = order
                .iter()
                .take_while(|&&i| eig.eigenvalues[i] > 1.0 + AUTO_SELECTION_MARGIN)
                .count();
            if r == 0 {
                return Err(Error::Degenerate("no discriminative directions".into()));
            }
            r
        }
    };

    let mut v = Matrix::zeros(d, r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        v.set_column(dst, &eig.eigenvectors.column(src));
    }
    let mut w = l
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(|| Error::numerical("triangular solve failed"))?;
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::numerical("generalized eigenvector has zero or non-finite norm"));
        }
        col /= n;
        canonicalize_sign(col.as_mut_slice());
    }
    let eigvals = order.iter().take(r).map(|&i| eig.eigenvalues[i]).collect();

    let wt = w.transpose();
    let metric = projected_metric(&(&wt * &sigma_i * &w), &(&wt * &cov.sigma_e * &w))?;
    Ok(XqdaSolution { w, eigvals, metric })
}
