//! Probe-gallery distances, per-probe score normalization and ranking.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ViewTensor;
use crate::tensor::Matrix;
use crate::txqda::{project, TxqdaModel};

/// Probes along rows, gallery along columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub values: Matrix,
    pub probe_labels: Vec<u32>,
    pub gallery_labels: Vec<u32>,
}

impl DistanceMatrix {
    pub fn new(values: Matrix, probe_labels: Vec<u32>, gallery_labels: Vec<u32>) -> Result<Self> {
        if values.nrows() != probe_labels.len() || values.ncols() != gallery_labels.len() {
            return Err(Error::usage(format!(
                "{}x{} distances for {} probes and {} gallery entries",
                values.nrows(),
                values.ncols(),
                probe_labels.len(),
                gallery_labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("distance matrix has non-finite entries"));
        }
        Ok(DistanceMatrix {
            values,
            probe_labels,
            gallery_labels,
        })
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// CSV with a header of gallery labels and the probe label leading each row.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, "probe")?;
        for g in &self.gallery_labels {
            write!(out, ",{g}")?;
        }
        writeln!(out)?;
        for (i, p) in self.probe_labels.iter().enumerate() {
            write!(out, "{p}")?;
            for v in self.values.row(i).iter() {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `(a - b)^T m (a - b)`, no square root.
pub fn quadratic_distance(a: &[f64], b: &[f64], m: &Matrix) -> Result<f64> {
    if a.len() != b.len() || m.nrows() != a.len() || m.ncols() != a.len() {
        return Err(Error::usage(format!(
            "quadratic distance between lengths {} and {} under a {}x{} metric",
            a.len(),
            b.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let diff = nalgebra::DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
    Ok(diff.dot(&(m * &diff)))
}

/// Distances between columns of `probes` and columns of `gallery` under `metric`.
pub fn distances_between(
    probes: &Matrix,
    probe_labels: Vec<u32>,
    gallery: &Matrix,
    gallery_labels: Vec<u32>,
    metric: &Matrix,
) -> Result<DistanceMatrix> {
    let d = metric.nrows();
    if probes.nrows() != d || gallery.nrows() != d || metric.ncols() != d {
        return Err(Error::usage(format!(
            "probe dim {}, gallery dim {}, metric {}x{}",
            probes.nrows(),
            gallery.nrows(),
            metric.nrows(),
            metric.ncols()
        )));
    }
    let mut values = Matrix::zeros(probes.ncols(), gallery.ncols());
    for (i, p) in probes.column_iter().enumerate() {
        let mut diffs = gallery.clone();
        for mut col in diffs.column_iter_mut() {
            col -= p;
        }
        let weighted = metric * &diffs;
        for j in 0..gallery.ncols() {
            values[(i, j)] = diffs.column(j).dot(&weighted.column(j));
        }
    }
    DistanceMatrix::new(values, probe_labels, gallery_labels)
}

/// Project both sets with the model and compare their vectorized slices.
pub fn distance_matrix(probes: &ViewTensor, gallery: &ViewTensor, model: &TxqdaModel) -> Result<DistanceMatrix> {
    let p = project(model, probes).map_err(|e| e.context("probe set"))?;
    let g = project(model, gallery).map_err(|e| e.context("gallery set"))?;
    distances_between(
        &p.tensor.slice_vectors(),
        p.labels,
        &g.tensor.slice_vectors(),
        g.labels,
        &model.metric,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    #[default]
    MinMax,
    ZScore,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "minmax" => Ok(Normalization::MinMax),
            "zscore" => Ok(Normalization::ZScore),
            other => Err(Error::usage(format!(
                "unknown normalization {other:?}, expected none, minmax or zscore"
            ))),
        }
    }
}

/// Per-probe-row normalization. Constant rows become all zeros.
pub fn normalize_scores(d: &DistanceMatrix, method: Normalization) -> DistanceMatrix {
    let mut out = d.clone();
    if method == Normalization::None {
        return out;
    }
    let n = d.values.ncols() as f64;
    for mut row in out.values.row_iter_mut() {
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo == hi {
            row.fill(0.0);
            continue;
        }
        match method {
            Normalization::MinMax => {
                let span = hi - lo;
                row.apply(|v| *v = (*v - lo) / span);
            }
            Normalization::ZScore => {
                let mean = row.sum() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 {
                    row.apply(|v| *v = (*v - mean) / sd);
                } else {
                    row.fill(0.0);
                }
            }
            Normalization::None => unreachable!(),
        }
    }
    out
}

/// Gallery indices per probe, nearest first; ties keep ascending gallery index.
pub fn rank_gallery(d: &DistanceMatrix) -> Vec<Vec<usize>> {
    d.values
        .row_iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(std::cmp::Ordering::Equal));
            idx
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: &[&[f64]]) -> DistanceMatrix {
        let cols = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DistanceMatrix::new(
            Matrix::from_row_slice(rows.len(), cols, &flat),
            (0..rows.len() as u32).collect(),
            (0..cols as u32).collect(),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_distance_examples() {
        let id = Matrix::identity(2, 2);
        assert_eq!(quadratic_distance(&[1.0, 2.0], &[4.0, 6.0], &id).unwrap(), 25.0);
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, -1.0]);
        assert_eq!(quadratic_distance(&[0.7, -3.0], &[0.7, -3.0], &m).unwrap(), 0.0);
        let diag = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(quadratic_distance(&[3.0, 4.0], &[0.0, 0.0], &diag).unwrap(), 34.0);
        assert!(matches!(quadratic_distance(&[1.0], &[1.0, 2.0], &id), Err(Error::Usage(_))));
    }

    #[test]
    fn minmax_and_constant_rows() {
        let n = normalize_scores(&dm(&[&[2.0, 4.0, 6.0], &[5.0, 5.0, 5.0]]), Normalization::MinMax);
        assert_eq!(n.row(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(n.row(1), vec![0.0, 0.0, 0.0]);
        let z = normalize_scores(&dm(&[&[5.0, 5.0, 5.0]]), Normalization::ZScore);
        assert_eq!(z.row(0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn zscore_uses_population_std() {
        let z = normalize_scores(&dm(&[&[1.0, 2.0, 3.0]]), Normalization::ZScore);
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.row(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn none_is_identity() {
        let d = dm(&[&[0.3, -1.0]]);
        assert_eq!(normalize_scores(&d, Normalization::None), d);
    }

    #[test]
    fn ranking_and_ties() {
        assert_eq!(rank_gallery(&dm(&[&[0.3, 0.1, 0.2]])), vec![vec![1, 2, 0]]);
        assert_eq!(rank_gallery(&dm(&[&[0.5, 0.5]])), vec![vec![0, 1]]);
        assert_eq!(rank_gallery(&dm(&[&[1.0; 6]])), vec![(0..6).collect::<Vec<_>>()]);
    }

    #[test]
    fn csv_export() {
        let d = DistanceMatrix::new(Matrix::from_row_slice(1, 2, &[0.5, 2.0]), vec![7], vec![7, 9]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "probe,7,9\n7,0.5,2.0\n");
    }

    #[test]
    fn loop_oracle_agreement() {
        let probes = Matrix::from_fn(3, 3, |i, j| (i as f64 - 1.0) * 0.5 + j as f64);
        let gallery = Matrix::from_fn(3, 5, |i, j| (i * j) as f64 * 0.25 - 0.4);
        let m = Matrix::from_row_slice(3, 3, &[2.0, 0.1, -0.3, 0.1, 1.0, 0.2, -0.3, 0.2, 0.5]);
        let d = distances_between(&probes, vec![0, 1, 2], &gallery, (0..5).collect(), &m).unwrap();
        assert_eq!(d.values.shape(), (3, 5));
        for i in 0..3 {
            for j in 0..5 {
                let p: Vec<f64> = probes.column(i).iter().copied().collect();
                let g: Vec<f64> = gallery.column(j).iter().copied().collect();
                let q = quadratic_distance(&p, &g, &m).unwrap();
                assert!((d.values[(i, j)] - q).abs() <= 1e-12 * q.abs().max(1.0));
            }
        }
        let self_d = distances_between(&gallery, (0..5).collect(), &gallery, (0..5).collect(), &m).unwrap();
        for j in 0..5 {
            assert_eq!(self_d.values[(j, j)], 0.0);
        }
    }
}
