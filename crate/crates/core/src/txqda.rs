//! Tensor cross-view quadratic discriminant analysis.
//!
//! Starting from identity projections, every sweep visits the parts mode and the
//! features mode. For mode `k` both view tensors are projected on the other mode
//! with its most recent matrix, unfolded along `k`, and handed to the
//! XQDA kernel; the leading generalized eigenvectors become the new `P_k`. The loop
//! stops once the projections settle (checked from the third sweep on) or after
//! `max_itr` sweeps. A final quadratic-form metric is then learned on the
//! vectorized projected slices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ByteReader, ViewTensor};
use crate::tensor::{Matrix, ProjectionSet, Tensor3};
use crate::xqda::{
    canonicalize_sign, cross_covariances, intra_trace, projected_metric, ridge, solve_xqda, Alignment,
    CrossViewSamples, TargetDim,
};

const MODEL_MAGIC: &[u8; 4] = b"TXM1";
const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxqdaConfig {
    /// Output dimensions of the parts and features modes.
    pub target_dims: [TargetDim; 2],
    pub max_itr: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub alignment: Alignment,
}

impl Default for TxqdaConfig {
    fn default() -> Self {
        TxqdaConfig {
            target_dims: [TargetDim::Auto, TargetDim::Auto],
            max_itr: 5,
            epsilon: 1e-6,
            lambda: 1e-3,
            alignment: Alignment::Aligned,
        }
    }
}

impl TxqdaConfig {
    fn validate(&self, source: [usize; 2]) -> Result<()> {
        if self.max_itr == 0 {
            return Err(Error::usage("max_itr must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::usage(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::usage(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        for (k, (t, n)) in self.target_dims.iter().zip(source).enumerate() {
            if let TargetDim::Explicit(r) = *t {
                if r == 0 || r > n {
                    return Err(Error::usage(format!(
                        "mode-{} target dimension {r} outside 1..={n}",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TxqdaModel {
    pub projections: ProjectionSet,
    /// Quadratic-form metric over vectorized projected slices (mode-1 index fastest).
    pub metric: Matrix,
    pub iterations_run: usize,
    pub converged: bool,
    /// Retained generalized eigenvalues of the last sweep, per mode.
    pub per_mode_eigvals: [Vec<f64>; 2],
    /// Sum of retained eigenvalues per mode, one entry per sweep.
    pub objective_history: Vec<[f64; 2]>,
    pub config: TxqdaConfig,
}

/// Unfold both projected tensors along `mode` and tag each column with its person's
/// identity and its index inside the slice.
fn unfolded_samples(
    x: &Tensor3,
    labels_x: &[u32],
    y: &Tensor3,
    labels_y: &[u32],
    mode: usize,
) -> Result<CrossViewSamples> {
    let tag = |t: &Tensor3, labels: &[u32]| -> Result<(Matrix, Vec<u32>, Vec<usize>)> {
        let other = t.dims()[2 - mode];
        let m = t.unfold(mode)?;
        let labels = (0..m.ncols()).map(|c| labels[c / other]).collect();
        let pos = (0..m.ncols()).map(|c| c % other).collect();
        Ok((m, labels, pos))
    };
    let (xa, la, pa) = tag(x, labels_x)?;
    let (xb, lb, pb) = tag(y, labels_y)?;
    CrossViewSamples::new(xa, la, pa, xb, lb, pb)
}

/// True when every mode's projection moved less than `n_k * n_k * eps` in Frobenius
/// norm, comparing sign-canonical rows.
pub fn convergence_check(prev: &ProjectionSet, curr: &ProjectionSet, eps: f64) -> Result<bool> {
    if prev.source_dims() != curr.source_dims() || prev.target_dims() != curr.target_dims() {
        return Err(Error::usage("projection sets have different shapes"));
    }
    let canonical = |p: &Matrix| {
        let mut rows = p.transpose();
        for mut col in rows.column_iter_mut() {
            canonicalize_sign(col.as_mut_slice());
        }
        rows
    };
    Ok((1..=2).all(|k| {
        let n = prev.mode(k).ncols() as f64;
        (canonical(prev.mode(k)) - canonical(curr.mode(k))).norm() < n * n * eps
    }))
}

/// Learn per-mode projections and the matching metric from the two camera views.
pub fn fit(x: &ViewTensor, y: &ViewTensor, cfg: &TxqdaConfig) -> Result<TxqdaModel> {
    let [n1, n2, _] = x.dims();
    if y.dims()[..2] != [n1, n2] {
        return Err(Error::usage(format!(
            "view tensors differ in parts/feature extents: {:?} vs {:?}",
            x.dims(),
            y.dims()
        )));
    }
    if x.view == y.view {
        return Err(Error::usage("training tensors must come from different views"));
    }
    cfg.validate([n1, n2])?;

    let mut targets = cfg.target_dims;
    let mut current = ProjectionSet::identity(n1, n2)?;
    let mut per_mode_eigvals: [Vec<f64>; 2] = Default::default();
    let mut objective_history = Vec::new();
    let mut iterations_run = 0;
    let mut converged = false;

    for iteration in 1..=cfg.max_itr {
        let prev = current.clone();
        let mut next: [Option<Matrix>; 2] = [None, None];
        for mode in 1..=2 {
            let other = 3 - mode;
            let wrap = |e: Error| Error::ModeSolve {
                mode,
                iteration,
                source: Box::new(e),
            };
            // Using last sweep's P1 for mode 2 as well would split the run into two
            // interleaved chains that never agree on two-mode data.
            let fixed = next[other - 1].as_ref().unwrap_or(prev.mode(other));
            let xp = x.tensor.mode_product(fixed, other)?;
            let yp = y.tensor.mode_product(fixed, other)?;
            let samples = unfolded_samples(&xp, &x.labels, &yp, &y.labels, mode)?;
            let cov = cross_covariances(&samples, cfg.alignment).map_err(wrap)?;
            let sol = solve_xqda(&cov, targets[mode - 1], cfg.lambda).map_err(wrap)?;
            next[mode - 1] = Some(sol.w.transpose());
            per_mode_eigvals[mode - 1] = sol.eigvals;
        }
        let [p1, p2] = next.map(|p| p.expect("both modes solved"));
        current = ProjectionSet::new(p1, p2)?;
        iterations_run = iteration;
        objective_history.push([
            per_mode_eigvals[0].iter().sum(),
            per_mode_eigvals[1].iter().sum(),
        ]);
        if iteration == 1 {
            // Freeze ranks so later sweeps stay comparable.
            let [r1, r2] = current.target_dims();
            targets = [TargetDim::Explicit(r1), TargetDim::Explicit(r2)];
        }
        if iteration > 2 && convergence_check(&prev, &current, cfg.epsilon)? {
            converged = true;
            break;
        }
    }

    let metric = final_metric(x, y, &current, cfg.lambda).map_err(|e| e.context("final metric"))?;
    Ok(TxqdaModel {
        projections: current,
        metric,
        iterations_run,
        converged,
        per_mode_eigvals,
        objective_history,
        config: cfg.clone(),
    })
}

/// XQDA metric on the vectorized projected training slices. The ridge is the one
/// the unprojected intra-personal covariance would receive, carried through the
/// projection, so a square invertible projection leaves distances unchanged.
fn final_metric(x: &ViewTensor, y: &ViewTensor, p: &ProjectionSet, lambda: f64) -> Result<Matrix> {
    let xf = x.tensor.multi_project(p)?;
    let yf = y.tensor.multi_project(p)?;
    let projected = CrossViewSamples::from_vectors(
        xf.slice_vectors(),
        x.labels.clone(),
        yf.slice_vectors(),
        y.labels.clone(),
    )?;
    let cov = cross_covariances(&projected, Alignment::All)?;
    let raw = CrossViewSamples::from_vectors(
        x.tensor.slice_vectors(),
        x.labels.clone(),
        y.tensor.slice_vectors(),
        y.labels.clone(),
    )?;
    let [n1, n2] = p.source_dims();
    let mean_diag = intra_trace(&raw, Alignment::All)? / (n1 * n2) as f64;
    let sigma_i = cov.sigma_i + p.vectorized_gram() * ridge(mean_diag, lambda);
    projected_metric(&sigma_i, &cov.sigma_e)
}

/// Project a view tensor into the learned subspace; labels are kept.
pub fn project(model: &TxqdaModel, t: &ViewTensor) -> Result<ViewTensor> {
    let [n1, n2, _] = t.dims();
    if model.projections.source_dims() != [n1, n2] {
        return Err(Error::usage(format!(
            "tensor has extents ({n1}, {n2}) but the model expects {:?}",
            model.projections.source_dims()
        )));
    }
    ViewTensor::new(t.tensor.multi_project(&model.projections)?, t.labels.clone(), t.view)
}

/// Human-readable model summary.
#[derive(Debug, Serialize)]
pub struct ModelSummary<'a> {
    pub source_dims: [usize; 2],
    pub target_dims: [usize; 2],
    pub eigenvalues: &'a [Vec<f64>; 2],
    pub iterations_run: usize,
    pub converged: bool,
    pub objective_history: &'a [[f64; 2]],
    pub config: &'a TxqdaConfig,
}

impl TxqdaModel {
    pub fn summary(&self) -> ModelSummary<'_> {
        ModelSummary {
            source_dims: self.projections.source_dims(),
            target_dims: self.projections.target_dims(),
            eigenvalues: &self.per_mode_eigvals,
            iterations_run: self.iterations_run,
            converged: self.converged,
            objective_history: &self.objective_history,
            config: &self.config,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        let u32le = |buf: &mut Vec<u8>, v: usize| buf.extend_from_slice(&(v as u32).to_le_bytes());
        let f64s = |buf: &mut Vec<u8>, vs: &mut dyn Iterator<Item = f64>| {
            for v in vs {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        };
        buf.extend_from_slice(MODEL_MAGIC);
        u32le(&mut buf, MODEL_VERSION as usize);
        let [n1, n2] = self.projections.source_dims();
        let [r1, r2] = self.projections.target_dims();
        for v in [n1, n2, r1, r2] {
            u32le(&mut buf, v);
        }
        for k in 1..=2 {
            // row-major
            f64s(&mut buf, &mut self.projections.mode(k).transpose().iter().copied());
        }
        u32le(&mut buf, self.metric.nrows());
        f64s(&mut buf, &mut self.metric.transpose().iter().copied());

        let cfg = &self.config;
        u32le(&mut buf, cfg.max_itr);
        f64s(&mut buf, &mut [cfg.epsilon, cfg.lambda].into_iter());
        buf.push(match cfg.alignment {
            Alignment::Aligned => 0,
            Alignment::All => 1,
        });
        for t in cfg.target_dims {
            let (kind, value) = match t {
                TargetDim::Explicit(r) => (0u8, r),
                TargetDim::Auto => (1u8, 0),
            };
            buf.push(kind);
            u32le(&mut buf, value);
        }

        u32le(&mut buf, self.iterations_run);
        buf.push(self.converged as u8);
        for ev in &self.per_mode_eigvals {
            u32le(&mut buf, ev.len());
            f64s(&mut buf, &mut ev.iter().copied());
        }
        u32le(&mut buf, self.objective_history.len());
        f64s(&mut buf, &mut self.objective_history.iter().flatten().copied());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        if rd.take(4)? != MODEL_MAGIC {
            return Err(Error::format("missing TXM1 magic"));
        }
        let version = rd.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::format(format!("unsupported model version {version}")));
        }
        let mut dim = || rd.u32().map(|v| v as usize);
        let (n1, n2, r1, r2) = (dim()?, dim()?, dim()?, dim()?);
        let read_matrix = |rd: &mut ByteReader, rows: usize, cols: usize| -> Result<Matrix> {
            let data = (0..rows * cols).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
            Ok(Matrix::from_row_slice(rows, cols, &data))
        };
        let p1 = read_matrix(&mut rd, r1, n1)?;
        let p2 = read_matrix(&mut rd, r2, n2)?;
        let m = rd.u32()? as usize;
        if m != r1 * r2 {
            return Err(Error::format(format!("metric size {m} does not match target dims {r1}x{r2}")));
        }
        let metric = read_matrix(&mut rd, m, m)?;

        let max_itr = rd.u32()? as usize;
        let epsilon = rd.f64()?;
        let lambda = rd.f64()?;
        let alignment = match rd.u8()? {
            0 => Alignment::Aligned,
            1 => Alignment::All,
            c => return Err(Error::format(format!("bad alignment code {c}"))),
        };
        let target = |rd: &mut ByteReader| -> Result<TargetDim> {
            let kind = rd.u8()?;
            let value = rd.u32()? as usize;
            match kind {
                0 => Ok(TargetDim::Explicit(value)),
                1 => Ok(TargetDim::Auto),
                c => Err(Error::format(format!("bad target kind {c}"))),
            }
        };
        let target_dims = [target(&mut rd)?, target(&mut rd)?];

        let iterations_run = rd.u32()? as usize;
        let converged = match rd.u8()? {
            0 => false,
            1 => true,
            c => return Err(Error::format(format!("bad converged flag {c}"))),
        };
        let eigvals = |rd: &mut ByteReader| -> Result<Vec<f64>> {
            let n = rd.u32()? as usize;
            (0..n).map(|_| rd.f64()).collect()
        };
        let per_mode_eigvals = [eigvals(&mut rd)?, eigvals(&mut rd)?];
        let sweeps = rd.u32()? as usize;
        let objective_history = (0..sweeps)
            .map(|_| Ok([rd.f64()?, rd.f64()?]))
            .collect::<Result<Vec<_>>>()?;
        if !rd.is_empty() {
            return Err(Error::format("trailing bytes in model file"));
        }
        Ok(TxqdaModel {
            projections: ProjectionSet::new(p1, p2).map_err(|e| e.context("model projections"))?,
            metric,
            iterations_run,
            converged,
            per_mode_eigvals,
            objective_history,
            config: TxqdaConfig {
                target_dims,
                max_itr,
                epsilon,
                lambda,
                alignment,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        TxqdaModel::from_bytes(&bytes).map_err(|e| e.context(path.display()))
    }
}
