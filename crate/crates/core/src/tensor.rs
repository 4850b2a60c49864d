//! Dense third-order tensors and the mode-n algebra used by the alternating solver.
//!
//! Element `(i1, i2, i3)` lives at linear offset `i1 + i2*n1 + i3*n1*n2`, so each
//! mode-3 slice is a contiguous column-major `n1 x n2` block. Unfoldings follow the
//! Kolda-Bader convention: the mode-`n` unfolding has `n_n` rows and its columns
//! enumerate the remaining indices with the lower-numbered mode varying fastest.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix used for unfoldings, projections and metrics.
pub type Matrix = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

fn check_mode(mode: usize) -> Result<usize> {
    if (1..=3).contains(&mode) {
        Ok(mode - 1)
    } else {
        Err(Error::usage(format!("invalid tensor mode {mode}, expected 1, 2 or 3")))
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::usage(format!(
            "tensor extents must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

impl Tensor3 {
    /// Build a tensor from data in the crate's linear layout.
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let len = dims.iter().product::<usize>();
        if data.len() != len {
            return Err(Error::usage(format!(
                "tensor data length {} does not match dims {dims:?} ({len})",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite tensor entry at linear offset {pos}"
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Tensor3 {
            dims,
            data: vec![0.0; dims.iter().product()],
        })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3::new(dims, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        let [n1, n2, _] = self.dims;
        self.data[i1 + i2 * n1 + i3 * n1 * n2]
    }

    /// Mode-3 slice `k` as a column-major `n1 x n2` block.
    pub fn slice(&self, k: usize) -> &[f64] {
        let block = self.dims[0] * self.dims[1];
        &self.data[k * block..(k + 1) * block]
    }

    /// Each mode-3 slice vectorized (mode-1 index fastest) as one column.
    pub fn slice_vectors(&self) -> Matrix {
        let [n1, n2, n3] = self.dims;
        Matrix::from_column_slice(n1 * n2, n3, &self.data)
    }

    /// Mode-n unfolding.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        let m = check_mode(mode)?;
        let [n1, n2, n3] = self.dims;
        Ok(match m {
            0 => Matrix::from_column_slice(n1, n2 * n3, &self.data),
            1 => Matrix::from_fn(n2, n1 * n3, |j, col| {
                let (i, k) = (col % n1, col / n1);
                self.data[i + j * n1 + k * n1 * n2]
            }),
            _ => Matrix::from_row_slice(n3, n1 * n2, &self.data),
        })
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn refold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let mi = check_mode(mode)?;
        check_dims(dims)?;
        let [n1, n2, n3] = dims;
        let rows = dims[mi];
        let cols = dims.iter().product::<usize>() / rows;
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::usage(format!(
                "cannot refold a {}x{} matrix along mode {mode} into dims {dims:?} (expected {rows}x{cols})",
                m.nrows(),
                m.ncols()
            )));
        }
        let data = match mi {
            0 => m.as_slice().to_vec(),
            1 => {
                let mut data = vec![0.0; n1 * n2 * n3];
                for k in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            data[i + j * n1 + k * n1 * n2] = m[(j, i + k * n1)];
                        }
                    }
                }
                data
            }
            _ => m.transpose().as_slice().to_vec(),
        };
        Tensor3::new(dims, data)
    }

    /// Mode-n product `self x_mode a`; `a.ncols()` must equal the mode extent.
    pub fn mode_product(&self, a: &Matrix, mode: usize) -> Result<Self> {
        let mi = check_mode(mode)?;
        let extent = self.dims[mi];
        if a.ncols() != extent {
            return Err(Error::usage(format!(
                "mode-{mode} product needs a matrix with {extent} columns, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::usage("mode product with an empty matrix"));
        }
        if is_identity(a) {
            return Ok(self.clone());
        }
        let mut dims = self.dims;
        dims[mi] = a.nrows();
        if mi == 1 {
            // Slice-wise: each column-major n1 x n2 slice times a^T.
            let [n1, n2, n3] = self.dims;
            let at = a.transpose();
            let mut data = Vec::with_capacity(n1 * dims[1] * n3);
            for k in 0..n3 {
                let slice = nalgebra::DMatrixView::from_slice(self.slice(k), n1, n2);
                data.extend_from_slice((slice * &at).as_slice());
            }
            return Tensor3::new(dims, data);
        }
        let product = a * self.unfold(mode)?;
        Tensor3::refold(&product, mode, dims)
    }

    /// `self x_1 P_1 x_2 P_2`; the persons mode is left untouched.
    pub fn multi_project(&self, p: &ProjectionSet) -> Result<Self> {
        self.mode_product(p.mode(1), 1)?.mode_product(p.mode(2), 2)
    }

    /// Entry-wise `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &Tensor3, beta: f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::usage(format!(
                "tensor dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Tensor3::new(self.dims, data)
    }
}

fn is_identity(a: &Matrix) -> bool {
    a.is_square()
        && a.iter().enumerate().all(|(idx, &v)| {
            let (r, c) = (idx % a.nrows(), idx / a.nrows());
            v == if r == c { 1.0 } else { 0.0 }
        })
}

/// Per-mode projection matrices for the parts and features modes.
///
/// `P_k` has shape `target_k x source_k`; each row is one learned direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    p1: Matrix,
    p2: Matrix,
}

impl ProjectionSet {
    pub fn new(p1: Matrix, p2: Matrix) -> Result<Self> {
        for (k, p) in [(1, &p1), (2, &p2)] {
            if p.nrows() == 0 || p.nrows() > p.ncols() {
                return Err(Error::usage(format!(
                    "mode-{k} projection must be target x source with 0 < target <= source, got {}x{}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("mode-{k} projection has non-finite entries")));
            }
        }
        Ok(ProjectionSet { p1, p2 })
    }

    pub fn identity(n1: usize, n2: usize) -> Result<Self> {
        ProjectionSet::new(Matrix::identity(n1, n1), Matrix::identity(n2, n2))
    }

    /// Projection matrix of mode 1 or 2.
    ///
    /// # Panics
    /// On any other mode.
    pub fn mode(&self, k: usize) -> &Matrix {
        match k {
            1 => &self.p1,
            2 => &self.p2,
            _ => panic!("projection sets only carry modes 1 and 2, got {k}"),
        }
    }

    pub fn source_dims(&self) -> [usize; 2] {
        [self.p1.ncols(), self.p2.ncols()]
    }

    pub fn target_dims(&self) -> [usize; 2] {
        [self.p1.nrows(), self.p2.nrows()]
    }

    /// `(P_2 P_2^T) kron (P_1 P_1^T)`: the Gram matrix of the combined projection
    /// acting on vectorized slices.
    pub fn vectorized_gram(&self) -> Matrix {
        let g1 = &self.p1 * self.p1.transpose();
        let g2 = &self.p2 * self.p2.transpose();
        g2.kronecker(&g1)
    }
}
