//! Dense row-major tensors of rank 1 or 2 and the handful of kernels the
//! recurrent layers need.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn vector(n: usize) -> Self {
        Self::zeros(&[n])
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Self::zeros(&[rows, cols])
    }

    /// An empty placeholder, used for parameters that are not trained.
    pub fn empty() -> Self {
        Tensor {
            shape: vec![0],
            data: Vec::new(),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(alloc::format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `out += x · W` for a row vector `x` (len rows) and `W` (rows × cols).
#[inline]
pub(crate) fn vec_mat_acc(x: &[f64], w: &Tensor, out: &mut [f64]) {
    let cols = w.cols();
    debug_assert_eq!(x.len(), w.rows());
    debug_assert_eq!(out.len(), cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w.data[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `out += W · d` where `d` has len cols; the transpose product used in backprop.
#[inline]
pub(crate) fn mat_vec_acc(w: &Tensor, d: &[f64], out: &mut [f64]) {
    let cols = w.cols();
    debug_assert_eq!(d.len(), cols);
    debug_assert_eq!(out.len(), w.rows());
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w.data[i * cols..(i + 1) * cols];
        let mut s = 0.0;
        for (&wij, &dj) in row.iter().zip(d) {
            s += wij * dj;
        }
        *o += s;
    }
}

/// `G += x ⊗ d` (outer product accumulate).
#[inline]
pub(crate) fn outer_acc(g: &mut Tensor, x: &[f64], d: &[f64]) {
    let cols = g.cols();
    debug_assert_eq!(d.len(), cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut g.data[i * cols..(i + 1) * cols];
        for (gij, &dj) in row.iter_mut().zip(d) {
            *gij += xi * dj;
        }
    }
}

#[inline]
pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
