//! Grids of small complex matrices, one per node of a [`BaseGeometry`].
//!
//! Every matrix is stored column-major so a node's block can be viewed as a
//! nalgebra matrix without copying.

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::BaseGeometry;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    rank: usize,
    data: Vec<Complex64>,
}

impl MatrixField {
    pub fn zeros(rank: usize, n_nodes: usize) -> Self {
        Self {
            rank,
            data: vec![Complex64::new(0.0, 0.0); rank * rank * n_nodes],
        }
    }

    pub fn from_matrices(rank: usize, mats: impl IntoIterator<Item = CMatrix>) -> Self {
        let mut data = Vec::new();
        for m in mats {
            assert_eq!(m.shape(), (rank, rank));
            data.extend_from_slice(m.as_slice());
        }
        Self { rank, data }
    }

    /// Builds a field by evaluating `f` at every node (in parallel, order preserved).
    pub fn from_fn(geom: &BaseGeometry, rank: usize, f: impl Fn(usize) -> CMatrix + Sync) -> Self {
        let mats: Vec<CMatrix> = (0..geom.n_nodes()).into_par_iter().map(&f).collect();
        Self::from_matrices(rank, mats)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_nodes(&self) -> usize {
        self.data.len() / (self.rank * self.rank)
    }

    pub fn view(&self, node: usize) -> DMatrixView<'_, Complex64> {
        let s = self.rank * self.rank;
        DMatrixView::from_slice(&self.data[node * s..(node + 1) * s], self.rank, self.rank)
    }

    pub fn at(&self, node: usize) -> CMatrix {
        self.view(node).into_owned()
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.data
    }

    /// Entry `(i, j)` at every node.
    pub fn entry(&self, i: usize, j: usize) -> Vec<Complex64> {
        let s = self.rank * self.rank;
        let off = j * self.rank + i;
        self.data.chunks(s).map(|m| m[off]).collect()
    }

    pub fn set_entry(&mut self, i: usize, j: usize, values: &[Complex64]) {
        let s = self.rank * self.rank;
        let off = j * self.rank + i;
        for (m, v) in self.data.chunks_mut(s).zip(values) {
            m[off] = *v;
        }
    }

    /// Pointwise map, evaluated in parallel.
    pub fn map(&self, f: impl Fn(usize, DMatrixView<'_, Complex64>) -> CMatrix + Sync) -> Self {
        let mats: Vec<CMatrix> = (0..self.n_nodes())
            .into_par_iter()
            .map(|n| f(n, self.view(n)))
            .collect();
        let rank = mats.first().map_or(self.rank, |m| m.nrows());
        Self::from_matrices(rank, mats)
    }

    /// Pointwise combination of two fields of equal size.
    pub fn zip_map(
        &self,
        other: &Self,
        f: impl Fn(usize, DMatrixView<'_, Complex64>, DMatrixView<'_, Complex64>) -> CMatrix + Sync,
    ) -> Result<Self> {
        if self.n_nodes() != other.n_nodes() {
            return Err(Error::NodeCountMismatch {
                expected: self.n_nodes(),
                got: other.n_nodes(),
            });
        }
        let mats: Vec<CMatrix> = (0..self.n_nodes())
            .into_par_iter()
            .map(|n| f(n, self.view(n), other.view(n)))
            .collect();
        let rank = mats.first().map_or(self.rank, |m| m.nrows());
        Ok(Self::from_matrices(rank, mats))
    }

    /// Pointwise real scalar per node.
    pub fn scalar_map(&self, f: impl Fn(usize, DMatrixView<'_, Complex64>) -> f64 + Sync) -> Vec<f64> {
        (0..self.n_nodes())
            .into_par_iter()
            .map(|n| f(n, self.view(n)))
            .collect()
    }

    fn entrywise(&self, op: impl Fn(&[Complex64]) -> Result<Vec<Complex64>> + Sync) -> Result<Self> {
        let r = self.rank;
        let columns: Vec<Vec<Complex64>> = (0..r * r)
            .into_par_iter()
            .map(|e| op(&self.entry(e % r, e / r)))
            .collect::<Result<_>>()?;
        let mut out = Self::zeros(r, self.n_nodes());
        for (e, col) in columns.iter().enumerate() {
            out.set_entry(e % r, e / r, col);
        }
        Ok(out)
    }

    /// Componentwise `∂/∂z` in chart coordinates.
    pub fn d_dz(&self, geom: &BaseGeometry) -> Result<Self> {
        self.entrywise(|f| geom.d_dz(f))
    }

    /// Componentwise `∂/∂z̄` in chart coordinates.
    pub fn d_dzbar(&self, geom: &BaseGeometry) -> Result<Self> {
        self.entrywise(|f| geom.d_dzbar(f))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rank: self.rank,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |_, a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |_, a, b| a - b)
    }

    /// Largest pointwise Frobenius norm.
    pub fn sup_norm(&self) -> f64 {
        self.scalar_map(|_, m| m.norm()).into_iter().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Hermitian part `(m + m*)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn identity(rank: usize) -> CMatrix {
    CMatrix::identity(rank, rank)
}

pub fn real_diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = Complex64::new(*v, 0.0);
    }
    m
}
