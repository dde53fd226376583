//! Block-row and symmetric block matrix types, and the linear maps that
//! connect them.
//!
//! A [`BlockRow`] collects the lag blocks `[W0 W1 ... Wp]` of a matrix
//! pseudo-polynomial (`W0` symmetric). A [`SymBlockMatrix`] is a dense real
//! symmetric matrix of size `m(p+1)` addressed in `m x m` blocks. The
//! operator [`toeplitz`] assembles a symmetric block Toeplitz matrix from a
//! block row, and [`adjoint`] is its adjoint with respect to [`inner_q`] /
//! [`inner_m`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Element of the space `M_{m,p}`: lag blocks `[W0 W1 ... Wp]`, each `m x m`,
/// with `W0` symmetric. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow {
    m: usize,
    p: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockRow {
    /// Builds a block row from `p+1` square blocks of equal size. The first
    /// block is symmetrized as `(W0 + W0^T)/2`.
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::DimensionMismatch(
                "block row needs at least one block".into(),
            ));
        }
        let m = blocks[0].nrows();
        if m == 0 {
            return Err(Error::DimensionMismatch("blocks must be non-empty".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != m || b.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "block {} is {}x{}, expected {}x{}",
                    k,
                    b.nrows(),
                    b.ncols(),
                    m,
                    m
                )));
            }
        }
        let p = blocks.len() - 1;
        let mut blocks = blocks;
        let sym = (&blocks[0] + blocks[0].transpose()) * 0.5;
        blocks[0] = sym;
        Ok(Self { m, p, blocks })
    }

    pub fn zeros(m: usize, p: usize) -> Self {
        Self {
            m,
            p,
            blocks: (0..=p).map(|_| DMatrix::zeros(m, m)).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Norm induced by [`inner_m`].
    pub fn norm(&self) -> f64 {
        inner_m(self, self).expect("same shape").sqrt()
    }

    /// `self + alpha * other`.
    pub fn scaled_add(&self, alpha: f64, other: &BlockRow) -> BlockRow {
        assert_eq!((self.m, self.p), (other.m, other.p), "shape mismatch");
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b * alpha)
            .collect();
        BlockRow {
            m: self.m,
            p: self.p,
            blocks,
        }
    }

    pub fn scale(&self, alpha: f64) -> BlockRow {
        BlockRow {
            m: self.m,
            p: self.p,
            blocks: self.blocks.iter().map(|b| b * alpha).collect(),
        }
    }

    pub fn sub(&self, other: &BlockRow) -> BlockRow {
        self.scaled_add(-1.0, other)
    }
}

/// Element of `Q_{m(p+1)}`: a dense real symmetric matrix of order `m(p+1)`,
/// addressable in `(p+1)^2` blocks of size `m x m`. Construction symmetrizes
/// the data; values are immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBlockMatrix {
    m: usize,
    p: usize,
    data: DMatrix<f64>,
}

impl SymBlockMatrix {
    /// Wraps a square matrix of order `m(p+1)`, symmetrizing it as
    /// `(A + A^T)/2`.
    pub fn new(m: usize, p: usize, data: DMatrix<f64>) -> Result<Self> {
        let n = m * (p + 1);
        if m == 0 {
            return Err(Error::DimensionMismatch("m must be positive".into()));
        }
        if data.nrows() != n || data.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected {}x{}",
                data.nrows(),
                data.ncols(),
                n,
                n
            )));
        }
        let sym = (&data + data.transpose()) * 0.5;
        Ok(Self { m, p, data: sym })
    }

    pub fn zeros(m: usize, p: usize) -> Self {
        let n = m * (p + 1);
        Self {
            m,
            p,
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(m: usize, p: usize) -> Self {
        Self::scaled_identity(m, p, 1.0)
    }

    pub fn scaled_identity(m: usize, p: usize, alpha: f64) -> Self {
        let n = m * (p + 1);
        Self {
            m,
            p,
            data: DMatrix::identity(n, n) * alpha,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Matrix order `m(p+1)`.
    pub fn order(&self) -> usize {
        self.m * (self.p + 1)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Copy of block `(h, k)` in the `m x m` partition.
    pub fn block(&self, h: usize, k: usize) -> DMatrix<f64> {
        let m = self.m;
        self.data.view((h * m, k * m), (m, m)).into_owned()
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.norm()
    }

    /// `self + alpha * other`.
    pub fn scaled_add(&self, alpha: f64, other: &SymBlockMatrix) -> SymBlockMatrix {
        assert_eq!((self.m, self.p), (other.m, other.p), "shape mismatch");
        SymBlockMatrix {
            m: self.m,
            p: self.p,
            data: &self.data + &other.data * alpha,
        }
    }

    pub fn scale(&self, alpha: f64) -> SymBlockMatrix {
        SymBlockMatrix {
            m: self.m,
            p: self.p,
            data: &self.data * alpha,
        }
    }

    pub fn add(&self, other: &SymBlockMatrix) -> SymBlockMatrix {
        self.scaled_add(1.0, other)
    }

    pub fn sub(&self, other: &SymBlockMatrix) -> SymBlockMatrix {
        self.scaled_add(-1.0, other)
    }

    /// Adds `alpha` to the diagonal.
    pub fn shift_diag(&self, alpha: f64) -> SymBlockMatrix {
        let mut data = self.data.clone();
        for i in 0..data.nrows() {
            data[(i, i)] += alpha;
        }
        SymBlockMatrix {
            m: self.m,
            p: self.p,
            data,
        }
    }
}

/// Assembles the symmetric block Toeplitz matrix of `W`: block `(h, k)` is
/// `W_{k-h}` for `h <= k` and `W_{h-k}^T` for `h > k`.
pub fn toeplitz(w: &BlockRow) -> SymBlockMatrix {
    let (m, p) = (w.m, w.p);
    let n = m * (p + 1);
    let mut data = DMatrix::zeros(n, n);
    for h in 0..=p {
        for k in 0..=p {
            let block = if k >= h {
                w.blocks[k - h].clone()
            } else {
                w.blocks[h - k].transpose()
            };
            data.view_mut((h * m, k * m), (m, m)).copy_from(&block);
        }
    }
    SymBlockMatrix { m, p, data }
}

/// Adjoint of [`toeplitz`]: returns `W` with `W0 = sum_h X_hh` and
/// `W_j = 2 sum_{h=0}^{p-j} X_{h,h+j}` for `j >= 1`. `W0` is symmetrized.
pub fn adjoint(x: &SymBlockMatrix) -> BlockRow {
    let (m, p) = (x.m, x.p);
    let mut blocks = Vec::with_capacity(p + 1);
    for j in 0..=p {
        let mut acc = DMatrix::zeros(m, m);
        for h in 0..=(p - j) {
            acc += x.data.view((h * m, (h + j) * m), (m, m));
        }
        if j > 0 {
            acc *= 2.0;
        }
        blocks.push(acc);
    }
    let sym0 = (&blocks[0] + blocks[0].transpose()) * 0.5;
    blocks[0] = sym0;
    BlockRow { m, p, blocks }
}

/// Trace inner product `trace(A B)` on `Q_{m(p+1)}`.
pub fn inner_q(a: &SymBlockMatrix, b: &SymBlockMatrix) -> Result<f64> {
    if (a.m, a.p) != (b.m, b.p) {
        return Err(Error::DimensionMismatch(format!(
            "inner_q: (m,p)=({},{}) vs ({},{})",
            a.m, a.p, b.m, b.p
        )));
    }
    // trace(AB) = sum_i row_i(A) . col_i(B); avoids forming the product.
    let n = a.data.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a.data[(i, j)] * b.data[(j, i)];
        }
    }
    Ok(acc)
}

/// Inner product on `M_{m,p}` making [`adjoint`] the adjoint of [`toeplitz`]:
/// `trace(V0^T W0) + sum_{j>=1} trace(V_j^T W_j)`.
pub fn inner_m(v: &BlockRow, w: &BlockRow) -> Result<f64> {
    if (v.m, v.p) != (w.m, w.p) {
        return Err(Error::DimensionMismatch(format!(
            "inner_m: (m,p)=({},{}) vs ({},{})",
            v.m, v.p, w.m, w.p
        )));
    }
    let mut acc = 0.0;
    for (a, b) in v.blocks.iter().zip(&w.blocks) {
        acc += a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(acc)
}
