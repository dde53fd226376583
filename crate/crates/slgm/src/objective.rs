//! Dual objective, augmented Lagrangian, and their gradients in `Z`.
//!
//! The dual objective is `psi(V) = -log det(S(V)) - m` where `S(V)` is the
//! Schur complement of the trailing `pm x pm` block of `V`. The solver
//! minimizes `psi(C + T(Z))` over the constrained block row `Z`; the
//! augmented Lagrangian couples it to the positive semidefinite splitting
//! variable `Y` with multiplier `M` and penalty `rho`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::blockmat::{adjoint, inner_q, toeplitz, BlockRow, SymBlockMatrix};
use crate::error::{Error, Result};

/// The 2x2 repartition of a `SymBlockMatrix` used by the Schur complement:
/// `head` is the leading `m x m` block, `off` the `pm x m` block below it,
/// and `tail` the trailing `pm x pm` block.
#[derive(Debug, Clone)]
pub struct Partition {
    pub head: DMatrix<f64>,
    pub off: DMatrix<f64>,
    pub tail: DMatrix<f64>,
}

impl Partition {
    pub fn of(v: &SymBlockMatrix) -> Partition {
        let m = v.m();
        let n = v.order();
        let pm = n - m;
        let data = v.data();
        Partition {
            head: data.view((0, 0), (m, m)).into_owned(),
            off: data.view((m, 0), (pm, m)).into_owned(),
            tail: data.view((m, m), (pm, pm)).into_owned(),
        }
    }
}

/// Shared factorization of the Schur complement of `V`; computed once and
/// reused by the objective value and its gradient.
struct SchurFactor {
    /// Schur complement `S = V00 - off^T tail^{-1} off` (just `V00` for p=0).
    s: DMatrix<f64>,
    /// `tail^{-1} off`, empty for p=0.
    tail_solve: DMatrix<f64>,
}

impl SchurFactor {
    fn of(v: &SymBlockMatrix) -> Result<SchurFactor> {
        let m = v.m();
        let part = Partition::of(v);
        if v.p() == 0 {
            return Ok(SchurFactor {
                s: part.head,
                tail_solve: DMatrix::zeros(0, m),
            });
        }
        let chol = Cholesky::new(part.tail).ok_or(Error::SingularBlock)?;
        let tail_solve = chol.solve(&part.off);
        let s = &part.head - part.off.transpose() * &tail_solve;
        let s = (&s + s.transpose()) * 0.5;
        Ok(SchurFactor { s, tail_solve })
    }

    fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.s.clone()).ok_or(Error::NotPositiveDefinite)
    }
}

/// Schur complement `V00 - V_{1:p,0}^T V_{1:p,1:p}^{-1} V_{1:p,0}`; for p=0
/// this is `V00` itself.
pub fn schur(v: &SymBlockMatrix) -> Result<DMatrix<f64>> {
    Ok(SchurFactor::of(v)?.s)
}

/// Dual objective `-log det(schur(V)) - m`. Fails with
/// [`Error::NotPositiveDefinite`] on boundary or infeasible iterates.
pub fn psi(v: &SymBlockMatrix) -> Result<f64> {
    let factor = SchurFactor::of(v)?;
    let chol = factor.cholesky()?;
    Ok(-chol.ln_determinant() - v.m() as f64)
}

/// Gradient of [`psi`]: `G = -K S^{-1} K^T` with `K = [I; -tail^{-1} off]`,
/// so that the directional derivative along symmetric `H` is `inner_q(G, H)`.
pub fn psi_grad(v: &SymBlockMatrix) -> Result<SymBlockMatrix> {
    let m = v.m();
    let n = v.order();
    let factor = SchurFactor::of(v)?;
    let chol = factor.cholesky()?;
    let s_inv = chol.inverse();

    let mut k = DMatrix::zeros(n, m);
    k.view_mut((0, 0), (m, m))
        .copy_from(&DMatrix::identity(m, m));
    if n > m {
        k.view_mut((m, 0), (n - m, m))
            .copy_from(&(-&factor.tail_solve));
    }
    let g = -(&k * s_inv * k.transpose());
    SymBlockMatrix::new(v.m(), v.p(), g)
}

/// Augmented Lagrangian
/// `psi(C + T(Z)) - <M, Y - T(Z) - lambda I> + (rho/2) ||Y - T(Z) - lambda I||_F^2`.
pub fn lagrangian(
    z: &BlockRow,
    y: &SymBlockMatrix,
    mult: &SymBlockMatrix,
    rho: f64,
    c: &SymBlockMatrix,
    lambda: f64,
) -> Result<f64> {
    let tz = toeplitz(z);
    let v = c.add(&tz);
    let gap = y.sub(&tz).shift_diag(-lambda);
    let quad = gap.norm_fro().powi(2);
    Ok(psi(&v)? - inner_q(mult, &gap)? + 0.5 * rho * quad)
}

/// Gradient of [`lagrangian`] with respect to `Z` in the [`inner_m`]
/// geometry: `D(grad psi(C+T(Z)) + M + rho (T(Z) + lambda I - Y))`.
///
/// [`inner_m`]: crate::blockmat::inner_m
pub fn lagrangian_grad_z(
    z: &BlockRow,
    y: &SymBlockMatrix,
    mult: &SymBlockMatrix,
    rho: f64,
    c: &SymBlockMatrix,
    lambda: f64,
) -> Result<BlockRow> {
    let tz = toeplitz(z);
    let v = c.add(&tz);
    let g = psi_grad(&v)?;
    let penalty = tz.shift_diag(lambda).sub(y);
    let combined = g.add(mult).scaled_add(rho, &penalty);
    Ok(adjoint(&combined))
}
