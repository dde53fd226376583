//! Primal recovery, spectral decomposition, support/rank detection, latent
//! components, and model scoring.
//!
//! After the solver converges, the primal pair is recovered as
//! `X* = -grad psi(C + T(Z*))` (positive semidefinite with `X*_00` positive
//! definite by construction) and `L* = project_psd(-M*)` from the converged
//! multiplier. The inverse manifest spectrum decomposes as
//! `Sigma(theta) - Lambda(theta)` with `Sigma - Lambda = Delta X Delta^*`
//! and `Lambda = Delta L Delta^*` on the unit circle; the latent components
//! are the pointwise eigenvectors of `Lambda(theta)`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Cholesky, Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::blockmat::{adjoint, inner_q, toeplitz, BlockRow, SymBlockMatrix};
use crate::error::{Error, Result};
use crate::objective::{psi, psi_grad};
use crate::projections::{c1_violation, min_eigenvalue, project_psd};
use crate::solver::{solve_with, IterationRecord, SolverConfig};

/// KKT and duality diagnostics of a recovered model. `comp_slack` is scaled
/// by `1 + ||L*||_F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub c1_violation: f64,
    /// Smallest eigenvalue of `lambda I + T(Z*)`.
    pub shift_min_eig: f64,
    pub x_min_eig: f64,
    pub x00_min_eig: f64,
    pub l_min_eig: f64,
    /// `|<lambda I + T(Z*), L*>| / (1 + ||L*||_F)`.
    pub comp_slack: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub final_norm_r: f64,
    pub final_norm_s: f64,
    pub final_eps_pri: f64,
    pub final_eps_dual: f64,
}

/// A fitted sparse plus low-rank model.
#[derive(Debug, Clone)]
pub struct SLModel {
    pub m: usize,
    pub p: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub z_star: BlockRow,
    pub x_star: SymBlockMatrix,
    /// Rank-truncated positive semidefinite latent part.
    pub l_star: SymBlockMatrix,
    /// Symmetric boolean edge matrix with zero diagonal.
    pub support: DMatrix<bool>,
    pub rank: usize,
    pub converged: bool,
    pub iterations: usize,
    pub stalls: usize,
    pub kkt: KktReport,
}

impl SLModel {
    pub fn nnz_pairs(&self) -> usize {
        let m = self.support.nrows();
        let mut count = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                if self.support[(i, j)] {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Options for [`fit`] beyond the solver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Relative edge-detection threshold.
    pub support_threshold: f64,
    /// Relative eigenvalue threshold for the rank of `L*`.
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            support_threshold: 1e-3,
            rank_tol: 1e-6,
        }
    }
}

/// Recovers the primal pair from the dual solution: `X*` from dual
/// stationarity and `L*` from the converged multiplier. The multiplier
/// iterates are negative semidefinite, so the cone multiplier is `-M*`,
/// cleaned by a PSD projection.
pub fn recover_primal(
    z_star: &BlockRow,
    mult_star: &SymBlockMatrix,
    c: &SymBlockMatrix,
) -> Result<(SymBlockMatrix, SymBlockMatrix)> {
    let v = c.add(&toeplitz(z_star));
    let x = psi_grad(&v)?.scale(-1.0);
    let l = project_psd(&mult_star.scale(-1.0))?;
    Ok((x, l))
}

/// Keeps the eigenvalues of a PSD matrix above `rank_tol` times
/// `max(largest eigenvalue, scale)`; returns the truncated matrix and its
/// numerical rank. The caller passes the scale of the companion sparse part
/// so that a noise-level multiplier collapses to rank zero instead of
/// passing a purely relative test against itself.
fn truncate_psd(a: &SymBlockMatrix, rank_tol: f64, scale: f64) -> Result<(SymBlockMatrix, usize)> {
    let eig = SymmetricEigen::try_new(a.data().clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure)?;
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = rank_tol * max.max(scale);
    if max <= cutoff {
        return Ok((SymBlockMatrix::zeros(a.m(), a.p()), 0));
    }
    let mut rank = 0;
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let keep = l > cutoff;
        if keep {
            rank += 1;
        }
        scaled.column_mut(j).scale_mut(if keep { l } else { 0.0 });
    }
    let out = scaled * eig.eigenvectors.transpose();
    Ok((SymBlockMatrix::new(a.m(), a.p(), out)?, rank))
}

/// Per-pair interaction strength of the lag blocks `W`:
/// `max{|(W0)_{ij}|, max_k |(Wk)_{ij}|, max_k |(Wk)_{ji}|}` for `i < j`.
fn pair_strengths(w: &BlockRow) -> DMatrix<f64> {
    let m = w.m();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let mut s = w.block(0)[(i, j)].abs();
            for k in 1..=w.p() {
                s = s.max(w.block(k)[(i, j)].abs());
                s = s.max(w.block(k)[(j, i)].abs());
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// The structured sparsity measure of the primal: the sum of the per-pair
/// strengths of `W`.
pub fn h_measure(w: &BlockRow) -> f64 {
    let strengths = pair_strengths(w);
    let m = w.m();
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += strengths[(i, j)];
        }
    }
    total
}

/// Detects the conditional-dependence graph from the lag coefficients of
/// the sparse spectral part. Pair `(i,j)` is an edge when its strength
/// exceeds `threshold` times the largest coefficient magnitude (pairs and
/// diagonals both counted in the reference, so an all-noise pattern stays
/// empty). The diagonal is always false.
pub fn detect_support(sparse_part: &SymBlockMatrix, threshold: f64) -> DMatrix<bool> {
    let w = adjoint(sparse_part);
    let m = w.m();
    let strengths = pair_strengths(&w);
    let mut reference = 0.0f64;
    for k in 0..=w.p() {
        for i in 0..m {
            reference = reference.max(w.block(k)[(i, i)].abs());
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            reference = reference.max(strengths[(i, j)]);
        }
    }
    DMatrix::from_fn(m, m, |i, j| {
        i != j && strengths[(i, j)] > threshold * reference
    })
}

/// Fits a model: covariance matrix in, recovered and diagnosed model out.
pub fn fit(c: &SymBlockMatrix, config: &SolverConfig, opts: &FitOptions) -> Result<SLModel> {
    fit_with(c, config, opts, |_| {})
}

/// [`fit`] with a per-iteration sink streaming the solver log.
pub fn fit_with(
    c: &SymBlockMatrix,
    config: &SolverConfig,
    opts: &FitOptions,
    on_iteration: impl FnMut(&IterationRecord),
) -> Result<SLModel> {
    let state = solve_with(c, config, on_iteration)?;
    let (x_raw, l_raw) = recover_primal(&state.z, &state.mult, c)?;
    let (l_star, rank) = truncate_psd(&l_raw, opts.rank_tol, x_raw.norm_fro())?;
    let support = detect_support(&x_raw.add(&l_star), opts.support_threshold);

    let shift = toeplitz(&state.z).shift_diag(config.lambda);
    let l_norm = l_star.norm_fro();
    let comp_slack = inner_q(&shift, &l_star)?.abs() / (1.0 + l_norm);
    let x00 = x_raw.block(0, 0);
    let x00_min_eig = SymmetricEigen::try_new(x00.clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure)?
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let primal_objective = match Cholesky::new(x00) {
        Some(chol) => {
            -chol.ln_determinant()
                + inner_q(c, &x_raw)?
                + config.bound() * h_measure(&adjoint(&x_raw.add(&l_star)))
                + config.lambda * l_star.data().trace()
        }
        None => f64::NAN,
    };
    let dual_objective = -psi(&c.add(&toeplitz(&state.z)))?;
    let last = state.history.last();
    let kkt = KktReport {
        c1_violation: c1_violation(&state.z, config.bound()),
        shift_min_eig: min_eigenvalue(&shift)?,
        x_min_eig: min_eigenvalue(&x_raw)?,
        x00_min_eig,
        l_min_eig: min_eigenvalue(&l_star)?,
        comp_slack,
        primal_objective,
        dual_objective,
        duality_gap: primal_objective - dual_objective,
        final_norm_r: last.map_or(f64::NAN, |r| r.norm_r),
        final_norm_s: last.map_or(f64::NAN, |r| r.norm_s),
        final_eps_pri: last.map_or(f64::NAN, |r| r.eps_pri),
        final_eps_dual: last.map_or(f64::NAN, |r| r.eps_dual),
    };

    if state.converged {
        let tol = 100.0 * kkt.final_eps_pri.max(kkt.final_eps_dual);
        let worst = (-kkt.shift_min_eig).max(kkt.comp_slack).max(kkt.c1_violation);
        if worst > tol {
            return Err(Error::DegenerateRecovery(format!(
                "KKT residual {worst:.3e} exceeds 100x solver tolerance {tol:.3e}"
            )));
        }
    }

    Ok(SLModel {
        m: c.m(),
        p: c.p(),
        lambda: config.lambda,
        gamma: config.gamma,
        z_star: state.z,
        x_star: x_raw,
        l_star,
        support,
        rank,
        converged: state.converged,
        iterations: state.iter,
        stalls: state.stalls,
        kkt,
    })
}

/// Unregularized primal data-fit term `-log det X*_00 + <C, X*>`.
/// Infinite for degenerate models.
pub fn fit_term(model: &SLModel, c: &SymBlockMatrix) -> f64 {
    let x00 = model.x_star.block(0, 0);
    match Cholesky::new(x00) {
        Some(chol) => match inner_q(c, &model.x_star) {
            Ok(ip) => -chol.ln_determinant() + ip,
            Err(_) => f64::INFINITY,
        },
        None => f64::INFINITY,
    }
}

/// Model selection score: data fit plus a complexity penalty. Lower is
/// better. The fit term is the unregularized primal objective
/// `-log det X*_00 + <C, X*>`; the penalty charges `(log N / N)` per free
/// parameter, with `d = nnz_pairs (2p+1) + m(p+1) + rank * m`.
pub fn score(model: &SLModel, c: &SymBlockMatrix, n_samples: usize) -> f64 {
    let fit = fit_term(model, c);
    let d = (model.nnz_pairs() * (2 * model.p + 1)
        + model.m * (model.p + 1)
        + model.rank * model.m) as f64;
    let n = n_samples as f64;
    fit + (n.ln() / n) * d
}

/// Frequency-sampled spectral decomposition on a uniform grid of
/// `[0, 2 pi)`: `Lambda(theta) = Delta L* Delta^*` and
/// `Sigma(theta) = Delta X* Delta^* + Lambda(theta)`, plus the latent
/// components once [`latent_components`] has filled them.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    pub thetas: Vec<f64>,
    pub sigma: Vec<DMatrix<Complex<f64>>>,
    pub lambda: Vec<DMatrix<Complex<f64>>>,
    /// Per-theta `m x l` component matrices (columns are unit eigenvectors
    /// of `Lambda(theta)`, phase-aligned).
    pub components: Vec<DMatrix<Complex<f64>>>,
    /// Per-theta leading eigenvalues, one per component.
    pub singvals: Vec<Vec<f64>>,
    pub rank: usize,
}

impl SpectralFactor {
    /// Index of the grid point at `theta = 0`.
    pub fn index_zero(&self) -> usize {
        0
    }

    /// Index of the grid point at `theta = pi` (grids of even size only).
    pub fn index_pi(&self) -> Option<usize> {
        let k = self.thetas.len();
        k.is_multiple_of(2).then_some(k / 2)
    }
}

/// Evaluates the pseudo-polynomial `Delta(theta) Q Delta(theta)^*` of a
/// symmetric block matrix at one frequency; Hermitian by construction.
fn pseudo_poly_eval(q: &SymBlockMatrix, theta: f64) -> DMatrix<Complex<f64>> {
    let (m, p) = (q.m(), q.p());
    let mut acc = DMatrix::<Complex<f64>>::zeros(m, m);
    for h in 0..=p {
        for k in 0..=p {
            let phase = Complex::from_polar(1.0, (h as f64 - k as f64) * theta);
            let block = q.data().view((h * m, k * m), (m, m));
            for i in 0..m {
                for j in 0..m {
                    acc[(i, j)] += phase * block[(i, j)];
                }
            }
        }
    }
    let herm = acc.adjoint();
    (acc + herm) * Complex::new(0.5, 0.0)
}

/// Samples `Sigma` and `Lambda` on a uniform grid of `k_grid` frequencies.
/// Components are left empty; see [`latent_components`].
pub fn spectra(x_star: &SymBlockMatrix, l_star: &SymBlockMatrix, k_grid: usize) -> SpectralFactor {
    assert!(k_grid >= 1, "grid must be non-empty");
    let m = x_star.m();
    let thetas: Vec<f64> = (0..k_grid)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / k_grid as f64)
        .collect();
    let mut sigma = Vec::with_capacity(k_grid);
    let mut lambda = Vec::with_capacity(k_grid);
    for &theta in &thetas {
        let lam = pseudo_poly_eval(l_star, theta);
        let sig = pseudo_poly_eval(x_star, theta) + &lam;
        sigma.push(sig);
        lambda.push(lam);
    }
    SpectralFactor {
        thetas,
        sigma,
        lambda,
        components: vec![DMatrix::zeros(m, 0); k_grid],
        singvals: vec![Vec::new(); k_grid],
        rank: 0,
    }
}

/// Fills the latent components: per frequency, the leading eigenpairs of
/// the Hermitian PSD `Lambda(theta)`. The number of components is the
/// largest per-frequency count of eigenvalues above `rank_tol` times the
/// global maximum. Each column is phase-aligned so its largest-magnitude
/// entry is real and positive, making component curves continuous in theta
/// and reproducible.
pub fn latent_components(sf: SpectralFactor, rank_tol: f64) -> Result<SpectralFactor> {
    let mut sf = sf;
    let m = sf.sigma.first().map_or(0, |s| s.nrows());
    let mut eigs = Vec::with_capacity(sf.lambda.len());
    let mut global_max = 0.0f64;
    for lam in &sf.lambda {
        let eig = SymmetricEigen::try_new(lam.clone(), f64::EPSILON, 0)
            .ok_or(Error::EigenFailure)?;
        global_max = global_max.max(eig.eigenvalues.iter().cloned().fold(0.0, f64::max));
        eigs.push(eig);
    }
    let rank = if global_max <= 0.0 {
        0
    } else {
        eigs.iter()
            .map(|e| {
                e.eigenvalues
                    .iter()
                    .filter(|&&l| l > rank_tol * global_max)
                    .count()
            })
            .max()
            .unwrap_or(0)
    };

    let mut components = Vec::with_capacity(eigs.len());
    let mut singvals = Vec::with_capacity(eigs.len());
    for eig in &eigs {
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap()
        });
        let mut comp = DMatrix::<Complex<f64>>::zeros(m, rank);
        let mut vals = Vec::with_capacity(rank);
        for (col, &idx) in order.iter().take(rank).enumerate() {
            let mut v: Vec<Complex<f64>> = eig.eigenvectors.column(idx).iter().cloned().collect();
            // Phase alignment: rotate so the largest-magnitude entry is
            // real and positive.
            let (mut best, mut best_norm) = (0usize, 0.0f64);
            for (i, c) in v.iter().enumerate() {
                if c.norm() > best_norm {
                    best_norm = c.norm();
                    best = i;
                }
            }
            if best_norm > 0.0 {
                let phase = v[best] / Complex::from(best_norm);
                for c in v.iter_mut() {
                    *c *= phase.conj();
                }
            }
            for (i, c) in v.iter().enumerate() {
                comp[(i, col)] = *c;
            }
            vals.push(eig.eigenvalues[idx].max(0.0));
        }
        components.push(comp);
        singvals.push(vals);
    }
    sf.components = components;
    sf.singvals = singvals;
    sf.rank = rank;
    Ok(sf)
}

/// Long-format CSV of the components: `theta,component,channel,re,im,singval`.
pub fn write_components_csv(sf: &SpectralFactor, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "theta,component,channel,re,im,singval")?;
    for (k, &theta) in sf.thetas.iter().enumerate() {
        for comp in 0..sf.rank {
            for channel in 0..sf.components[k].nrows() {
                let c = sf.components[k][(channel, comp)];
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    theta,
                    comp,
                    channel,
                    c.re,
                    c.im,
                    sf.singvals[k][comp]
                )?;
            }
        }
    }
    Ok(())
}

/// Same format as [`write_components_csv`], restricted to the
/// `theta = 0` and `theta = pi` slices.
pub fn write_component_slices_csv(sf: &SpectralFactor, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "theta,component,channel,re,im,singval")?;
    let mut indices = vec![sf.index_zero()];
    if let Some(k) = sf.index_pi() {
        indices.push(k);
    }
    for k in indices {
        for comp in 0..sf.rank {
            for channel in 0..sf.components[k].nrows() {
                let c = sf.components[k][(channel, comp)];
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    sf.thetas[k],
                    comp,
                    channel,
                    c.re,
                    c.im,
                    sf.singvals[k][comp]
                )?;
            }
        }
    }
    Ok(())
}

/// Long-format CSV of the sampled spectra: `theta,matrix,i,j,re,im` with
/// `matrix` in `{sigma, lambda}`.
pub fn write_spectra_csv(sf: &SpectralFactor, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "theta,matrix,i,j,re,im")?;
    for (k, &theta) in sf.thetas.iter().enumerate() {
        for (name, mat) in [("sigma", &sf.sigma[k]), ("lambda", &sf.lambda[k])] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    let c = mat[(i, j)];
                    writeln!(w, "{},{},{},{},{},{}", theta, name, i, j, c.re, c.im)?;
                }
            }
        }
    }
    Ok(())
}

const MODEL_SCHEMA: &str = "slgm-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    m: usize,
    p: usize,
    lambda: f64,
    gamma: f64,
    rank: usize,
    converged: bool,
    iterations: usize,
    stalls: usize,
    z_star: Vec<Vec<Vec<f64>>>,
    x_star: Vec<Vec<f64>>,
    l_star: Vec<Vec<f64>>,
    support: Vec<Vec<bool>>,
    kkt: KktReport,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: "ragged matrix rows".into(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SLModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            schema: MODEL_SCHEMA.to_string(),
            m: self.m,
            p: self.p,
            lambda: self.lambda,
            gamma: self.gamma,
            rank: self.rank,
            converged: self.converged,
            iterations: self.iterations,
            stalls: self.stalls,
            z_star: self.z_star.blocks().iter().map(matrix_rows).collect(),
            x_star: matrix_rows(self.x_star.data()),
            l_star: matrix_rows(self.l_star.data()),
            support: (0..self.m)
                .map(|i| (0..self.m).map(|j| self.support[(i, j)]).collect())
                .collect(),
            kkt: self.kkt.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<SLModel> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "unsupported model schema '{}', expected '{}'",
                file.schema, MODEL_SCHEMA
            )));
        }
        let blocks = file
            .z_star
            .iter()
            .map(|rows| rows_matrix(rows))
            .collect::<Result<Vec<_>>>()?;
        let support_rows = &file.support;
        let m = file.m;
        if support_rows.len() != m || support_rows.iter().any(|r| r.len() != m) {
            return Err(Error::Parse {
                row: 0,
                col: 0,
                msg: "support matrix has wrong shape".into(),
            });
        }
        Ok(SLModel {
            m: file.m,
            p: file.p,
            lambda: file.lambda,
            gamma: file.gamma,
            z_star: BlockRow::new(blocks)?,
            x_star: SymBlockMatrix::new(file.m, file.p, rows_matrix(&file.x_star)?)?,
            l_star: SymBlockMatrix::new(file.m, file.p, rows_matrix(&file.l_star)?)?,
            support: DMatrix::from_fn(m, m, |i, j| support_rows[i][j]),
            rank: file.rank,
            converged: file.converged,
            iterations: file.iterations,
            stalls: file.stalls,
            kkt: file.kkt,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SLModel> {
        let text = fs::read_to_string(path)?;
        SLModel::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recover_primal_identity_data() {
        // C = I at p = 0 with Z* = 0 and M* = 0: X* = I, L* = 0.
        let c = SymBlockMatrix::identity(3, 0);
        let z = BlockRow::zeros(3, 0);
        let mult = SymBlockMatrix::zeros(3, 0);
        let (x, l) = recover_primal(&z, &mult, &c).unwrap();
        assert_relative_eq!(
            (x.data() - DMatrix::identity(3, 3)).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(l.norm_fro(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn spectra_static_case_constant() {
        let mut rng = StdRng::seed_from_u64(3);
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let x = SymBlockMatrix::new(3, 0, &raw * raw.transpose()).unwrap();
        let raw2 = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let l = SymBlockMatrix::new(3, 0, &raw2 * raw2.transpose()).unwrap();
        let sf = spectra(&x, &l, 16);
        for k in 0..16 {
            let diff_lam = (&sf.lambda[k] - &sf.lambda[0]).norm();
            let diff_sig = (&sf.sigma[k] - &sf.sigma[0]).norm();
            assert!(diff_lam <= 1e-12);
            assert!(diff_sig <= 1e-12);
            // Sigma - Lambda = X exactly at p = 0.
            for i in 0..3 {
                for j in 0..3 {
                    let v = sf.sigma[k][(i, j)] - sf.lambda[k][(i, j)];
                    assert_relative_eq!(v.re, x.data()[(i, j)], epsilon = 1e-12);
                    assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn spectra_zero_latent_part() {
        let x = SymBlockMatrix::identity(2, 1);
        let l = SymBlockMatrix::zeros(2, 1);
        let sf = spectra(&x, &l, 8);
        for lam in &sf.lambda {
            assert_relative_eq!(lam.norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn spectra_scalar_cosine_formula() {
        // m=1, p=1, X = [[a, b], [b, a]]: Delta X Delta^* = 2a + 2b cos(theta).
        let (a, b) = (1.3, 0.4);
        let x = SymBlockMatrix::new(1, 1, DMatrix::from_row_slice(2, 2, &[a, b, b, a])).unwrap();
        let l = SymBlockMatrix::zeros(1, 1);
        let sf = spectra(&x, &l, 32);
        for (k, &theta) in sf.thetas.iter().enumerate() {
            let v = sf.sigma[k][(0, 0)] - sf.lambda[k][(0, 0)];
            assert_relative_eq!(v.re, 2.0 * a + 2.0 * b * theta.cos(), epsilon = 1e-12);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectra_conjugate_symmetry() {
        let mut rng = StdRng::seed_from_u64(7);
        let n = 4;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let l = SymBlockMatrix::new(2, 1, &raw * raw.transpose()).unwrap();
        let x = SymBlockMatrix::identity(2, 1);
        let sf = spectra(&x, &l, 16);
        for k in 1..16 {
            let mirrored = &sf.lambda[16 - k];
            let conj = sf.lambda[k].map(|c| c.conj());
            assert!((mirrored - conj).norm() <= 1e-12);
        }
    }

    #[test]
    fn latent_components_rank_one() {
        // L = v v^T at p = 0: one component equal to +/- v/|v|, singular
        // value |v|^2, constant over theta.
        let v = DMatrix::from_row_slice(3, 1, &[0.6, 0.0, 0.8]);
        let l = SymBlockMatrix::new(3, 0, &v * v.transpose()).unwrap();
        let x = SymBlockMatrix::identity(3, 0);
        let sf = latent_components(spectra(&x, &l, 8), 1e-10).unwrap();
        assert_eq!(sf.rank, 1);
        for k in 0..8 {
            assert_relative_eq!(sf.singvals[k][0], 1.0, epsilon = 1e-12);
            for i in 0..3 {
                let got = sf.components[k][(i, 0)];
                assert_relative_eq!(got.re, v[(i, 0)], epsilon = 1e-10);
                assert_relative_eq!(got.im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn latent_components_zero_rank() {
        let x = SymBlockMatrix::identity(2, 1);
        let l = SymBlockMatrix::zeros(2, 1);
        let sf = latent_components(spectra(&x, &l, 8), 1e-10).unwrap();
        assert_eq!(sf.rank, 0);
        for k in 0..8 {
            assert_eq!(sf.components[k].ncols(), 0);
            assert!(sf.singvals[k].is_empty());
        }
    }

    #[test]
    fn latent_components_reconstruct_lambda() {
        let mut rng = StdRng::seed_from_u64(11);
        // Rank-2 latent part at p = 1.
        let factor = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let l = SymBlockMatrix::new(2, 1, &factor * factor.transpose()).unwrap();
        let x = SymBlockMatrix::identity(2, 1);
        let sf = latent_components(spectra(&x, &l, 16), 1e-9).unwrap();
        assert_eq!(sf.rank, 2);
        for k in 0..16 {
            let mut rebuilt = DMatrix::<Complex<f64>>::zeros(2, 2);
            for comp in 0..sf.rank {
                let col = sf.components[k].column(comp);
                let sv = Complex::from(sf.singvals[k][comp]);
                for i in 0..2 {
                    for j in 0..2 {
                        rebuilt[(i, j)] += sv * col[i] * col[j].conj();
                    }
                }
            }
            let err = (&rebuilt - &sf.lambda[k]).norm();
            assert!(
                err <= 1e-8 * sf.lambda[k].norm().max(1e-12),
                "reconstruction error {err}"
            );
        }
    }

    #[test]
    fn detect_support_block_diagonal() {
        // Two decoupled groups: no cross edges.
        let mut data = DMatrix::zeros(4, 4);
        data.view_mut((0, 0), (2, 2))
            .copy_from(&DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 2.0]));
        data.view_mut((2, 2), (2, 2))
            .copy_from(&DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 2.0]));
        let q = SymBlockMatrix::new(4, 0, data).unwrap();
        let support = detect_support(&q, 1e-3);
        assert!(support[(0, 1)]);
        assert!(support[(2, 3)]);
        assert!(!support[(0, 2)]);
        assert!(!support[(0, 3)]);
        assert!(!support[(1, 2)]);
        for i in 0..4 {
            assert!(!support[(i, i)]);
        }
    }

    #[test]
    fn detect_support_zero_threshold_complete() {
        let mut rng = StdRng::seed_from_u64(13);
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(0.5..1.5));
        let q = SymBlockMatrix::new(3, 0, raw).unwrap();
        let support = detect_support(&q, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(support[(i, j)], i != j);
            }
        }
    }

    #[test]
    fn detect_support_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(17);
        let raw = DMatrix::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = SymBlockMatrix::new(4, 1, &raw * raw.transpose()).unwrap();
        let a = detect_support(&q, 1e-2);
        let b = detect_support(&q.scale(1234.5), 1e-2);
        assert_eq!(a, b);
    }

    #[test]
    fn detect_support_noise_floor_stays_empty() {
        // A diagonal pattern with tiny off-diagonal noise must not produce
        // a complete graph under relative thresholding.
        let mut rng = StdRng::seed_from_u64(19);
        let data = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                1.0
            } else {
                1e-13 * rng.random_range(-1.0..1.0)
            }
        });
        let q = SymBlockMatrix::new(4, 0, data).unwrap();
        let support = detect_support(&q, 1e-3);
        assert!(support.iter().all(|&e| !e));
    }

    fn toy_model(rank: usize, nnz_override: Option<DMatrix<bool>>) -> SLModel {
        let m = 3;
        let support = nnz_override.unwrap_or_else(|| DMatrix::from_element(m, m, false));
        SLModel {
            m,
            p: 1,
            lambda: 0.5,
            gamma: 1.0,
            z_star: BlockRow::zeros(m, 1),
            x_star: SymBlockMatrix::identity(m, 1),
            l_star: SymBlockMatrix::zeros(m, 1),
            support,
            rank,
            converged: true,
            iterations: 10,
            stalls: 0,
            kkt: KktReport {
                c1_violation: 0.0,
                shift_min_eig: 0.5,
                x_min_eig: 0.0,
                x00_min_eig: 1.0,
                l_min_eig: 0.0,
                comp_slack: 0.0,
                primal_objective: 0.0,
                dual_objective: 0.0,
                duality_gap: 0.0,
                final_norm_r: 0.0,
                final_norm_s: 0.0,
                final_eps_pri: 1e-4,
                final_eps_dual: 1e-4,
            },
        }
    }

    #[test]
    fn score_penalizes_extra_edges() {
        let c = SymBlockMatrix::identity(3, 1);
        let sparse = toy_model(0, None);
        let mut edges = DMatrix::from_element(3, 3, false);
        edges[(0, 1)] = true;
        edges[(1, 0)] = true;
        let dense = toy_model(0, Some(edges));
        let s1 = score(&sparse, &c, 1000);
        let s2 = score(&dense, &c, 1000);
        assert!(s2 > s1);
    }

    #[test]
    fn score_penalty_vanishes_with_n() {
        let c = SymBlockMatrix::identity(3, 1);
        let a = toy_model(0, None);
        let b = toy_model(2, None);
        let gap_small_n = score(&b, &c, 100) - score(&a, &c, 100);
        let gap_large_n = score(&b, &c, 100_000_000) - score(&a, &c, 100_000_000);
        assert!(gap_small_n > 0.0);
        assert!(gap_large_n < 1e-4);
    }

    #[test]
    fn model_json_roundtrip() {
        let mut edges = DMatrix::from_element(3, 3, false);
        edges[(0, 2)] = true;
        edges[(2, 0)] = true;
        let model = toy_model(1, Some(edges));
        let text = model.to_json();
        let back = SLModel::from_json(&text).unwrap();
        assert_eq!(back.m, model.m);
        assert_eq!(back.p, model.p);
        assert_eq!(back.rank, model.rank);
        assert_eq!(back.support, model.support);
        assert_relative_eq!(
            back.x_star.sub(&model.x_star).norm_fro(),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(back.kkt, model.kkt);
    }

    #[test]
    fn model_json_rejects_unknown_schema() {
        let model = toy_model(0, None);
        let text = model.to_json().replace("slgm-model/1", "slgm-model/999");
        assert!(SLModel::from_json(&text).is_err());
    }

    #[test]
    fn pi_slice_requires_even_grid() {
        let x = SymBlockMatrix::identity(2, 1);
        let l = SymBlockMatrix::zeros(2, 1);
        assert_eq!(spectra(&x, &l, 8).index_pi(), Some(4));
        assert_eq!(spectra(&x, &l, 7).index_pi(), None);
        assert_eq!(spectra(&x, &l, 8).index_zero(), 0);
    }

    #[test]
    fn white_noise_static_fit_is_diagonal() {
        // p = 0 on long 2-channel white noise: no spurious edges and a
        // near-diagonal precision at a moderate pair budget.
        use crate::data::{covariance_lags, gen_linear_ar, LinearArConfig};
        let cfg = LinearArConfig {
            n_manifest: 2,
            edges: vec![],
            latent_weights: vec![0.0, 0.0],
            manifest_self: 0.0,
            latent_self: 0.0,
            noise_std: 1.0,
            n_samples: 1 << 15,
            seed: 71,
        };
        let ts = gen_linear_ar(&cfg).unwrap();
        let c = toeplitz(&covariance_lags(&ts, 0).unwrap());
        let mut config = SolverConfig::new(0.5, 0.4 / 0.5);
        config.tau = 1.0;
        config.eps_abs = 1e-9;
        config.eps_rel = 1e-8;
        config.max_iter = 20000;
        let model = fit(&c, &config, &FitOptions::default()).unwrap();
        assert!(model.converged);
        assert_eq!(model.nnz_pairs(), 0, "white noise must yield no edges");
        let off = model.x_star.data()[(0, 1)].abs();
        let diag = model.x_star.data()[(0, 0)].abs();
        assert!(off <= 1e-6 * diag, "off-diagonal {off} vs diagonal {diag}");
    }

    #[test]
    fn null_coupling_dynamic_fit_has_empty_support() {
        // Independent channels at p = 1: the fitted graph stays empty.
        use crate::data::{covariance_lags, gen_linear_ar, LinearArConfig};
        let cfg = LinearArConfig {
            n_manifest: 4,
            edges: vec![],
            latent_weights: vec![0.0; 4],
            manifest_self: 0.3,
            latent_self: 0.0,
            noise_std: 1.0,
            n_samples: 1 << 14,
            seed: 73,
        };
        let ts = gen_linear_ar(&cfg).unwrap();
        let c = toeplitz(&covariance_lags(&ts, 1).unwrap());
        let mut config = SolverConfig::new(0.5, 0.4 / 0.5);
        config.tau = 1.0;
        config.eps_abs = 1e-9;
        config.eps_rel = 1e-8;
        config.max_iter = 20000;
        let model = fit(&c, &config, &FitOptions::default()).unwrap();
        assert!(model.converged);
        assert_eq!(model.nnz_pairs(), 0);
        assert_eq!(model.rank, 0);
    }
}
