//! ADMM loop for the constrained dual problem.
//!
//! Each iteration performs a projected-gradient step on `Z` (Armijo
//! backtracking along the projection arc), a closed-form update of the
//! positive semidefinite splitting variable `Y`, and the multiplier update
//! for `M`. Termination follows the primal/dual residual rule; the penalty
//! `rho` grows by a factor `tau` per iteration up to `rho_max`.

use crate::blockmat::{adjoint, toeplitz, BlockRow, SymBlockMatrix};
use crate::error::{Error, Result};
use crate::objective::{lagrangian, lagrangian_grad_z, psi};
use crate::projections::{c1_violation, project_c1, project_psd};

/// Armijo backtracking parameters for the projected-gradient `Z` step.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoParams {
    /// Sufficient-decrease fraction, in (0, 1).
    pub sigma: f64,
    /// Step shrink factor, in (0, 1).
    pub beta: f64,
    /// Initial trial step.
    pub t_init: f64,
    /// Trials before declaring a stall.
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            sigma: 0.01,
            beta: 0.5,
            t_init: 1.0,
            max_backtracks: 40,
        }
    }
}

/// Solver configuration. `lambda` and `gamma` are the regularization
/// weights; the remaining fields control the ADMM loop. Deterministic: no
/// seed is involved anywhere in the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub rho0: f64,
    pub tau: f64,
    pub rho_max: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub armijo: ArmijoParams,
    /// Projected-gradient steps per ADMM iteration (default 1).
    pub n_inner: usize,
}

impl SolverConfig {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        SolverConfig {
            lambda,
            gamma,
            rho0: 1.0,
            tau: 1.1,
            rho_max: 1000.0,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            max_iter: 5000,
            armijo: ArmijoParams::default(),
            n_inner: 1,
        }
    }

    /// Pair-budget bound `gamma * lambda` of the `C1` constraints.
    pub fn bound(&self) -> f64 {
        self.gamma * self.lambda
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.into()))
            }
        };
        check(self.lambda > 0.0, "lambda must be positive")?;
        check(self.gamma > 0.0, "gamma must be positive")?;
        check(self.rho0 > 0.0, "rho0 must be positive")?;
        check(self.tau >= 1.0, "tau must be >= 1")?;
        check(self.rho_max >= self.rho0, "rho_max must be >= rho0")?;
        check(self.eps_abs > 0.0, "eps_abs must be positive")?;
        check(self.eps_rel > 0.0, "eps_rel must be positive")?;
        check(self.max_iter > 0, "max_iter must be positive")?;
        let a = &self.armijo;
        check(a.sigma > 0.0 && a.sigma < 1.0, "armijo sigma must be in (0,1)")?;
        check(a.beta > 0.0 && a.beta < 1.0, "armijo beta must be in (0,1)")?;
        check(a.t_init > 0.0, "armijo t_init must be positive")?;
        check(a.max_backtracks > 0, "max_backtracks must be positive")?;
        check(self.n_inner > 0, "n_inner must be positive")?;
        Ok(())
    }
}

/// One per-iteration log row.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub rho: f64,
    pub step: f64,
    pub norm_r: f64,
    pub norm_s: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub psi: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "iter,rho,step,norm_r,norm_s,eps_pri,eps_dual,psi";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.rho,
            self.step,
            self.norm_r,
            self.norm_s,
            self.eps_pri,
            self.eps_dual,
            self.psi
        )
    }
}

/// Solver iterates and per-iteration history.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub z: BlockRow,
    pub y: SymBlockMatrix,
    pub mult: SymBlockMatrix,
    pub rho: f64,
    pub iter: usize,
    /// Warm start for the next Armijo trial step.
    pub step_warm: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// Iterations on which the Armijo search exhausted its budget.
    pub stalls: usize,
}

/// Result of the projected-gradient `Z` step.
#[derive(Debug, Clone)]
pub struct ZStep {
    pub z: BlockRow,
    /// Accepted step size (0 on stall).
    pub step: f64,
    pub stalled: bool,
    pub backtracks: usize,
}

/// Primal/dual residual norms and their tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub norm_r: f64,
    pub norm_s: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
}

impl Residuals {
    pub fn within_tolerance(&self) -> bool {
        self.norm_r <= self.eps_pri && self.norm_s <= self.eps_dual
    }
}

/// Projected-gradient step on `Z` with Armijo backtracking along the
/// projection arc. Trial points where the objective is not evaluable (Schur
/// complement leaves the PD cone) are rejected and the step shrinks. On
/// budget exhaustion the iterate is returned unchanged with `stalled` set.
pub fn z_update(state: &SolverState, c: &SymBlockMatrix, config: &SolverConfig) -> Result<ZStep> {
    let grad = lagrangian_grad_z(&state.z, &state.y, &state.mult, state.rho, c, config.lambda)?;
    let l_current = lagrangian(&state.z, &state.y, &state.mult, state.rho, c, config.lambda)?;
    let bound = config.bound();
    let mut t = state.step_warm;
    let mut backtracks = 0;
    while backtracks < config.armijo.max_backtracks {
        let candidate = project_c1(&state.z.scaled_add(-t, &grad), bound);
        match lagrangian(&candidate, &state.y, &state.mult, state.rho, c, config.lambda) {
            Err(Error::NotPositiveDefinite) | Err(Error::SingularBlock) => {}
            Err(e) => return Err(e),
            Ok(l_trial) => {
                let decrease = crate::blockmat::inner_m(&grad, &candidate.sub(&state.z))?;
                if l_trial <= l_current + config.armijo.sigma * decrease {
                    return Ok(ZStep {
                        z: candidate,
                        step: t,
                        stalled: false,
                        backtracks,
                    });
                }
            }
        }
        t *= config.armijo.beta;
        backtracks += 1;
    }
    Ok(ZStep {
        z: state.z.clone(),
        step: 0.0,
        stalled: true,
        backtracks,
    })
}

/// Closed-form `Y` update: the minimizer of the augmented Lagrangian over
/// the PSD cone, `Y = project_psd(T(Z) + lambda I + M / rho)`.
pub fn y_update(state: &SolverState, config: &SolverConfig) -> Result<SymBlockMatrix> {
    let arg = toeplitz(&state.z)
        .shift_diag(config.lambda)
        .scaled_add(1.0 / state.rho, &state.mult);
    project_psd(&arg)
}

/// Multiplier update `M - rho (Y - T(Z) - lambda I)` using the freshly
/// updated `Z` and `Y`.
pub fn m_update(state: &SolverState, config: &SolverConfig) -> SymBlockMatrix {
    let gap = state
        .y
        .sub(&toeplitz(&state.z))
        .shift_diag(-config.lambda);
    state.mult.scaled_add(-state.rho, &gap)
}

/// Residual norms after an iteration: `r = Y - T(Z) - lambda I` in the
/// Frobenius norm, `s = rho D(Y - Y_prev)` in the block-row norm, plus the
/// tolerances
/// `eps_pri  = m(p+1) eps_abs + eps_rel max{lambda sqrt(m(p+1)), |T(Z)|_F, |Y|_F}`,
/// `eps_dual = m sqrt(p+1) eps_abs + eps_rel |D(M)|_F`.
pub fn residuals(
    y_prev: &SymBlockMatrix,
    state: &SolverState,
    config: &SolverConfig,
) -> Residuals {
    let m = state.y.m() as f64;
    let p = state.y.p() as f64;
    let n = m * (p + 1.0);
    let tz = toeplitz(&state.z);
    let gap = state.y.sub(&tz).shift_diag(-config.lambda);
    let norm_r = gap.norm_fro();
    let norm_s = state.rho * adjoint(&state.y.sub(y_prev)).norm();
    let eps_pri = n * config.eps_abs
        + config.eps_rel
            * (config.lambda * n.sqrt())
                .max(tz.norm_fro())
                .max(state.y.norm_fro());
    let eps_dual =
        m * (p + 1.0).sqrt() * config.eps_abs + config.eps_rel * adjoint(&state.mult).norm();
    Residuals {
        norm_r,
        norm_s,
        eps_pri,
        eps_dual,
    }
}

/// Runs the ADMM loop on `C = T(R_hat)`. Terminates when both residuals
/// fall below their tolerances, or at `max_iter` with `converged = false`.
pub fn solve(c: &SymBlockMatrix, config: &SolverConfig) -> Result<SolverState> {
    solve_with(c, config, |_| {})
}

/// [`solve`] with a per-iteration sink for streaming the log.
pub fn solve_with(
    c: &SymBlockMatrix,
    config: &SolverConfig,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<SolverState> {
    config.validate()?;
    let (m, p) = (c.m(), c.p());
    psi(c).map_err(|e| {
        Error::InfeasibleData(format!(
            "objective not evaluable at Z = 0 (is C a covariance block Toeplitz matrix?): {e}"
        ))
    })?;

    let mut state = SolverState {
        z: BlockRow::zeros(m, p),
        y: SymBlockMatrix::scaled_identity(m, p, config.lambda),
        mult: SymBlockMatrix::zeros(m, p),
        rho: config.rho0,
        iter: 0,
        step_warm: config.armijo.t_init,
        history: Vec::new(),
        converged: false,
        stalls: 0,
    };

    for k in 0..config.max_iter {
        let mut accepted_step = 0.0;
        for _ in 0..config.n_inner {
            let zs = z_update(&state, c, config)?;
            state.z = zs.z;
            if zs.stalled {
                state.stalls += 1;
                state.step_warm = config.armijo.t_init;
                break;
            }
            accepted_step = zs.step;
            state.step_warm = (zs.step * 2.0).min(1e8);
        }
        debug_assert!(c1_violation(&state.z, config.bound()) <= 1e-9);

        let y_next = y_update(&state, config)?;
        let y_prev = std::mem::replace(&mut state.y, y_next);
        state.mult = m_update(&state, config);

        let res = residuals(&y_prev, &state, config);
        let psi_val = psi(&c.add(&toeplitz(&state.z)))?;
        state.iter = k + 1;
        let record = IterationRecord {
            iter: k + 1,
            rho: state.rho,
            step: accepted_step,
            norm_r: res.norm_r,
            norm_s: res.norm_s,
            eps_pri: res.eps_pri,
            eps_dual: res.eps_dual,
            psi: psi_val,
        };
        on_iteration(&record);
        state.history.push(record);

        if res.within_tolerance() {
            state.converged = true;
            break;
        }
        state.rho = (state.rho * config.tau).min(config.rho_max);
    }
    Ok(state)
}
