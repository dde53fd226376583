//! Sparse plus low-rank graphical models of multivariate autoregressive
//! processes.
//!
//! Given sample covariance lags of an observed vector process, this crate
//! solves a regularized maximum-entropy problem in its dual form with ADMM,
//! then recovers a sparse conditional-dependence graph among the observed
//! channels together with a low-rank latent contribution to the inverse
//! power spectral density. The latent part is summarized by
//! frequency-dependent components obtained from a pointwise eigenvalue
//! decomposition.
//!
//! Pipeline: [`data::covariance_lags`] -> [`blockmat::toeplitz`] ->
//! [`solver::solve`] -> [`model::fit`] -> [`model::spectra`] /
//! [`model::latent_components`].

pub mod blockmat;
pub mod data;
pub mod error;
pub mod model;
pub mod objective;
pub mod projections;
pub mod solver;

pub use blockmat::{adjoint, inner_m, inner_q, toeplitz, BlockRow, SymBlockMatrix};
pub use error::{Error, Result};
pub use model::{
    detect_support, fit, fit_term, fit_with, latent_components, recover_primal, score, spectra,
    FitOptions, SLModel, SpectralFactor,
};
pub use solver::{solve, solve_with, ArmijoParams, IterationRecord, SolverConfig, SolverState};
