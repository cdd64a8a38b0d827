//! Hybrid High-Order (HHO) solver for the biharmonic equation in mixed form
//! on general polytopal meshes.
//!
//! The biharmonic problem is split into two Laplacian subproblems coupled
//! through the unknown boundary trace `lambda` of the auxiliary field
//! `omega = -laplace(psi)`. The trace solves a symmetric positive-definite
//! problem on the boundary skeleton, which is handled by a flexible
//! conjugate-gradient iteration; each operator application costs two
//! (statically condensed) HHO Laplacian solves plus one discrete normal
//! derivative. A sparse approximation of the trace operator, built from
//! neighbourhood patches around each boundary unknown, serves as
//! preconditioner.
//!
//! Modules follow the pipeline:
//! - [`mesh`]: polytopal meshes, generators, file I/O, neighbourhood patches
//! - [`quadrature`]: segment/polygon rules by sub-triangulation
//! - [`basis`]: scaled monomial bases and L2 projectors
//! - [`hho`]: local operators, static condensation, Poisson solves
//! - [`trace`]: boundary-polynomial vectors, liftings, discrete normal derivative
//! - [`biharmonic`]: the splitting scheme and its outer iteration
//! - [`precond`]: the patch-based sparse preconditioner
//! - [`krylov`]: flexible CG, BiCGSTAB, sparse Cholesky
//! - [`dense`]: dense reference assemblies used for verification

pub mod basis;
pub mod biharmonic;
pub mod dense;
pub mod hho;
pub mod krylov;
pub mod mesh;
pub mod poly;
pub mod precond;
pub mod quadrature;
pub mod trace;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("basis conditioning error: {0}")]
    Conditioning(String),
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("preconditioner application failed: {0}")]
    Precond(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
