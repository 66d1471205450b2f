//! Numerical toolkit for the thin obstacle (Signorini) problem of the
//! weighted operator div(|y|^a grad u), a in (-1, 1), posed on the upper
//! half box [-R,R]^n x (0,Y) with the constraint living on the thin set
//! {y = 0}.  The same machinery drives the time-dependent problem
//! |y|^a u_t - div(|y|^a grad u) = |y|^a F via backward Euler steps.
//!
//! Module map:
//! - [`grid`]: weighted tensor-product grid, discrete operator, traces.
//! - [`elliptic`]: projected SOR and penalized solvers for the stationary
//!   variational inequality.
//! - [`parabolic`]: implicit time marching, reduction checks, bounds on u_t.
//! - [`functionals`]: monitored quantities on balls around thin points
//!   (height H, energy D, frequency, Weiss-type balanced energies, their
//!   truncated and backward-heat counterparts) plus monotonicity audits.
//! - [`free_boundary`]: contact-set partition, point classification, growth
//!   and nondegeneracy fits, graph reconstruction of the free boundary.
//! - [`reference`]: closed-form model solutions, the fractional
//!   Dirichlet-to-Neumann identity check, extension constants.
//! - [`problems`]: the built-in problem library used by the CLI and tests.
//! - [`config`], [`io`], [`epi`], [`acceptance`]: run configuration,
//!   artifact formats, the homogeneous-competitor energy check, and the
//!   acceptance matrix behind `signorini verify`.

pub mod acceptance;
pub mod config;
pub mod elliptic;
pub mod epi;
pub mod free_boundary;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod parabolic;
pub mod problems;
pub mod reference;

pub use grid::{Field, GridSpec, ThinField, WeightedGrid};

/// Crate-wide error type.  CLI exit codes: config errors map to 1, solver
/// failures to 2, acceptance failures to 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },

    #[error("bad grid spec: {0}")]
    Grid(String),

    #[error("solver did not converge: {iters} sweeps, pde residual {pde_residual:.3e}, complementarity residual {comp_residual:.3e}")]
    NonConvergence {
        iters: usize,
        pde_residual: f64,
        comp_residual: f64,
    },

    #[error("incompatible problem data: {0}")]
    Incompatible(String),

    #[error("requested radius {needed} exceeds usable domain radius {available}")]
    DomainExceeded { needed: f64, available: f64 },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("free boundary is not a graph along the requested direction: {0}")]
    NonGraphical(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: usage and configuration problems are
    /// 1, numerical failures are 2.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. }
            | Error::Grid(_)
            | Error::Incompatible(_)
            | Error::Snapshot(_)
            | Error::Io(_) => 1,
            Error::NonConvergence { .. }
            | Error::DomainExceeded { .. }
            | Error::EmptySample(_)
            | Error::NonGraphical(_)
            | Error::Calibration(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
