//! Training-free projection of approximate trajectories of dynamical systems
//! onto the feasible set of their discretized governing equations.
//!
//! The crate bundles three reference systems (Lorenz-63, Kuramoto–Sivashinsky
//! and 2-D Navier–Stokes in vorticity form), exact tangent and adjoint
//! products of their trajectory residuals, matrix-free Krylov solvers, an
//! L-BFGS minimizer and the projection operators built on top of them.

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod integrators;
pub mod io;
pub mod krylov;
pub mod lbfgs;
pub mod linalg;
pub mod projections;
pub mod spectral;
pub mod systems;

pub use error::{Error, Result};
pub use grid::{GridSpec, SystemKind, Trajectory};
