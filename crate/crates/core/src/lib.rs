//! Fast divergence-free spectral solver for the curl-curl problem
//! `curl curl u + kappa u = f` on the square and cube with natural boundary
//! conditions, plus Crank-Nicolson time stepping for the induced Maxwell
//! systems.
//!
//! The trial space is built from generalized Jacobi polynomials so every
//! discrete field is divergence-free pointwise. The linear systems are solved
//! matrix-free by GMRES, preconditioned with a fully diagonalizable auxiliary
//! problem obtained by replacing the stiffness matrix with the inverse of the
//! mass matrix; the preconditioned operator has an eigenvalue-1 invariant
//! subspace of dimension (N-3)^2 in 2D (2(N-3)^3 for the 3D interior block),
//! so iteration counts *fall* as the order N grows.
//!
//! Module map:
//!
//! * [`basis`] - Legendre / generalized Jacobi evaluation and quadrature;
//! * [`operators`] - analytic mass/stiffness matrices and the mass
//!   eigendecomposition;
//! * [`solver2d`], [`solver3d`] - matrix-free operators, auxiliary solves,
//!   preconditioned GMRES;
//! * [`fields`] - right-hand-side projection, field evaluation, divergence
//!   checks, error norms;
//! * [`maxwell`] - Crank-Nicolson time stepping;
//! * [`spectra`] - dense assemblies and invariant-subspace verification;
//! * [`problems`] - built-in benchmark problems with exact sources.
//!
//! The `parallel` feature (on by default) runs the dense kernels on rayon;
//! disabling it gives a bitwise-identical sequential build.

pub mod basis;
pub mod error;
pub mod fields;
mod gmres;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod maxwell;
pub mod operators;
pub mod problems;
pub mod solver2d;
pub mod solver3d;
pub mod spectra;

pub use error::{Error, Result};
pub use linalg::{Matrix, Tensor3};
