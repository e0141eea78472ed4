//! Symmetry analysis engine for nonlinear diffusion-convection equations
//! of the form `f(x) u_t = (D(u) u_x)_x + K(u) u_x`.
//!
//! The crate bundles a small symbolic kernel, the domain model (class
//! equations, vector fields, point transformations), Lie invariance
//! machinery with two independent oracles, the equivalence-group toolkit,
//! a machine-readable catalog of classification cases, reduction schemes
//! and exact solutions, and the numeric verification layer shared by all
//! checks.

pub mod error;
pub mod expr;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod equivalence;
pub mod reduction;
pub mod symmetry;
pub mod verify;

pub use error::{Error, Result};
pub use expr::Expr;
pub use grid::Grid;
pub use model::{ClassEquation, Domain, PointTransformation, VectorField};
