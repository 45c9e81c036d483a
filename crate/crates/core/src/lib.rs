//! Fictitious-domain finite elements for fluid–structure interaction with a
//! distributed Lagrange multiplier.
//!
//! The crate assembles and solves the stationary saddle-point system
//!
//! ```text
//! [ A_f   0    C_fᵀ  -B_fᵀ ] [u]   [f]
//! [ 0     A_s -C_sᵀ   0    ] [X] = [g]
//! [-C_f   C_s  0      0    ] [λ]   [d]
//! [ B_f   0    0      0    ] [p]   [0]
//! ```
//!
//! on a fixed fluid triangulation and a non-matching solid triangulation, with
//! the fluid–solid coupling block `C_f` computed either exactly (by clipping
//! the mapped solid mesh against the fluid mesh) or inexactly (one quadrature
//! rule per mapped solid element). On top of that it provides a condition
//! number estimator, error norms, a semi-implicit time march and the study
//! drivers behind the `dlmfd` command line tool.

// Element kernels index several small arrays with the same loop variable.
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod femspace;
pub mod geometry;
pub mod mesh;
pub mod parallel;
pub mod solver;
pub mod sparse;
pub mod timestepping;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Point = [f64; 2];

/// A 2×2 matrix stored row-major: `m[i][j]`.
pub type Mat2 = [[f64; 2]; 2];
