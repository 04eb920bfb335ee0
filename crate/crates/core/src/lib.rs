//! Numerical toolkit for the doubly nonlinear equation
//! `∂ₜu = Δ_p(u^q)` on rotationally symmetric manifolds.

// `!(x > 0.0)` is used on purpose so that NaN fails validation; stencil
// loops index several arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod degiorgi;
pub mod error;
pub mod fit;
pub mod flux;
pub mod geometry;
pub mod grid;
pub mod integrator;
pub mod monitors;
pub mod oracle;
pub mod propagation;
pub mod quadrature;
pub mod suite;

pub use error::{Error, Result};
pub use flux::{LeibensonParams, RegLevel, Regime};
pub use geometry::{ModelManifold, Warping, WarpingTable};
pub use grid::{build_grid, discrete_norm, FluxMode, Grading, Operator, RadialGrid, StateField};
pub use integrator::{ContinuationSchedule, TimeStepConfig, Trajectory};
