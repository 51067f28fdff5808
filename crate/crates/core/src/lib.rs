//! Numerical toolkit for weighted degenerate p-Laplacian evolution problems
//! with power-type reactions: weights and their class checks, a
//! finite-volume discretization, the first eigenpair, implicit time
//! stepping with blow-up detection, and the diagnostics used to compare
//! runs against closed-form predictions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod config;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod plap;
pub mod quadrature;
pub mod timestep;
pub mod weights;

pub use eigen::{smallest_eigenpair, EigenOptions, EigenPair, Normalization};
pub use error::{Error, Result};
pub use grid::{build_grid, Field, Grid, GridMode};
pub use plap::{apply_plaplacian, energy, PLaplacian, ReactionSpec};
pub use timestep::{run_simulation, step_implicit, OutcomeKind, ProblemSpec, RunOutcome, StepControls, Trajectory};
pub use weights::{check_doubling, check_muckenhoupt, RadialTable, WeightKind, WeightSpec};
