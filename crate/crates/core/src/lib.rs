//! Age-structured predator-prey chemostat: equilibrium analysis, the
//! (eta, psi) transformation, dilution feedback laws, Lyapunov and
//! region-of-attraction tools, and two cross-checking simulators.
//!
//! Species index 0 is the prey, index 1 the predator. Time and age share
//! units and the simulation step always equals the age spacing.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod controllers;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod simulate;
pub mod transform;
pub mod verify;

pub use controllers::{ControllerSpec, GainsA, GainsB, SensorSpec};
pub use equilibrium::{compute_equilibrium, solve_lotka_sharpe, Equilibrium, LotkaSharpeSolver};
pub use error::{Error, Result};
pub use lyapunov::{LyapConfig, LyapMode, RoaEstimate, SigmaFit};
pub use model::{
    bc_residual, build_kernels, quad, AgeGrid, GridFn, KernelSet, KernelShape, PopulationState,
    PREDATOR, PREY,
};
pub use simulate::{IcShape, IcSpec, Plant, SimConfig, Solver, Trajectory};
pub use transform::{AdjointData, HistoryBuffer, TransformedState};
