//! Weakly-compressible SPH: kernel, rheology, neighbour search and solver.

pub mod kernel;
pub mod neighbors;
pub mod rheology;
pub mod solver;

pub use kernel::{kernel_eval, KernelSpec};
pub use neighbors::{brute_force_neighbors, NeighborGrid};
pub use rheology::{
    equation_of_state, hbp_apparent_viscosity, second_invariant_radicand, shear_rate_magnitude, shear_rate_tensor, tait_pressure, Mat3,
    RheologyParams,
};
pub use solver::{Accelerations, BlowUpError, BlowUpReason, ForceField, Physics, RigidBody, SolverError, SolverState, StepDiagnostics};
