//! Optimal control of bilinear systems `x' = (A + u B) x` with a quadratic
//! terminal criterion and a bounded scalar control.
//!
//! The crate provides RK4 trajectory and costate integration, maximum-principle
//! diagnostics (switching function, singular-arc analysis through commutator
//! chains), and two iterative improvement engines: Krotov's global method and a
//! projected adjoint-gradient method.

pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod format;
pub mod grid;
pub mod improve;
pub mod linalg;
pub mod pmp;
pub mod problem;
pub mod structure;

pub use dynamics::{
    integrate_dual, integrate_forward, invariant_drift, objective, reachability_bounds, simulate,
    ObjectiveValue, ReachabilityBounds,
};
pub use error::{Error, Result};
pub use grid::{ControlSignal, GridSpec, Trajectory};
pub use improve::{
    ensure_concave_terminal, gradient_iteration, improvement_certificate, krotov_iteration,
    krotov_iteration_bang_only, solve, IterationRecord, Method, SegmentKind, SingularMode,
    SolverConfig, SolverReport, Termination,
};
pub use linalg::{commutator, frobenius_norm, Matrix, Vector};
pub use pmp::{
    commutator_chain, extremal_control, pmp_residual, singular_control_value,
    singular_free_certificate, switching_value, terminal_switching, transversality_costate,
    CommutatorChain, Definiteness, Extremal, PmpResidual,
};
pub use problem::{validate_problem, ProblemFile, ProblemSpec, ValidationReport};
pub use structure::{block_to_complex, detect_block_structure, BlockHamiltonianStructure};
