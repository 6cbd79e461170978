//! Entropic optimal transport on networks with departure–arrival time
//! constraints and nodal flow-rate capacities.
//!
//! The crate is organised bottom-up:
//! * [`grid`] discretises the horizon and holds time measures,
//! * [`network`] describes the graph, boundary laws, capacities and paths,
//! * [`feasibility`] decides whether departure/arrival laws are compatible,
//! * [`kernels`] builds Gibbs kernels and checks cost structure,
//! * [`sinkhorn`] is the path-wise message-passing solver,
//! * [`oracle`] is a dense-tensor reference solver for small instances,
//! * [`scenarios`] reads, writes and generates scenario files.

pub mod error;
pub mod feasibility;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod network;
pub mod oracle;
pub mod scenarios;
pub mod sinkhorn;

pub use error::{Error, Result};
pub use feasibility::{check_da_feasibility, monotone_rearrangement, FeasibilityVerdict};
pub use grid::{gaussian_mixture, JointMeasure, Measure, MixtureComponent, TimeGrid};
pub use network::{CapacityProfile, Edge, NodeRole, Path, TransportNetwork};
pub use sinkhorn::{
    solve, ConvergenceReport, Diagnostics, Domain, JointTarget, LinearFit, Mode, PlanCell, PlanQuery, Series, SinkhornState, Solution,
    Solver, SolverConfig, SweepMode,
};
