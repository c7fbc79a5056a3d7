//! QoS-aware sharing of radio infrastructure between clients: the model,
//! robust linearization of per-frame reliability constraints, the
//! drift-plus-penalty scheduler and a frame-level simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod model;
pub mod pbdist;
pub mod policy;
pub mod polyhedron;
pub mod robust;
pub mod sim;
pub mod solve;

pub use error::{Error, Result};
pub use model::{
    ArrivalModel, ArrivalProcess, Link, NetworkTopology, PriorMode, QosSpec, QueueState, SchedulePrior,
};
pub use pbdist::BernoulliVector;
pub use policy::{Policy, PolicyConfig, PolicyKind, VRule};
pub use polyhedron::{Polyhedron, RowKind};
pub use robust::{build_linearized_polyhedron, check_linearized_feasible, gamma_level, protection_b};
pub use sim::{run_scenario, RunConfig, RunResult, Scenario};
pub use solve::{lp_solve, SolveOptions, UtilityFunction};
