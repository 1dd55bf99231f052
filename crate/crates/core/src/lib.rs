//! Decentralized solution of multi-agent mixed-integer linear programs.
//!
//! Each agent `i` owns a private block `min c_i'x_i s.t. D_i x_i <= d_i`,
//! with some coordinates integer, and all agents share one coupling
//! constraint `sum_i A_i x_i <= b`. The coordinator dualizes the coupling
//! constraint and runs a projected dual subgradient method in which the
//! coupling right-hand side is tightened by an amount learned from the
//! agent solutions actually visited. After finitely many iterations the
//! agent iterates are jointly feasible for the original MILP.
//!
//! Crate layout:
//!
//! * [`model`]: problem data, validation and the JSON instance format.
//! * [`simplex`]: dense bounded-variable primal simplex.
//! * [`milp`]: depth-first branch and bound on top of [`simplex`].
//! * [`tightening`]: adaptive and worst-case tightening quantities.
//! * [`coordinator`]: the iterative decentralized scheme and its traces.
//! * [`certificates`]: Slater margins, suboptimality bounds, and the
//!   worst-case-tightening baseline.
//! * [`pev`]: plug-in electric vehicle charging benchmark.
//! * [`synth`]: seeded random instance families used by experiments.

pub mod certificates;
pub mod coordinator;
pub mod export;
pub mod matrix;
pub mod milp;
pub mod model;
pub mod pev;
pub mod simplex;
pub mod synth;
pub mod tightening;

pub use matrix::Matrix;
pub use model::{AgentProblem, CoupledInstance, StepSchedule};
