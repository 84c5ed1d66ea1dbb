//! Distributed pseudo-tree optimization (DPOP) for DCOPs, simulated in a
//! single process with deterministic message delivery.
//!
//! The three phases are: a DFS builds a pseudo-tree, UTIL tables flow up it,
//! and optimal values flow back down. Tables are sparse: a missing row is an
//! infeasible combination, which is what keeps hard-constrained instances
//! small.

pub mod dpop;
pub mod expr;
pub mod fixtures;
pub mod format;
pub mod generators;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod pseudotree;
pub mod tables;
pub mod wire;

pub use dpop::{solve, EngineConfig, RootChoice, SolveError};
pub use harness::{Metrics, RunReport, Status};
pub use model::{AgentId, Assignment, ConstraintId, Dcop, DcopBuilder, Domain, Mode, Utility, VarId};
pub use tables::UtilityTable;
