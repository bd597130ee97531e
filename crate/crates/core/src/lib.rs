//! Hierarchical divide-and-conquer solver for the capacitated vehicle routing
//! problem.
//!
//! A global policy partitions the customers into capacity-feasible subgraphs;
//! `K` levels of local repartitioning then revisit pairs of neighboring
//! subgraphs; finally each subgraph is routed as a single tour.

pub mod bench;
pub mod error;
pub mod hierarchy;
pub mod instance;
pub mod perm;
pub mod policy;
pub mod solution;
pub mod subproblem;
pub mod svg;
pub mod train;

pub use error::{HlgpError, Result};
pub use instance::{DistributionKind, DistributionSpec, Instance};
pub use perm::PermSolverConfig;
pub use policy::{DecodeMode, EdgeScorePolicy};
pub use solution::{PartitionSolution, RoutePlan};
pub use subproblem::Subproblem;
