//! Column-partitioned distributed solvers for basis pursuit, LASSO and BPDN
//! (plain, fused and group penalties), together with centralized reference solvers.
//!
//! Each simulated agent owns one column block of `A`. Stage 1 solves a dual of the
//! LASSO/BPDN problem over the agent network; stage 2 solves a ridge-regularized
//! basis-pursuit problem whose dual recovers the primal blocks locally.

pub mod dual;
pub mod error;
pub mod linalg;
pub mod network;
pub mod partition;
pub mod pipeline;
pub mod problem;
pub mod prox;
pub mod reference;
pub mod splitting;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use partition::{make_partition, ColumnPartition, PartitionStrategy};
pub use problem::{ConstraintSet, ProblemKind, ProblemSpec, Regularizer};
