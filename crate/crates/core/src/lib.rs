//! Distributed adaptive signal fusion (DASF).
//!
//! A network of sensor nodes cooperatively solves a spatial-filter design
//! problem `min f(Xᵀy, XᵀB)` while only ever exchanging linearly compressed
//! signal batches. At each iteration one node (the updating node) receives
//! fused, `Q`-channel summaries from each of its neighbours, solves a small
//! compressed copy of the network-wide problem with the same solver that
//! would be used centrally, and sends back `Q×Q` matrices with which every
//! other node right-multiplies its local filter block.
//!
//! The crate is organised as follows:
//!
//! * [`network`]: graph generators and the token-flood pruning into a tree
//!   rooted at the updating node.
//! * [`signals`]: mixture-model signal generators and sample-average
//!   statistics.
//! * [`sfo`]: the signal-fusion problem description and the shipped solvers
//!   (MMSE, QCQP, trace ratio, sphere-constrained QP).
//! * [`engine`]: the iteration itself: compression, sum-and-forward fusion,
//!   transition matrices, local-instance assembly and the global update.

pub mod engine;
pub mod linalg;
pub mod network;
pub mod sfo;
pub mod signals;

pub use engine::{
    dasf_run, dasf_step, ConvergenceRecord, FilterState, IterationRecord, Reference, RunConfig,
    UpdateScheme,
};
pub use network::{NetworkGraph, PrunedTree};
pub use sfo::{CompressedInstance, ProblemKind, SfoProblem, SolveOutcome};
pub use signals::{SampleBatch, SignalModel};

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
