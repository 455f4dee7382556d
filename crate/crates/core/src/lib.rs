//! Component-based ADMM for the second-order cone relaxation of AC optimal
//! power flow.
//!
//! Pipeline: [`case_io`] reads a case, [`network`] converts it to per-unit
//! branch coefficients and the consensus layout, [`local_solvers`] holds the
//! generator, branch and bus subproblems, and [`admm`] iterates them.
//! [`oracle`] produces reference answers.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Small dense kernels read better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod admm;
pub mod case_io;
pub mod cli;
pub mod local_solvers;
pub mod network;
pub mod oracle;

pub use admm::{AlgorithmConfig, Engine, EngineError, Scheme, SolveReport};
pub use case_io::{read_case, CaseData, CaseError};
pub use network::{build_layout, build_network, ConsensusLayout, Network};
