//! Recovery of linear physical-to-DRAM address mappings from row-buffer
//! conflict timings, plus a synthetic mapping simulator for validating the
//! solvers at desk scale.
//!
//! The pipeline has two phases. Conflict-labeled address pairs feed a
//! GF(2) difference matrix whose nullspace is the bank/channel mask basis;
//! same-row pairs from a second, bank-constrained measurement round feed an
//! analogous system for the row masks, finished by a rank-aware minimal
//! weight basis search.

pub mod bank_solver;
pub mod bounds;
pub mod gf2;
pub mod mapping;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod row_solver;
pub mod simulator;
pub mod traces;

pub use gf2::{BitMatrix, BitVector};
pub use mapping::{DramLocation, MappingSpec};
pub use simulator::{GenConfig, LatencyModel, PairConstraint};
pub use traces::TraceRecord;
