//! Bucket-brigade QRAM simulation and amplitude-encoding state preparation.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`preprocessing`] pads a real matrix to power-of-two dimensions and
//!    builds the segment tree of squared entries.
//! 2. [`layout`] packs the tree into `K` memory cells, each holding a sign bit
//!    and one sibling pair of tree nodes.
//! 3. [`qram`] models the switch tree of a bucket-brigade QRAM: routing,
//!    bus traversal, XOR copies and step accounting.
//! 4. [`quantum_ops`] and [`state_prep`] run the level-by-level preparation
//!    loop on a sparse statevector and check the result against `A / ‖A‖_F`.

pub mod error;
pub mod layout;
pub mod preprocessing;
pub mod qram;
pub mod quantum_ops;
pub mod state_prep;

pub use error::{Error, Result};
pub use layout::{FixedPointFormat, MemoryCell, Precision};
pub use preprocessing::{DenseMatrix, SegTree};
pub use qram::{FieldSelector, QramTree, StepCounters};
pub use quantum_ops::{BasisLabel, RegisterLayout, SparseState};
pub use state_prep::{prepare_state, CostReport, PrepConfig, PrepResult, VerificationReport};
