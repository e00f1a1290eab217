//! Front end for the `bbqram` simulator: matrix loading, JSON reports and the
//! seeded self-check suite.
//!
//! The binary is a thin wrapper over [`commands`]; everything it does can be
//! driven from tests through this crate.

pub mod commands;
pub mod input;
pub mod report;
pub mod suite;

pub use commands::{cmd_prepare, cmd_suite, cmd_trace, Mode, Outcome, RunManifest};
pub use input::{load_matrix, parse_csv, parse_json, InputFormat};
