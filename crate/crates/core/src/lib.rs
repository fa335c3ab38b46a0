//! Weight-space analysis and merging of fine-tuning updates.
//!
//! The crate measures how an update `ΔW` to a base weight matrix `W_I` sits
//! relative to the base (stable rank, column/row-space overlap), merges
//! low-rank adapters into base checkpoints with optional projection onto the
//! orthogonal complement of the base's dominant singular subspaces, and
//! provides differentiable overlap penalties plus a small seeded harness that
//! exercises the whole pipeline end to end.

pub mod analysis;
pub mod error;
pub mod io;
pub mod linalg;
pub mod merge;
pub mod penalty;
pub mod scoring;
pub mod toy;

pub use error::{Error, ErrorKind, Result};
pub use io::{AdapterPair, DeltaSource, NamedTensorMap};
pub use linalg::{Matrix, TruncatedSvd};
