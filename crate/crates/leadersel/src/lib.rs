//! Leader selection in multi-agent networks with switching topologies.
//!
//! The crate selects a minimum-size leader set for a high-order linear
//! multi-agent network whose interaction graph switches among a finite set of
//! topologies, certifies reference tracking under topology-dependent dwell
//! times, and simulates the resulting switched error dynamics.
//!
//! Modules follow the pipeline:
//! - [`graph`]: digraphs, Laplacians, union graphs, reachability.
//! - [`sysmodel`]: the switched model and every mode/shifted matrix.
//! - [`spectral`]: eigen-structure, controllability spans, the selection
//!   metric and its submodularity-ratio bounds.
//! - [`select`]: greedy selection algorithms and optimality certificates.
//! - [`certify`]: gain synthesis and the full dwell-time certificate.
//! - [`simulate`]: switching-signal generation and exact propagation.
//! - [`config`] / [`report`] / [`experiment`]: CLI-facing plumbing.

pub mod certify;
pub mod config;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod instances;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod select;
pub mod simulate;
pub mod spectral;
pub mod sysmodel;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
