//! Data IO, experiment harness and verification suites for `basiskit-core`.
//!
//! - [`libsvm`]: LibSVM parsing and serialization.
//! - [`dataset`]: client partitioning and the bundled a1a-shaped fixture.
//! - [`config`]: JSON run configuration.
//! - [`output`]: CSV run records and SVG charts.
//! - [`exec`]: rayon worker pool for client work.
//! - [`harness`]: runs, cost reports and accounting checks.
//! - [`verify`]: verification suites.

pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod harness;
pub mod libsvm;
pub mod output;
pub mod verify;

pub use config::{DatasetSpec, RunConfig};
pub use error::{DataError, Error, Result};
pub use harness::{cost_report, run, Experiment, Session, Status};
