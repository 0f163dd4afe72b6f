//! Command-line companion to `twoway-core`: TCP cluster transport, LIBSVM
//! ingestion, trace CSV files, run configuration and the benchmark harness.

pub mod bench;
pub mod config;
pub mod libsvm;
pub mod runner;
pub mod tcp;
pub mod trace_csv;
