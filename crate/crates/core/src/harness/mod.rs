//! Experiment harness: run configuration, training/evaluation loops,
//! metrics and reports, multi-split experiment suites, and the CLI that
//! exposes them.

pub mod cli;
pub mod commands;
pub mod config;
pub mod eval;
pub mod experiment;
pub mod metrics;
pub mod train;
